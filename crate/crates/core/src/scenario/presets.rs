use rayon::prelude::*;

use super::{
    run_scenario, InversionSpec, L2Spec, MeshSpec, Method, NoiseSpec, RunReport, ScenarioConfig, ScenarioError,
    SensorLayout, SensorSpec, SourceGroup, TruthSpec, WindSpec,
};
use crate::fem::AnalyticWind;
use crate::geometry::Rect;
use crate::sources::{Atom, ShapeModel};
use crate::transport::TransportConfig;

pub const PRESET_NAMES: &[&str] = &[
    "baseline",
    "reduced_snr",
    "reduced_sensors_3",
    "reduced_rate",
    "reduced_window",
    "moving_sensor",
    "overlapping",
    "elliptic",
    "continuous",
    "comparison",
    "comparison_l2",
    "plant",
];

/// Degradations of the baseline run by the robustness suite.
pub const ROBUSTNESS_PRESETS: &[&str] =
    &["baseline", "reduced_snr", "reduced_sensors_3", "reduced_rate", "reduced_window", "moving_sensor"];

const BUILDINGS: [Rect; 2] = [Rect::new(0.25, 0.15, 0.5, 0.4), Rect::new(0.6, 0.6, 0.75, 0.85)];
const GYRE_STRENGTH: f64 = 0.5;
const BLOCKING: f64 = 0.05;
const SOURCE: [f64; 2] = [0.35, 0.7];
const RBF_RADIUS: f64 = 0.26;
const BASELINE_ALPHA: f64 = 1000.0;

/// Moving sensor `(0.6, 0.5) + t (-11/60, 83/300) + t^2 (1/60, -19/300)`.
pub const MOVING_TRAJECTORY: [[f64; 2]; 3] = [[0.6, 0.5], [-11.0 / 60.0, 83.0 / 300.0], [1.0 / 60.0, -19.0 / 300.0]];

pub fn preset(name: &str) -> Result<ScenarioConfig, ScenarioError> {
    let mut cfg = baseline();
    cfg.name = name.to_string();
    match name {
        "baseline" => {}
        "reduced_snr" => {
            cfg.noise.level = 0.15;
            // sigma grows fivefold, so the dual shrinks 25-fold
            cfg.inversion.alpha = BASELINE_ALPHA / 25.0;
        }
        "reduced_sensors_3" => {
            cfg.sensors.layout = SensorLayout::List { points: vec![[0.2, 0.55], [0.55, 0.9], [0.9, 0.2]] };
        }
        "reduced_rate" => cfg.sensors.rate = 2.0,
        "reduced_window" => cfg.sensors.window = [2.0, 3.0],
        "moving_sensor" => {
            let [c0, c1, c2] = MOVING_TRAJECTORY;
            cfg.sensors.layout = SensorLayout::Moving { c0, c1, c2 };
        }
        "overlapping" => {
            cfg.noise.level = 0.01;
            cfg.truth.initial.as_mut().expect("baseline has initial sources").atoms =
                vec![Atom::new([0.35, 0.7], 1.0), Atom::new([0.45, 0.7], 1.0)];
        }
        "elliptic" => {
            let shape = ShapeModel::Elliptic { eta: 1.0, gamma: 1e-3, beta: None };
            cfg.truth.initial = Some(SourceGroup { shape, atoms: vec![Atom::new(SOURCE, 1.0)] });
        }
        "continuous" => {
            cfg.truth.initial = None;
            cfg.truth.continuous = Some(SourceGroup { shape: ShapeModel::Dirac, atoms: vec![Atom::new(SOURCE, 0.2)] });
        }
        "comparison" | "comparison_l2" => {
            comparison(&mut cfg);
            if name == "comparison_l2" {
                cfg.inversion.method = Method::L2;
            }
        }
        "plant" => return Ok(plant()),
        other => return Err(ScenarioError::UnknownPreset(other.to_string())),
    }
    Ok(cfg)
}

fn baseline() -> ScenarioConfig {
    let grid = vec![0.2, 0.55, 0.9];
    ScenarioConfig {
        name: "baseline".into(),
        mesh: MeshSpec::Generated { bounds: Rect::unit(), nx: 64, ny: 64, holes: BUILDINGS.to_vec() },
        wind: WindSpec::Analytic {
            field: AnalyticWind::DoubleGyre { strength: GYRE_STRENGTH },
            blocking_length: Some(BLOCKING),
        },
        transport: TransportConfig::new(0.001, 0.05, 100),
        truth: TruthSpec {
            initial: Some(SourceGroup {
                shape: ShapeModel::Rbf { r: RBF_RADIUS, eps: 0.01, flip_exponent: false },
                atoms: vec![Atom::new(SOURCE, 1.0)],
            }),
            continuous: None,
        },
        sensors: SensorSpec { layout: SensorLayout::Grid { xs: grid.clone(), ys: grid }, window: [1.0, 5.0], rate: 10.0 },
        noise: NoiseSpec { level: 0.03, seed: 1 },
        inversion: InversionSpec {
            method: Method::Pdap,
            alpha: BASELINE_ALPHA,
            sigma: None,
            tol_abs: None,
            max_iter: 50,
            prune_rel: 1e-10,
            merge_radius: None,
            shape_i: None,
            shape_c: None,
            l2: None,
        },
    }
}

fn comparison(cfg: &mut ScenarioConfig) {
    let axis: Vec<f64> = (0..16).map(|i| 0.05 + 0.06 * i as f64).collect();
    cfg.sensors = SensorSpec { layout: SensorLayout::Grid { xs: axis.clone(), ys: axis }, window: [1.0, 5.0], rate: 2.0 };
    cfg.truth.initial = Some(SourceGroup {
        shape: ShapeModel::Rbf { r: 0.1, eps: 0.01, flip_exponent: false },
        atoms: vec![Atom::new([0.3, 0.7], 1.0), Atom::new([0.8, 0.3], 1.0), Atom::new([0.15, 0.25], 1.0)],
    });
    cfg.inversion.alpha = BASELINE_ALPHA;
    cfg.inversion.l2 = Some(L2Spec { eta: 1000.0, gamma: 1.0, beta: None, cg_tol: 1e-6, cg_max: 200, peak_fraction: 0.2 });
}

/// 500 m site with six buildings and eight instantaneous point releases.
fn plant() -> ScenarioConfig {
    let buildings = vec![
        Rect::new(60.0, 60.0, 140.0, 120.0),
        Rect::new(200.0, 80.0, 260.0, 180.0),
        Rect::new(320.0, 60.0, 440.0, 110.0),
        Rect::new(80.0, 300.0, 160.0, 360.0),
        Rect::new(240.0, 260.0, 300.0, 400.0),
        Rect::new(360.0, 320.0, 440.0, 420.0),
    ];
    let sources = [
        [40.0, 200.0],
        [180.0, 230.0],
        [310.0, 200.0],
        [460.0, 240.0],
        [120.0, 440.0],
        [400.0, 180.0],
        [330.0, 460.0],
        [470.0, 80.0],
    ];
    let axis: Vec<f64> = (0..13).map(|i| 15.0 + 39.0 * i as f64).collect();
    ScenarioConfig {
        name: "plant".into(),
        mesh: MeshSpec::Generated { bounds: Rect::new(0.0, 0.0, 500.0, 500.0), nx: 100, ny: 100, holes: buildings },
        wind: WindSpec::Analytic { field: AnalyticWind::DoubleGyre { strength: 1.5 }, blocking_length: Some(25.0) },
        transport: TransportConfig::new(2.0, 0.5, 240),
        truth: TruthSpec {
            initial: Some(SourceGroup {
                shape: ShapeModel::Dirac,
                atoms: sources.iter().map(|&p| Atom::new(p, 1000.0)).collect(),
            }),
            continuous: None,
        },
        sensors: SensorSpec { layout: SensorLayout::Grid { xs: axis.clone(), ys: axis }, window: [2.0, 120.0], rate: 2.0 },
        noise: NoiseSpec { level: 0.03, seed: 7 },
        inversion: InversionSpec {
            method: Method::Pdap,
            alpha: 0.5,
            sigma: None,
            tol_abs: None,
            max_iter: 100,
            prune_rel: 1e-10,
            merge_radius: Some(40.0),
            shape_i: None,
            shape_c: None,
            l2: None,
        },
    }
}

/// Runs the robustness presets concurrently, in `ROBUSTNESS_PRESETS` order.
pub fn robustness_suite(seed: Option<u64>) -> Result<Vec<RunReport>, ScenarioError> {
    ROBUSTNESS_PRESETS
        .par_iter()
        .map(|name| Ok(run_scenario(&preset(name)?, seed)?.report))
        .collect()
}

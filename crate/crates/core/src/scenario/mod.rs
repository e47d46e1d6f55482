//! Scenario configuration, synthetic data, end-to-end runs and studies.

mod compare;
mod config;
mod convergence;
mod presets;
mod report;
mod verify;

use std::fs::File;
use std::io::BufReader;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

pub use compare::{compare_methods, ComparisonRow, ComparisonTable};
pub use config::{
    InversionSpec, L2Spec, MeshSpec, Method, NoiseSpec, ScenarioConfig, SensorLayout, SensorSpec, SourceGroup, TruthSpec,
    WindSpec,
};
pub use convergence::{convergence_study, gaussian_reference, ConvergenceConfig, ConvergenceRow, ConvergenceTable};
pub use presets::{preset, robustness_suite, MOVING_TRAJECTORY, PRESET_NAMES, ROBUSTNESS_PRESETS};
pub use verify::{conservation_check, duality_check, ConservationReport, DualityReport};
pub use report::{l2_peaks, recovery_metrics, L2Report, RecoveryMetrics, RunOutcome, RunReport, RunTiming, SourceMetric};

use crate::fem::{read_wind, Blocking, FemError, WindField};
use crate::geometry::{Point, Rect};
use crate::inversion::{l2_invert, pdap_run, InversionError, InversionProblem, L2Config, PdapConfig};
use crate::mesh::{build_rect_mesh, classify_boundary, read_mesh, snapped_holes, MeshError, TriMesh, DEFAULT_NORMAL_TOL};
use crate::sources::{MeasureKind, ShapeOperator, SourceError, SparseMeasure};
use crate::transport::{sample_times, Observation, SensorPlan, TransportError, TransportModel};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    Config(String),
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("sensor trajectory leaves the domain at t = {times:?}")]
    TrajectoryOutside { times: Vec<f64> },
    #[error("{stage}: {source}")]
    Stage { stage: &'static str, source: Box<ScenarioError> },
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Source(#[from] SourceError),
    #[error(transparent)]
    Inversion(#[from] InversionError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T, ScenarioError>;
}

impl<T, E: Into<ScenarioError>> StageExt<T> for Result<T, E> {
    fn stage(self, stage: &'static str) -> Result<T, ScenarioError> {
        self.map_err(|e| ScenarioError::Stage { stage, source: Box::new(e.into()) })
    }
}

/// Assembled model, wind and sensor plan of a scenario.
pub struct Scenario {
    pub config: ScenarioConfig,
    pub model: TransportModel,
    pub wind: WindField,
    pub plan: SensorPlan,
    /// Snapped holes of a generated mesh.
    pub buildings: Vec<Rect>,
}

impl Scenario {
    pub fn build(cfg: &ScenarioConfig) -> Result<Self, ScenarioError> {
        cfg.validate()?;
        let (mesh, buildings) = build_mesh(&cfg.mesh).stage("mesh")?;
        let wind = build_wind(&mesh, &cfg.wind, &buildings).stage("wind")?;
        let markers = classify_boundary(&mesh, &wind, DEFAULT_NORMAL_TOL);
        let mesh = mesh.with_boundary_markers(&markers).stage("mesh")?;
        let plan = build_plan(&mesh, &cfg.sensors, cfg.transport.final_time()).stage("sensors")?;
        let model = TransportModel::new(mesh, &wind, cfg.transport).stage("assembly")?;
        Ok(Self { config: cfg.clone(), model, wind, plan, buildings })
    }

    pub fn mesh(&self) -> &TriMesh {
        self.model.mesh()
    }

    pub fn merge_radius(&self) -> f64 {
        self.config.inversion.merge_radius.unwrap_or(3.0 * self.mesh().max_diameter())
    }

    /// Nodal initial and continuous source fields of the declared truth.
    pub fn truth_fields(&self) -> Result<(Vec<f64>, Vec<f64>), ScenarioError> {
        let n = self.model.n_nodes();
        let field = |g: &Option<SourceGroup>, kind| -> Result<Vec<f64>, ScenarioError> {
            match g {
                Some(g) if !g.atoms.is_empty() => {
                    let op = ShapeOperator::new(g.shape, self.mesh(), self.model.matrices())?;
                    Ok(op.measure_field(&SparseMeasure::new(kind, g.atoms.clone()))?)
                }
                _ => Ok(vec![0.0; n]),
            }
        };
        Ok((field(&self.config.truth.initial, MeasureKind::Initial)?, field(&self.config.truth.continuous, MeasureKind::Continuous)?))
    }

    /// Clean observations of the declared truth.
    pub fn clean_observations(&self) -> Result<Vec<f64>, ScenarioError> {
        let (m_i, m_c) = self.truth_fields()?;
        if m_i.iter().chain(&m_c).all(|&v| v == 0.0) {
            return Ok(vec![0.0; self.plan.len()]);
        }
        let op = self.model.observation_operator(&self.plan)?;
        Ok(self.model.parameter_to_observable(&op, &m_i, &m_c)?)
    }
}

fn build_mesh(spec: &MeshSpec) -> Result<(TriMesh, Vec<Rect>), ScenarioError> {
    match spec {
        MeshSpec::Generated { bounds, nx, ny, holes } => {
            let snapped = snapped_holes(*bounds, *nx, *ny, holes)?;
            Ok((build_rect_mesh(*bounds, *nx, *ny, holes)?, snapped))
        }
        MeshSpec::File { path } => Ok((read_mesh(BufReader::new(File::open(path)?))?, Vec::new())),
    }
}

fn build_wind(mesh: &TriMesh, spec: &WindSpec, buildings: &[Rect]) -> Result<WindField, ScenarioError> {
    match spec {
        WindSpec::Analytic { field, blocking_length } => {
            let blocking = blocking_length.filter(|&l| l > 0.0).map(|length| Blocking { buildings: buildings.to_vec(), length });
            if blocking.is_some() && buildings.is_empty() {
                log::warn!("wind blocking requested but the mesh has no known buildings");
            }
            Ok(WindField::analytic(mesh, field, blocking.as_ref())?)
        }
        WindSpec::File { path } => {
            let provenance = format!("file({})", path.display());
            Ok(read_wind(mesh, BufReader::new(File::open(path)?), provenance)?)
        }
    }
}

fn build_plan(mesh: &TriMesh, spec: &SensorSpec, horizon: f64) -> Result<SensorPlan, ScenarioError> {
    let [t0, t1] = spec.window;
    let times = sample_times(t0, t1, spec.rate);
    match &spec.layout {
        SensorLayout::Grid { xs, ys } => {
            let mut points = Vec::new();
            let mut dropped = 0;
            for &y in ys {
                for &x in xs {
                    if mesh.locate([x, y]).is_ok() {
                        points.push([x, y]);
                    } else {
                        dropped += 1;
                    }
                }
            }
            if dropped > 0 {
                log::warn!("dropped {dropped} grid sensors outside the meshed region");
            }
            if points.is_empty() {
                return Err(ScenarioError::Config("no grid sensor lies inside the mesh".into()));
            }
            Ok(SensorPlan::static_sensors(&points, &times))
        }
        SensorLayout::List { points } => {
            if let Some((i, p)) = points.iter().enumerate().find(|(_, p)| mesh.locate(**p).is_err()) {
                return Err(ScenarioError::Transport(TransportError::SensorOutside { index: i, x: *p }));
            }
            Ok(SensorPlan::static_sensors(points, &times))
        }
        SensorLayout::Moving { c0, c1, c2 } => moving_sensor_plan(mesh, [*c0, *c1, *c2], spec.window, spec.rate, horizon),
    }
}

/// Position on the quadratic trajectory `c0 + t c1 + t^2 c2`.
pub fn trajectory_point(coeffs: [Point; 3], t: f64) -> Point {
    let [c0, c1, c2] = coeffs;
    [c0[0] + t * c1[0] + t * t * c2[0], c0[1] + t * c1[1] + t * t * c2[1]]
}

/// One observation per sample time at the trajectory position.
pub fn moving_sensor_plan(
    mesh: &TriMesh,
    coeffs: [Point; 3],
    window: [f64; 2],
    rate: f64,
    horizon: f64,
) -> Result<SensorPlan, ScenarioError> {
    let [t0, t1] = window;
    if !(t0 >= 0.0 && t1 >= t0 && t1 <= horizon * (1.0 + 1e-12)) || !(rate > 0.0) {
        return Err(ScenarioError::Config(format!("window [{t0}, {t1}] at {rate} Hz does not fit in [0, {horizon}]")));
    }
    let times = sample_times(t0, t1, rate);
    let outside: Vec<f64> = times.iter().copied().filter(|&t| mesh.locate(trajectory_point(coeffs, t)).is_err()).collect();
    if !outside.is_empty() {
        return Err(ScenarioError::TrajectoryOutside { times: outside });
    }
    Ok(SensorPlan::new(times.iter().map(|&t| Observation { sensor: 0, t, x: trajectory_point(coeffs, t) }).collect()))
}

/// Synthetic data of a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurements {
    pub plan: SensorPlan,
    pub clean: Vec<f64>,
    pub d: Vec<f64>,
    /// Noise standard deviation actually applied.
    pub sigma: f64,
}

impl Measurements {
    /// `max(clean) / sigma`, undefined without noise.
    pub fn snr(&self) -> Option<f64> {
        (self.sigma > 0.0).then(|| max_value(&self.clean) / self.sigma)
    }
}

fn max_value(v: &[f64]) -> f64 {
    v.iter().copied().fold(0.0, f64::max)
}

/// Clean observations plus i.i.d. Gaussian noise with standard deviation
/// `level * max(clean)`, drawn from a ChaCha8 stream seeded by `seed`.
pub fn generate_measurements(scenario: &Scenario, seed: u64) -> Result<Measurements, ScenarioError> {
    let clean = scenario.clean_observations().stage("truth")?;
    let level = scenario.config.noise.level;
    let sigma = level * max_value(&clean);
    if level > 0.0 && sigma == 0.0 {
        log::warn!("clean signal is zero everywhere: relative noise gives sigma = 0");
    }
    let d = if sigma > 0.0 {
        let normal = Normal::new(0.0, sigma).map_err(|e| ScenarioError::Config(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        clean.iter().map(|c| c + normal.sample(&mut rng)).collect()
    } else {
        clean.clone()
    };
    let mut plan = scenario.plan.clone();
    plan.noise_sigma = sigma;
    Ok(Measurements { plan, clean, d, sigma })
}

/// Likelihood scale used for inversion: the configured value, else the
/// applied noise, else one percent of the largest observation, else one.
pub fn inversion_sigma(cfg: &ScenarioConfig, data: &Measurements) -> f64 {
    if let Some(s) = cfg.inversion.sigma {
        return s;
    }
    if data.sigma > 0.0 {
        return data.sigma;
    }
    let peak = data.d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let fallback = if peak > 0.0 { 1e-2 * peak } else { 1.0 };
    log::warn!("noise-free data: inverting with sigma = {fallback:e}");
    fallback
}

/// Builds, generates data, inverts and scores a scenario. `seed` overrides
/// the configured noise seed.
pub fn run_scenario(cfg: &ScenarioConfig, seed: Option<u64>) -> Result<RunOutcome, ScenarioError> {
    let t_start = Instant::now();
    let scenario = Scenario::build(cfg)?;
    let setup_s = t_start.elapsed().as_secs_f64();
    let seed = seed.unwrap_or(cfg.noise.seed);
    let t = Instant::now();
    let data = generate_measurements(&scenario, seed)?;
    let data_s = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let sigma = inversion_sigma(cfg, &data);
    let (shape_i, shape_c) = cfg.inversion_shapes();
    let problem = InversionProblem::new(&scenario.model, data.plan.clone(), shape_i, shape_c).stage("inversion")?;
    let mut report = RunReport::new(cfg, seed, &scenario, &data, sigma);
    match cfg.inversion.method {
        Method::Pdap => {
            let pcfg = pdap_config(cfg, sigma, scenario.merge_radius());
            let result = pdap_run(&problem, &data.d, &pcfg).stage("inversion")?;
            report.metrics = recovery_metrics(&cfg.truth, &result.post_processed_i, &result.post_processed_c);
            report.online_pde_solves = result.counters.forward_solves + result.counters.adjoint_solves;
            report.pdap = Some(result);
        }
        Method::L2 => {
            let spec = cfg.inversion.l2.expect("validated");
            let lcfg = L2Config {
                eta: spec.eta,
                gamma: spec.gamma,
                beta: spec.beta,
                sigma,
                cg_tol: spec.cg_tol,
                cg_max: spec.cg_max,
                m_prior: None,
            };
            let result = l2_invert(&scenario.model, &problem.op, &data.d, &lcfg).stage("inversion")?;
            let peaks = l2_peaks(scenario.mesh(), &result.m, spec.peak_fraction);
            report.metrics = recovery_metrics(&cfg.truth, &peaks, &SparseMeasure::empty(MeasureKind::Continuous));
            report.online_pde_solves = result.pde_solves;
            report.l2 = Some(L2Report { result, peaks });
        }
    }
    report.timing = RunTiming { setup_s, data_s, inversion_s: t.elapsed().as_secs_f64(), total_s: t_start.elapsed().as_secs_f64() };
    Ok(RunOutcome { report, data })
}

pub fn pdap_config(cfg: &ScenarioConfig, sigma: f64, merge_radius: f64) -> PdapConfig {
    let inv = &cfg.inversion;
    PdapConfig {
        alpha: inv.alpha,
        sigma,
        tol_abs: inv.tol_abs,
        max_iter: inv.max_iter,
        prune_rel: inv.prune_rel,
        merge_radius,
    }
}

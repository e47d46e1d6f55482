use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::ScenarioError;
use crate::fem::{AnalyticWind, WindField};
use crate::geometry::{Point, Rect};
use crate::mesh::{build_rect_mesh, classify_boundary, DEFAULT_NORMAL_TOL};
use crate::sources::{Atom, MeasureKind, ShapeModel, ShapeOperator, SparseMeasure};
use crate::transport::{TransportConfig, TransportModel};

/// Free-space solution of `u_t + v . grad u = kappa Laplace u` for a unit
/// point release at `x_s` and time zero.
pub fn gaussian_reference(x: Point, t: f64, x_s: Point, v: [f64; 2], kappa: f64) -> f64 {
    let dx = x[0] - x_s[0] - v[0] * t;
    let dy = x[1] - x_s[1] - v[1] * t;
    (-(dx * dx + dy * dy) / (4.0 * kappa * t)).exp() / (4.0 * PI * kappa * t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceConfig {
    /// Cells per side of the unit square, coarse to fine.
    pub refinements: Vec<usize>,
    /// Time step on the coarsest mesh; `h / dt` is kept fixed.
    pub dt_coarse: f64,
    pub kappa: f64,
    pub velocity: [f64; 2],
    pub source: Point,
    pub t_end: f64,
    /// Offsets from the advected source position where the error is taken.
    pub probe_offsets: Vec<[f64; 2]>,
    pub stabilization: bool,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        let mut probe_offsets = Vec::new();
        for i in -2..=2 {
            for j in -2..=2 {
                probe_offsets.push([0.025 * i as f64, 0.025 * j as f64]);
            }
        }
        Self {
            refinements: vec![32, 64, 128],
            dt_coarse: 1.0 / 80.0,
            kappa: 0.001,
            velocity: [0.1, 0.1],
            source: [0.5, 0.5],
            t_end: 1.0,
            probe_offsets,
            stabilization: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub cells: usize,
    pub h: f64,
    pub dt: f64,
    pub n_steps: usize,
    pub error: f64,
    /// `log2(e_prev / e)` against the previous row.
    pub order: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    /// Reference value at the advected source position.
    pub reference_peak: f64,
}

impl ConvergenceTable {
    pub fn last_order(&self) -> Option<f64> {
        self.rows.last().and_then(|r| r.order)
    }

    pub fn is_monotone(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].error < w[0].error)
    }
}

/// Max-norm error of the discrete point release against the Gaussian
/// reference at the probe points, with `h` and `dt` refined together.
pub fn convergence_study(cfg: &ConvergenceConfig) -> Result<ConvergenceTable, ScenarioError> {
    if cfg.refinements.len() < 2 {
        return Err(ScenarioError::Config("the convergence study needs at least two refinements".into()));
    }
    if cfg.probe_offsets.is_empty() || !(cfg.dt_coarse > 0.0) || !(cfg.t_end > 0.0) {
        return Err(ScenarioError::Config("probe points, dt and t_end must be given".into()));
    }
    let n0 = cfg.refinements[0] as f64;
    let centre = [cfg.source[0] + cfg.velocity[0] * cfg.t_end, cfg.source[1] + cfg.velocity[1] * cfg.t_end];
    let probes: Vec<Point> = cfg.probe_offsets.iter().map(|o| [centre[0] + o[0], centre[1] + o[1]]).collect();
    let wind_field = AnalyticWind::Uniform { vx: cfg.velocity[0], vy: cfg.velocity[1] };

    let mut rows: Vec<ConvergenceRow> = Vec::new();
    for &n in &cfg.refinements {
        let steps_f = cfg.t_end / (cfg.dt_coarse * n0 / n as f64);
        let n_steps = steps_f.round().max(1.0) as usize;
        if (steps_f - n_steps as f64).abs() > 1e-6 {
            return Err(ScenarioError::Config(format!("t_end is not a whole number of steps on the {n}-cell mesh")));
        }
        let dt = cfg.t_end / n_steps as f64;
        let mesh = build_rect_mesh(Rect::unit(), n, n, &[])?;
        let wind = WindField::analytic(&mesh, &wind_field, None)?;
        let mesh = mesh.with_boundary_markers(&classify_boundary(&mesh, &wind, DEFAULT_NORMAL_TOL))?;
        let tcfg = TransportConfig { kappa: cfg.kappa, dt, n_steps, stabilization: cfg.stabilization };
        let model = TransportModel::new(mesh, &wind, tcfg)?;
        let dirac = ShapeOperator::new(ShapeModel::Dirac, model.mesh(), model.matrices())?;
        let m0 = dirac.measure_field(&SparseMeasure::new(MeasureKind::Initial, vec![Atom::new(cfg.source, 1.0)]))?;
        let traj = model.forward_solve(&m0, &vec![0.0; model.n_nodes()])?;
        let u = traj.last();
        let mut error = 0.0f64;
        for &p in &probes {
            let uh = model.mesh().locate(p)?.interpolate(u);
            error = error.max((uh - gaussian_reference(p, cfg.t_end, cfg.source, cfg.velocity, cfg.kappa)).abs());
        }
        let order = rows.last().map(|prev| (prev.error / error).log2());
        log::info!("convergence n={n} dt={dt:e} error={error:e} order={order:?}");
        rows.push(ConvergenceRow { cells: n, h: 1.0 / n as f64, dt, n_steps, error, order });
    }
    let reference_peak = gaussian_reference(centre, cfg.t_end, cfg.source, cfg.velocity, cfg.kappa);
    Ok(ConvergenceTable { rows, reference_peak })
}

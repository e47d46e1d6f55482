use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ScenarioError;
use crate::fem::{AnalyticWind, WindField};
use crate::geometry::Rect;
use crate::mesh::{build_rect_mesh, classify_boundary, DEFAULT_NORMAL_TOL};
use crate::sources::eval_rbf;
use crate::transport::{ObservationOperator, TransportConfig, TransportModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualityReport {
    pub trials: usize,
    /// Worst relative gap of `<F(m, 0), y>` against `<m, M p0>`.
    pub max_rel_initial: f64,
    /// Worst relative gap of `<F(0, m), y>` against `<m, M M^{-1} c>`.
    pub max_rel_continuous: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn rel_gap(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Dot-product test of the discrete adjoint with random sources and data.
pub fn duality_check(
    model: &TransportModel,
    op: &ObservationOperator,
    trials: usize,
    seed: u64,
) -> Result<DualityReport, ScenarioError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = model.n_nodes();
    let zero = vec![0.0; n];
    let mass = &model.matrices().mass;
    let (mut worst_i, mut worst_c) = (0.0f64, 0.0f64);
    for _ in 0..trials {
        let mi: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mc: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..op.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let adj = model.adjoint_solve(op, &y)?;
        let lhs = dot(&model.parameter_to_observable(op, &mi, &zero)?, &y);
        worst_i = worst_i.max(rel_gap(lhs, dot(&mi, &mass.mul_vec(&adj.p0))));
        let lhs_c = dot(&model.parameter_to_observable(op, &zero, &mc)?, &y);
        worst_c = worst_c.max(rel_gap(lhs_c, mass.inner(&mc, &model.adjoint_continuous_dual(&adj)?)));
    }
    Ok(DualityReport { trials, max_rel_initial: worst_i, max_rel_continuous: worst_c })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConservationReport {
    pub cells: usize,
    pub steps: usize,
    pub initial_mass: f64,
    /// Largest `|1^T M u^n - 1^T M u^0| / |1^T M u^0|`.
    pub max_rel_drift: f64,
}

/// Unstabilised transport of a blob in a vortex that is tangential to every
/// wall, so no boundary carries flux.
pub fn conservation_check(cells: usize, steps: usize) -> Result<ConservationReport, ScenarioError> {
    let mesh = build_rect_mesh(Rect::unit(), cells, cells, &[])?;
    let field = AnalyticWind::Vortex { cx: 0.5, cy: 0.5, strength: 0.05, width: 0.1 };
    let wind = WindField::analytic(&mesh, &field, None)?;
    let mesh = mesh.with_boundary_markers(&classify_boundary(&mesh, &wind, DEFAULT_NORMAL_TOL))?;
    let cfg = TransportConfig { kappa: 0.001, dt: 0.02, n_steps: steps, stabilization: false };
    let model = TransportModel::new(mesh, &wind, cfg)?;
    let u0 = eval_rbf(model.mesh(), [0.45, 0.55], 0.15, 0.01)?;
    let traj = model.forward_solve(&u0, &vec![0.0; model.n_nodes()])?;
    let m0 = model.total_mass(&traj.states[0]);
    let max_rel_drift = traj.states.iter().map(|u| ((model.total_mass(u) - m0) / m0).abs()).fold(0.0, f64::max);
    Ok(ConservationReport { cells, steps, initial_mass: m0, max_rel_drift })
}

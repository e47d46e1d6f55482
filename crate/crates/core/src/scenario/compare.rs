use serde::{Deserialize, Serialize};

use super::{
    generate_measurements, inversion_sigma, l2_peaks, pdap_config, recovery_metrics, Method, RecoveryMetrics, Scenario,
    ScenarioConfig, ScenarioError, StageExt,
};
use crate::inversion::{l2_invert, pdap_run, InversionProblem, L2Config};
use crate::sources::{MeasureKind, SparseMeasure};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub method: Method,
    pub sensors: usize,
    pub parameters: String,
    pub online_pde_solves: usize,
    /// Recovery distance per truth source, in declaration order.
    pub distances: Vec<Option<f64>>,
    pub max_distance: Option<f64>,
    pub metrics: RecoveryMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub name: String,
    pub n_data: usize,
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    pub fn row(&self, method: Method) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.method == method)
    }
}

/// Runs PDAP and the L2 baseline on the same synthetic data.
pub fn compare_methods(cfg: &ScenarioConfig, seed: Option<u64>) -> Result<ComparisonTable, ScenarioError> {
    if cfg.truth.continuous.is_some() {
        return Err(ScenarioError::Config("method comparison needs initial-type sources only".into()));
    }
    let Some(l2) = cfg.inversion.l2 else {
        return Err(ScenarioError::Config("method comparison needs an `l2` block".into()));
    };
    let scenario = Scenario::build(cfg)?;
    let data = generate_measurements(&scenario, seed.unwrap_or(cfg.noise.seed))?;
    let sigma = inversion_sigma(cfg, &data);
    let (shape_i, _) = cfg.inversion_shapes();
    let problem = InversionProblem::new(&scenario.model, data.plan.clone(), shape_i, None).stage("inversion")?;
    let sensors = data.plan.n_sensors();
    let no_c = SparseMeasure::empty(MeasureKind::Continuous);
    let row = |method, parameters, online_pde_solves, metrics: RecoveryMetrics| ComparisonRow {
        method,
        sensors,
        parameters,
        online_pde_solves,
        distances: metrics.sources.iter().map(|s| s.distance).collect(),
        max_distance: metrics.max_distance,
        metrics,
    };

    let pcfg = pdap_config(cfg, sigma, scenario.merge_radius());
    let pdap = pdap_run(&problem, &data.d, &pcfg).stage("pdap")?;
    let pdap_row = row(
        Method::Pdap,
        format!("alpha={}", pcfg.alpha),
        pdap.counters.forward_solves + pdap.counters.adjoint_solves,
        recovery_metrics(&cfg.truth, &pdap.post_processed_i, &no_c),
    );

    let lcfg = L2Config { eta: l2.eta, gamma: l2.gamma, beta: l2.beta, sigma, cg_tol: l2.cg_tol, cg_max: l2.cg_max, m_prior: None };
    let l2_result = l2_invert(&scenario.model, &problem.op, &data.d, &lcfg).stage("l2")?;
    let peaks = l2_peaks(scenario.mesh(), &l2_result.m, l2.peak_fraction);
    let l2_row = row(
        Method::L2,
        format!("eta={}, gamma={}, cg_tol={}", l2.eta, l2.gamma, l2.cg_tol),
        l2_result.pde_solves,
        recovery_metrics(&cfg.truth, &peaks, &no_c),
    );
    Ok(ComparisonTable { name: cfg.name.clone(), n_data: data.plan.len(), rows: vec![pdap_row, l2_row] })
}

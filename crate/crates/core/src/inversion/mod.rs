//! Sparse source identification: the primal-dual active point loop, its
//! finite-dimensional intensity subproblem, certificates, post-processing
//! and a quadratic (L2) baseline.

mod l2;
mod postprocess;
mod subproblem;

use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sources::{argmax_dual, measure_to_fields, Atom, MeasureKind, ShapeModel, ShapeOperator, SourceError, SparseMeasure};
use crate::transport::{ObservationOperator, SensorPlan, TransportError, TransportModel};

pub use l2::{l2_invert, L2Config, L2Result};
pub use postprocess::{merge_atoms, prune};
pub use subproblem::{intensity_subproblem, solve_quadratic, Quadratic, SubproblemError};

#[derive(Debug, Error)]
pub enum InversionError {
    #[error("invalid inversion configuration: {0}")]
    InvalidConfig(String),
    #[error("data has {got} entries, the sensor plan has {expected}")]
    DataLength { expected: usize, got: usize },
    #[error("non-finite objective at iteration {0}")]
    NonFiniteObjective(usize),
    #[error("intensity subproblem failed at iteration {iteration}: {source}")]
    Subproblem { iteration: usize, source: SubproblemError },
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Source(#[from] SourceError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdapConfig {
    pub alpha: f64,
    pub sigma: f64,
    /// Absolute dual slack tolerance; `None` means `1e-3 * alpha`.
    #[serde(default)]
    pub tol_abs: Option<f64>,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_prune_rel")]
    pub prune_rel: f64,
    #[serde(default)]
    pub merge_radius: f64,
}

fn default_max_iter() -> usize {
    50
}

fn default_prune_rel() -> f64 {
    1e-10
}

impl PdapConfig {
    pub fn new(alpha: f64, sigma: f64) -> Self {
        Self { alpha, sigma, tol_abs: None, max_iter: default_max_iter(), prune_rel: default_prune_rel(), merge_radius: 0.0 }
    }

    pub fn tol(&self) -> f64 {
        self.tol_abs.unwrap_or(1e-3 * self.alpha)
    }

    pub fn validate(&self) -> Result<(), InversionError> {
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(InversionError::InvalidConfig(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(InversionError::InvalidConfig(format!("sigma must be positive, got {}", self.sigma)));
        }
        if !(self.tol() >= 0.0) {
            return Err(InversionError::InvalidConfig("tol_abs must be nonnegative".into()));
        }
        if self.max_iter == 0 {
            return Err(InversionError::InvalidConfig("max_iter must be at least 1".into()));
        }
        if !(self.merge_radius >= 0.0) {
            return Err(InversionError::InvalidConfig("merge_radius must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Transport model, observation operator and the shape models of the source
/// kinds being identified (a kind without a shape model is switched off).
pub struct InversionProblem<'a> {
    pub model: &'a TransportModel,
    pub plan: SensorPlan,
    pub op: ObservationOperator,
    pub shape_i: Option<ShapeOperator<'a>>,
    pub shape_c: Option<ShapeOperator<'a>>,
}

impl<'a> InversionProblem<'a> {
    pub fn new(
        model: &'a TransportModel,
        plan: SensorPlan,
        shape_i: Option<ShapeModel>,
        shape_c: Option<ShapeModel>,
    ) -> Result<Self, InversionError> {
        let op = model.observation_operator(&plan)?;
        let mk = |s: Option<ShapeModel>| s.map(|s| ShapeOperator::new(s, model.mesh(), model.matrices())).transpose();
        Ok(Self { model, plan, op, shape_i: mk(shape_i)?, shape_c: mk(shape_c)? })
    }

    fn shape(&self, kind: MeasureKind) -> Option<&ShapeOperator<'a>> {
        match kind {
            MeasureKind::Initial => self.shape_i.as_ref(),
            MeasureKind::Continuous => self.shape_c.as_ref(),
        }
    }

    pub fn elliptic_solves(&self) -> usize {
        self.shape_i.as_ref().map_or(0, |s| s.elliptic_solves()) + self.shape_c.as_ref().map_or(0, |s| s.elliptic_solves())
    }

    /// Synthetic observations `F(mu_I, mu_C)`; a measure of a switched-off kind must be empty.
    pub fn observe_measures(&self, mu_i: &SparseMeasure, mu_c: &SparseMeasure) -> Result<Vec<f64>, InversionError> {
        let n = self.model.n_nodes();
        let zero_field = |mu: &SparseMeasure, s: Option<&ShapeOperator<'_>>| -> Result<Vec<f64>, InversionError> {
            match s {
                Some(s) => Ok(s.measure_field(mu)?),
                None if mu.is_empty() => Ok(vec![0.0; n]),
                None => Err(InversionError::InvalidConfig(format!("no shape model for {:?} sources", mu.kind))),
            }
        };
        let (m_i, m_c) = match (self.shape_i.as_ref(), self.shape_c.as_ref()) {
            (Some(si), Some(sc)) => measure_to_fields(mu_i, mu_c, si, sc)?,
            (si, sc) => (zero_field(mu_i, si)?, zero_field(mu_c, sc)?),
        };
        Ok(self.model.parameter_to_observable(&self.op, &m_i, &m_c)?)
    }

    /// `1/(2 sigma^2) |F(mu) - d|^2 + alpha (|mu_I| + |mu_C|)`.
    pub fn objective_value(
        &self,
        mu_i: &SparseMeasure,
        mu_c: &SparseMeasure,
        d: &[f64],
        sigma: f64,
        alpha: f64,
    ) -> Result<f64, InversionError> {
        let f = self.observe_measures(mu_i, mu_c)?;
        Ok(objective(&f, d, sigma, alpha, mu_i.total_variation() + mu_c.total_variation()))
    }
}

fn objective(fit: &[f64], d: &[f64], sigma: f64, alpha: f64, tv: f64) -> f64 {
    let misfit: f64 = fit.iter().zip(d).map(|(a, b)| (a - b).powi(2)).sum();
    misfit / (2.0 * sigma * sigma) + alpha * tv
}

type ColumnKey = (MeasureKind, usize);

/// Observation-space columns `F(s(x_k), 0)` / `F(0, s(x_k))` by node.
#[derive(Debug, Default)]
pub struct ColumnCache {
    columns: Mutex<HashMap<ColumnKey, Arc<Vec<f64>>>>,
}

impl ColumnCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.columns.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, kind: MeasureKind, node: usize) -> Option<Arc<Vec<f64>>> {
        self.columns.lock().expect("cache lock").get(&(kind, node)).cloned()
    }

    /// Returns the cached column or computes and stores it. The forward
    /// solve runs outside the lock, so distinct keys fill concurrently.
    pub fn get_or_compute(
        &self,
        problem: &InversionProblem<'_>,
        kind: MeasureKind,
        node: usize,
    ) -> Result<Arc<Vec<f64>>, InversionError> {
        if let Some(c) = self.get(kind, node) {
            return Ok(c);
        }
        let col = Arc::new(compute_column(problem, kind, node)?);
        let mut map = self.columns.lock().expect("cache lock");
        Ok(map.entry((kind, node)).or_insert(col).clone())
    }
}

pub fn compute_column(problem: &InversionProblem<'_>, kind: MeasureKind, node: usize) -> Result<Vec<f64>, InversionError> {
    let shape = problem
        .shape(kind)
        .ok_or_else(|| InversionError::InvalidConfig(format!("no shape model for {kind:?} sources")))?;
    let field = shape.node_field(node)?;
    let zero = vec![0.0; field.len()];
    let col = match kind {
        MeasureKind::Initial => problem.model.parameter_to_observable(&problem.op, &field, &zero)?,
        MeasureKind::Continuous => problem.model.parameter_to_observable(&problem.op, &zero, &field)?,
    };
    Ok(col)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    /// Support condition holds within `tol`.
    Certified,
    /// Duality-gap surrogate fell below numerical precision.
    GapConverged,
    /// Only already-active nodes were proposed.
    Stagnated,
    MaxIter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iteration: usize,
    pub objective: f64,
    pub max_phi_i: Option<f64>,
    pub max_phi_c: Option<f64>,
    pub atoms_i: usize,
    pub atoms_c: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub alpha: f64,
    pub tol: f64,
    pub max_phi_i: Option<f64>,
    pub max_phi_c: Option<f64>,
    /// `max phi - alpha` over the active kinds.
    pub global_slack: f64,
    /// `alpha - phi(x_i)` per active atom.
    pub atom_slack_i: Vec<f64>,
    pub atom_slack_c: Vec<f64>,
    pub certified: bool,
}

/// Evaluates the support condition `max phi <= alpha + tol`.
pub fn certify_optimality(
    phi_i: Option<&[f64]>,
    phi_c: Option<&[f64]>,
    alpha: f64,
    atoms_i: &[usize],
    atoms_c: &[usize],
    tol: f64,
) -> Certificate {
    let max = |p: Option<&[f64]>| p.map(|v| v.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    let max_phi_i = max(phi_i);
    let max_phi_c = max(phi_c);
    let top = max_phi_i.into_iter().chain(max_phi_c).fold(f64::NEG_INFINITY, f64::max);
    // no active kind or empty mesh: the zero dual
    let top = if top.is_finite() { top } else { 0.0 };
    let global_slack = top - alpha;
    let slack = |p: Option<&[f64]>, nodes: &[usize]| p.map_or(Vec::new(), |v| nodes.iter().map(|&k| alpha - v[k]).collect());
    Certificate {
        alpha,
        tol,
        max_phi_i,
        max_phi_c,
        global_slack,
        atom_slack_i: slack(phi_i, atoms_i),
        atom_slack_c: slack(phi_c, atoms_c),
        certified: global_slack <= tol,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Counters {
    pub iterations: usize,
    pub forward_solves: usize,
    pub adjoint_solves: usize,
    pub elliptic_solves: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub total_s: f64,
    pub columns_s: f64,
    pub adjoint_s: f64,
    pub dual_s: f64,
    pub subproblem_s: f64,
}

/// Dual variables at the returned measures, kept for re-certification.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FinalDuals {
    pub phi_i: Option<Vec<f64>>,
    pub phi_c: Option<Vec<f64>>,
    pub nodes_i: Vec<usize>,
    pub nodes_c: Vec<usize>,
}

impl FinalDuals {
    pub fn certify(&self, alpha: f64, tol: f64) -> Certificate {
        certify_optimality(self.phi_i.as_deref(), self.phi_c.as_deref(), alpha, &self.nodes_i, &self.nodes_c, tol)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InversionResult {
    pub mu_i: SparseMeasure,
    pub mu_c: SparseMeasure,
    pub post_processed_i: SparseMeasure,
    pub post_processed_c: SparseMeasure,
    pub status: Status,
    pub objective: f64,
    pub log: Vec<IterationLog>,
    pub certificate: Certificate,
    pub counters: Counters,
    pub timing: Timing,
    pub n_data: usize,
    #[serde(skip)]
    pub duals: FinalDuals,
}

impl InversionResult {
    pub fn certified(&self) -> bool {
        self.status == Status::Certified || self.status == Status::GapConverged
    }

    pub fn n_atoms(&self) -> usize {
        self.mu_i.len() + self.mu_c.len()
    }

    pub fn objective_history(&self) -> Vec<f64> {
        self.log.iter().map(|l| l.objective).collect()
    }
}

/// Primal-dual active point iteration.
///
/// Each iteration evaluates the duals at the current measures, stops if the
/// support condition holds, otherwise appends the maximisers of the duals as
/// new candidate nodes, re-optimises all intensities and prunes zeros.
pub fn pdap_run(problem: &InversionProblem<'_>, d: &[f64], cfg: &PdapConfig) -> Result<InversionResult, InversionError> {
    cfg.validate()?;
    if d.len() != problem.op.len() {
        return Err(InversionError::DataLength { expected: problem.op.len(), got: d.len() });
    }
    let t_start = Instant::now();
    let model = problem.model;
    let (fwd0, adj0, ell0) = (model.forward_solves(), model.adjoint_solves(), problem.elliptic_solves());
    let mesh = model.mesh();
    let tol = cfg.tol();
    let sigma2 = cfg.sigma * cfg.sigma;
    let cache = ColumnCache::new();
    let mut timing = Timing::default();

    let mut support: Vec<(MeasureKind, usize)> = Vec::new();
    let mut lambda: Vec<f64> = Vec::new();
    let mut log = Vec::new();
    let mut iteration = 0;

    let (status, objective_final, duals, certificate) = loop {
        let cols: Vec<Arc<Vec<f64>>> = support
            .iter()
            .map(|&(k, n)| cache.get(k, n).expect("support columns are cached"))
            .collect();
        let mut fit = vec![0.0; d.len()];
        for (c, &l) in cols.iter().zip(&lambda) {
            for (f, v) in fit.iter_mut().zip(c.iter()) {
                *f += l * v;
            }
        }
        let j = objective(&fit, d, cfg.sigma, cfg.alpha, lambda.iter().sum());
        if !j.is_finite() {
            return Err(InversionError::NonFiniteObjective(iteration));
        }

        let y: Vec<f64> = fit.iter().zip(d).map(|(f, dv)| (f - dv) / sigma2).collect();
        let t = Instant::now();
        let adj = model.adjoint_solve(&problem.op, &y)?;
        timing.adjoint_s += t.elapsed().as_secs_f64();
        let t = Instant::now();
        let phi_i = problem.shape_i.as_ref().map(|s| s.dual(&adj.q0)).transpose()?;
        let phi_c = match problem.shape_c.as_ref() {
            Some(s) => Some(s.dual(&model.continuous_gradient(&adj))?),
            None => None,
        };
        timing.dual_s += t.elapsed().as_secs_f64();

        let max_i = phi_i.as_ref().and_then(|p| argmax_dual(p, mesh));
        let max_c = phi_c.as_ref().and_then(|p| argmax_dual(p, mesh));
        let count = |kind| support.iter().filter(|(k, _)| *k == kind).count();
        log.push(IterationLog {
            iteration,
            objective: j,
            max_phi_i: max_i.map(|m| m.2),
            max_phi_c: max_c.map(|m| m.2),
            atoms_i: count(MeasureKind::Initial),
            atoms_c: count(MeasureKind::Continuous),
        });
        log::info!(
            "pdap iter {iteration}: J={j:.6e} max_phi_I={:?} max_phi_C={:?} atoms={}",
            max_i.map(|m| m.2),
            max_c.map(|m| m.2),
            support.len()
        );

        let nodes_of = |kind| support.iter().filter(|(k, _)| *k == kind).map(|&(_, n)| n).collect::<Vec<_>>();
        let duals = FinalDuals {
            phi_i: phi_i.clone(),
            phi_c: phi_c.clone(),
            nodes_i: nodes_of(MeasureKind::Initial),
            nodes_c: nodes_of(MeasureKind::Continuous),
        };
        let cert = duals.certify(cfg.alpha, tol);
        if cert.certified {
            break (Status::Certified, j, duals, cert);
        }
        if cert.global_slack * (j / cfg.alpha) < 1e-10 * j {
            break (Status::GapConverged, j, duals, cert);
        }
        if iteration >= cfg.max_iter {
            break (Status::MaxIter, j, duals, cert);
        }

        let mut proposals = Vec::new();
        for (kind, best) in [(MeasureKind::Initial, max_i), (MeasureKind::Continuous, max_c)] {
            if let Some((node, _, value)) = best {
                if value > cfg.alpha + tol && !support.contains(&(kind, node)) {
                    proposals.push((kind, node));
                }
            }
        }
        if proposals.is_empty() {
            log::warn!("pdap iter {iteration}: only active nodes proposed, stopping");
            break (Status::Stagnated, j, duals, cert);
        }

        let t = Instant::now();
        proposals
            .par_iter()
            .map(|&(k, n)| cache.get_or_compute(problem, k, n).map(|_| ()))
            .collect::<Result<Vec<()>, _>>()?;
        timing.columns_s += t.elapsed().as_secs_f64();
        support.extend(proposals.iter().copied());
        lambda.extend(std::iter::repeat_n(0.0, proposals.len()));

        let t = Instant::now();
        let cols: Vec<Arc<Vec<f64>>> = support.iter().map(|&(k, n)| cache.get(k, n).expect("cached")).collect();
        let col_refs: Vec<&[f64]> = cols.iter().map(|c| c.as_slice()).collect();
        lambda = intensity_subproblem(&col_refs, d, cfg.sigma, cfg.alpha, &lambda)
            .map_err(|source| InversionError::Subproblem { iteration, source })?;
        timing.subproblem_s += t.elapsed().as_secs_f64();

        let max_l = lambda.iter().cloned().fold(0.0, f64::max);
        let keep: Vec<bool> = lambda.iter().map(|&l| l > 0.0 && l >= cfg.prune_rel * max_l).collect();
        support = support.iter().zip(&keep).filter(|(_, &k)| k).map(|(s, _)| *s).collect();
        lambda = lambda.iter().zip(&keep).filter(|(_, &k)| k).map(|(l, _)| *l).collect();
        iteration += 1;
    };

    let measure = |kind| {
        SparseMeasure::new(
            kind,
            support
                .iter()
                .zip(&lambda)
                .filter(|((k, _), _)| *k == kind)
                .map(|(&(_, n), &l)| Atom::new(mesh.nodes()[n], l))
                .collect(),
        )
    };
    let mu_i = measure(MeasureKind::Initial);
    let mu_c = measure(MeasureKind::Continuous);
    let post_processed_i = merge_atoms(&prune(&mu_i, cfg.prune_rel), cfg.merge_radius);
    let post_processed_c = merge_atoms(&prune(&mu_c, cfg.prune_rel), cfg.merge_radius);
    timing.total_s = t_start.elapsed().as_secs_f64();
    Ok(InversionResult {
        mu_i,
        mu_c,
        post_processed_i,
        post_processed_c,
        status,
        objective: objective_final,
        log,
        certificate,
        counters: Counters {
            iterations: iteration,
            forward_solves: model.forward_solves() - fwd0,
            adjoint_solves: model.adjoint_solves() - adj0,
            elliptic_solves: problem.elliptic_solves() - ell0,
        },
        timing,
        n_data: d.len(),
        duals,
    })
}

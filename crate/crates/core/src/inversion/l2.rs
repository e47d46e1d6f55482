use serde::{Deserialize, Serialize};

use super::InversionError;
use crate::fem::SparseMatrix;
use crate::sources::default_beta;
use crate::transport::{ObservationOperator, TransportError, TransportModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct L2Config {
    pub eta: f64,
    pub gamma: f64,
    #[serde(default)]
    pub beta: Option<f64>,
    pub sigma: f64,
    #[serde(default = "default_cg_tol")]
    pub cg_tol: f64,
    #[serde(default = "default_cg_max")]
    pub cg_max: usize,
    /// Prior mean; zero when absent.
    #[serde(skip)]
    pub m_prior: Option<Vec<f64>>,
}

fn default_cg_tol() -> f64 {
    1e-6
}

fn default_cg_max() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct L2Result {
    #[serde(skip)]
    pub m: Vec<f64>,
    pub cg_iterations: usize,
    pub converged: bool,
    pub forward_solves: usize,
    pub adjoint_solves: usize,
    /// Online transport solves (forward plus adjoint).
    pub pde_solves: usize,
    pub elliptic_solves: usize,
    /// Preconditioned residual norms, starting with the initial residual.
    pub residual_history: Vec<f64>,
    /// Quadratic objective relative to the starting point.
    pub objective_history: Vec<f64>,
}

/// Initial-value identification with the quadratic prior
/// `1/2 |A (m - m_prior)|^2_{M^{-1}}`, `A = eta M + gamma K + beta B`.
///
/// Solves `H m = F^T d / sigma^2 + A M^{-1} A m_prior` with
/// `H = F^T F / sigma^2 + A M^{-1} A` by conjugate gradients, preconditioned
/// with the prior inverse `A^{-1} M A^{-1}`. Every Hessian product costs one
/// forward and one adjoint solve.
pub fn l2_invert(model: &TransportModel, op: &ObservationOperator, d: &[f64], cfg: &L2Config) -> Result<L2Result, InversionError> {
    if !(cfg.sigma > 0.0) || !(cfg.eta > 0.0) || !(cfg.gamma > 0.0) || !(cfg.cg_tol >= 0.0) {
        return Err(InversionError::InvalidConfig("l2 needs sigma, eta, gamma > 0 and cg_tol >= 0".into()));
    }
    if d.len() != op.len() {
        return Err(InversionError::DataLength { expected: op.len(), got: d.len() });
    }
    let n = model.n_nodes();
    let mats = model.matrices();
    let beta = cfg.beta.unwrap_or_else(|| default_beta(cfg.eta, cfg.gamma));
    let a = SparseMatrix::linear_combination(&[(cfg.eta, &mats.mass), (cfg.gamma, &mats.stiffness), (beta, &mats.boundary_mass)]);
    let (fwd0, adj0) = (model.forward_solves(), model.adjoint_solves());
    let mut elliptic = 0usize;
    let s2 = cfg.sigma * cfg.sigma;
    let zero = vec![0.0; n];

    let prior_op = |x: &[f64]| -> Result<Vec<f64>, TransportError> {
        let ax = a.mul_vec(x);
        Ok(a.mul_vec(&mats.mass.solve(&ax)?))
    };
    let mut precondition = |r: &[f64]| -> Result<Vec<f64>, TransportError> {
        elliptic += 2;
        let t = a.solve(r)?;
        Ok(a.solve(&mats.mass.mul_vec(&t))?)
    };
    let hessian = |x: &[f64]| -> Result<Vec<f64>, InversionError> {
        let fx = model.parameter_to_observable(op, x, &zero)?;
        let y: Vec<f64> = fx.iter().map(|v| v / s2).collect();
        let data = model.adjoint_solve(op, &y)?.q0;
        let prior = prior_op(x)?;
        Ok(data.iter().zip(&prior).map(|(p, q)| p + q).collect())
    };

    let mut x = cfg.m_prior.clone().unwrap_or_else(|| zero.clone());
    if x.len() != n {
        return Err(InversionError::InvalidConfig(format!("prior has {} entries, mesh has {n} nodes", x.len())));
    }
    // r0 = F^T (d - F m_prior) / sigma^2
    let misfit: Vec<f64> = if x.iter().any(|&v| v != 0.0) {
        let fx = model.parameter_to_observable(op, &x, &zero)?;
        d.iter().zip(&fx).map(|(a, b)| (a - b) / s2).collect()
    } else {
        d.iter().map(|v| v / s2).collect()
    };
    let mut r = model.adjoint_solve(op, &misfit)?.q0;
    let mut z = precondition(&r)?;
    let mut p = z.clone();
    let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
    let mut rz = dot(&r, &z);
    let r0 = rz.max(0.0).sqrt();
    let mut residual_history = vec![r0];
    let mut objective_history = vec![0.0];
    let mut converged = r0 == 0.0;
    let mut iterations = 0;
    let mut f = 0.0;

    while !converged && iterations < cfg.cg_max {
        let hp = hessian(&p)?;
        let php = dot(&p, &hp);
        if !(php > 0.0) {
            log::warn!("l2: non-positive curvature {php:e} at CG iteration {iterations}");
            break;
        }
        let step = rz / php;
        let rp = dot(&r, &p);
        for i in 0..n {
            x[i] += step * p[i];
            r[i] -= step * hp[i];
        }
        f += -step * rp + 0.5 * step * step * php;
        z = precondition(&r)?;
        let rz_new = dot(&r, &z);
        iterations += 1;
        residual_history.push(rz_new.max(0.0).sqrt());
        objective_history.push(f);
        if rz_new.max(0.0).sqrt() <= cfg.cg_tol * r0 {
            converged = true;
            break;
        }
        let b = rz_new / rz;
        for i in 0..n {
            p[i] = z[i] + b * p[i];
        }
        rz = rz_new;
    }
    if !converged {
        log::warn!("l2: CG stopped after {iterations} iterations without reaching tolerance");
    }
    let forward_solves = model.forward_solves() - fwd0;
    let adjoint_solves = model.adjoint_solves() - adj0;
    Ok(L2Result {
        m: x,
        cg_iterations: iterations,
        converged,
        forward_solves,
        adjoint_solves,
        pde_solves: forward_solves + adjoint_solves,
        elliptic_solves: elliptic,
        residual_history,
        objective_history,
    })
}

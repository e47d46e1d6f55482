use faer::linalg::solvers::Solve;
use faer::{Mat, Side};
use thiserror::Error;

const MAX_NEWTON: usize = 100;
const MAX_HALVINGS: usize = 20;
const MAX_SWEEPS: usize = 200_000;
const KKT_REL: f64 = 1e-9;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SubproblemError {
    #[error("column {col} has {got} rows, data has {expected}")]
    RowMismatch { col: usize, expected: usize, got: usize },
    #[error("warm start has {got} entries for {expected} columns")]
    WarmStartLength { expected: usize, got: usize },
    #[error("invalid parameters: sigma={sigma}, alpha={alpha}")]
    InvalidParameters { sigma: f64, alpha: f64 },
    #[error("no convergence, KKT residual {residual:e}")]
    NoConvergence { last: Vec<f64>, residual: f64 },
}

/// Quadratic data of `1/(2 sigma^2) |G l - d|^2 + alpha sum(l)` over `l >= 0`:
/// `h = G^T G / sigma^2`, `b = G^T d / sigma^2`.
#[derive(Debug, Clone)]
pub struct Quadratic {
    pub h: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub alpha: f64,
}

impl Quadratic {
    pub fn from_columns(columns: &[&[f64]], d: &[f64], sigma: f64, alpha: f64) -> Result<Self, SubproblemError> {
        if !(sigma > 0.0 && alpha > 0.0) || !sigma.is_finite() || !alpha.is_finite() {
            return Err(SubproblemError::InvalidParameters { sigma, alpha });
        }
        for (i, c) in columns.iter().enumerate() {
            if c.len() != d.len() {
                return Err(SubproblemError::RowMismatch { col: i, expected: d.len(), got: c.len() });
            }
        }
        let s2 = sigma * sigma;
        let n = columns.len();
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let mut h = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in i..n {
                let v = dot(columns[i], columns[j]) / s2;
                h[i][j] = v;
                h[j][i] = v;
            }
        }
        let b = columns.iter().map(|c| dot(c, d) / s2).collect();
        Ok(Self { h, b, alpha })
    }

    pub fn len(&self) -> usize {
        self.b.len()
    }

    pub fn is_empty(&self) -> bool {
        self.b.is_empty()
    }

    /// Objective without the constant `|d|^2 / (2 sigma^2)`.
    pub fn value(&self, l: &[f64]) -> f64 {
        let hl = self.apply(l);
        (0..l.len()).map(|i| l[i] * (0.5 * hl[i] - self.b[i] + self.alpha)).sum()
    }

    pub fn apply(&self, l: &[f64]) -> Vec<f64> {
        self.h.iter().map(|row| row.iter().zip(l).map(|(a, b)| a * b).sum()).collect()
    }

    pub fn gradient(&self, l: &[f64]) -> Vec<f64> {
        let hl = self.apply(l);
        (0..l.len()).map(|i| hl[i] - self.b[i] + self.alpha).collect()
    }

    /// Max-norm of `l - max(0, l - g)`, the natural KKT residual.
    pub fn kkt_residual(&self, l: &[f64]) -> f64 {
        let g = self.gradient(l);
        l.iter().zip(&g).map(|(&li, &gi)| (li - (li - gi).max(0.0)).abs()).fold(0.0, f64::max)
    }

    /// Scale used for the relative KKT tolerance.
    pub fn scale(&self) -> f64 {
        self.b.iter().fold(self.alpha, |m, v| m.max(v.abs()))
    }
}

/// Solves the nonnegative l1-regularised least-squares problem by a
/// primal-dual active set (semismooth Newton) iteration, warm-started at
/// `warm`. Falls back to projected coordinate descent if a Newton system is
/// singular or the step rule stalls.
pub fn intensity_subproblem(
    columns: &[&[f64]],
    d: &[f64],
    sigma: f64,
    alpha: f64,
    warm: &[f64],
) -> Result<Vec<f64>, SubproblemError> {
    let q = Quadratic::from_columns(columns, d, sigma, alpha)?;
    solve_quadratic(&q, warm)
}

pub fn solve_quadratic(q: &Quadratic, warm: &[f64]) -> Result<Vec<f64>, SubproblemError> {
    let n = q.len();
    if warm.len() != n {
        return Err(SubproblemError::WarmStartLength { expected: n, got: warm.len() });
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let tol = KKT_REL * q.scale();
    let mut l: Vec<f64> = warm.iter().map(|v| v.max(0.0)).collect();
    // dual scaling for the active set prediction
    let theta = 1.0 / q.h.iter().enumerate().map(|(i, r)| r[i]).fold(f64::MIN_POSITIVE, f64::max);

    for _ in 0..MAX_NEWTON {
        if q.kkt_residual(&l) <= tol {
            return Ok(l);
        }
        let g = q.gradient(&l);
        let inactive: Vec<usize> = (0..n).filter(|&i| l[i] - theta * g[i] > 0.0).collect();
        let Some(target) = newton_target(q, &inactive) else {
            break;
        };
        let f0 = q.value(&l);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let trial: Vec<f64> = (0..n).map(|i| (l[i] + t * (target[i] - l[i])).max(0.0)).collect();
            if q.value(&trial) <= f0 {
                accepted = trial != l;
                l = trial;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if q.kkt_residual(&l) <= tol {
        return Ok(l);
    }
    coordinate_descent(q, l, tol)
}

/// Minimiser restricted to `inactive` (others fixed at zero), or `None` if
/// the reduced Hessian is not positive definite.
fn newton_target(q: &Quadratic, inactive: &[usize]) -> Option<Vec<f64>> {
    let n = q.len();
    let mut out = vec![0.0; n];
    if inactive.is_empty() {
        return Some(out);
    }
    let k = inactive.len();
    let h = Mat::<f64>::from_fn(k, k, |i, j| q.h[inactive[i]][inactive[j]]);
    let rhs = Mat::<f64>::from_fn(k, 1, |i, _| q.b[inactive[i]] - q.alpha);
    let llt = h.llt(Side::Lower).ok()?;
    let sol = llt.solve(&rhs);
    for (i, &idx) in inactive.iter().enumerate() {
        let v = sol[(i, 0)];
        if !v.is_finite() {
            return None;
        }
        out[idx] = v;
    }
    Some(out)
}

fn coordinate_descent(q: &Quadratic, mut l: Vec<f64>, tol: f64) -> Result<Vec<f64>, SubproblemError> {
    let n = q.len();
    let mut hl = q.apply(&l);
    for _ in 0..MAX_SWEEPS {
        for i in 0..n {
            let hii = q.h[i][i];
            let gi = hl[i] - q.b[i] + q.alpha;
            let new = if hii > 0.0 { (l[i] - gi / hii).max(0.0) } else { 0.0 };
            let delta = new - l[i];
            if delta != 0.0 {
                for (j, v) in hl.iter_mut().enumerate() {
                    *v += q.h[j][i] * delta;
                }
                l[i] = new;
            }
        }
        if q.kkt_residual(&l) <= tol {
            return Ok(l);
        }
    }
    let residual = q.kkt_residual(&l);
    Err(SubproblemError::NoConvergence { last: l, residual })
}

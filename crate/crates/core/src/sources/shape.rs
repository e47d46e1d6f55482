use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{MeasureKind, SourceError, SparseMeasure};
use crate::fem::{barycentric_load, FemMatrices, SparseMatrix};
use crate::geometry::{dist, Point};
use crate::mesh::{NodeGrid, TriMesh};

const RBF_CAP: f64 = 0.5;
const RBF_CUTOFF: f64 = 1e-12 * RBF_CAP;

/// Spatial profile attached to each atom.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ShapeModel {
    /// Radial blob `min(0.5, exp(ln(eps) d^2 / r^2))`, equal to `eps` at
    /// distance `r`. `flip_exponent` flips the exponent, which makes
    /// the profile grow with distance.
    Rbf {
        r: f64,
        #[serde(default = "default_eps")]
        eps: f64,
        #[serde(default)]
        flip_exponent: bool,
    },
    /// Green's function of `eta - gamma Laplace` with Robin coefficient
    /// `beta` (default `sqrt(eta gamma) / 1.42`).
    Elliptic {
        eta: f64,
        gamma: f64,
        #[serde(default)]
        beta: Option<f64>,
    },
    /// Discrete Dirac `M^{-1} b(x)`.
    Dirac,
}

fn default_eps() -> f64 {
    0.01
}

pub fn default_beta(eta: f64, gamma: f64) -> f64 {
    (eta * gamma).sqrt() / 1.42
}

impl ShapeModel {
    pub fn validate(&self) -> Result<(), SourceError> {
        match *self {
            ShapeModel::Rbf { r, eps, .. } => {
                if !(r > 0.0) {
                    return Err(SourceError::InvalidShape(format!("rbf radius must be positive, got {r}")));
                }
                if !(eps > 0.0 && eps < 1.0) {
                    return Err(SourceError::InvalidShape(format!("rbf eps must lie in (0, 1), got {eps}")));
                }
            }
            ShapeModel::Elliptic { eta, gamma, beta } => {
                if !(eta > 0.0 && gamma > 0.0) {
                    return Err(SourceError::InvalidShape(format!("eta and gamma must be positive, got {eta}, {gamma}")));
                }
                if let Some(b) = beta {
                    if !(b >= 0.0) {
                        return Err(SourceError::InvalidShape(format!("beta must be nonnegative, got {b}")));
                    }
                }
            }
            ShapeModel::Dirac => {}
        }
        Ok(())
    }
}

/// Distance beyond which the decaying profile drops below `1e-12 * 0.5`.
pub fn rbf_support_radius(r: f64, eps: f64) -> f64 {
    r * ((RBF_CUTOFF).ln() / eps.ln()).sqrt()
}

pub fn rbf_profile(d: f64, r: f64, eps: f64, flip_exponent: bool) -> f64 {
    let sign = if flip_exponent { -1.0 } else { 1.0 };
    let v = (sign * eps.ln() * d * d / (r * r)).exp().min(RBF_CAP);
    if !flip_exponent && v < RBF_CUTOFF {
        0.0
    } else {
        v
    }
}

/// Nodal interpolant of the decaying radial blob centred at `x_s`.
pub fn eval_rbf(mesh: &TriMesh, x_s: Point, r: f64, eps: f64) -> Result<Vec<f64>, SourceError> {
    ShapeModel::Rbf { r, eps, flip_exponent: false }.validate()?;
    Ok(mesh.nodes().iter().map(|&p| rbf_profile(dist(p, x_s), r, eps, false)).collect())
}

/// Solves `(eta M + gamma K + beta B) m = b(x_s)`.
pub fn eval_elliptic(
    mesh: &TriMesh,
    matrices: &FemMatrices,
    x_s: Point,
    eta: f64,
    gamma: f64,
    beta: f64,
) -> Result<Vec<f64>, SourceError> {
    ShapeModel::Elliptic { eta, gamma, beta: Some(beta) }.validate()?;
    let a = elliptic_matrix(matrices, eta, gamma, beta);
    Ok(a.solve(&barycentric_load(mesh, x_s)?)?)
}

fn elliptic_matrix(matrices: &FemMatrices, eta: f64, gamma: f64, beta: f64) -> SparseMatrix {
    SparseMatrix::linear_combination(&[
        (eta, &matrices.mass),
        (gamma, &matrices.stiffness),
        (beta, &matrices.boundary_mass),
    ])
}

/// A shape model bound to a mesh, with its factorization and index cached.
#[derive(Debug)]
pub struct ShapeOperator<'a> {
    model: ShapeModel,
    mesh: &'a TriMesh,
    mass: &'a SparseMatrix,
    elliptic: Option<SparseMatrix>,
    grid: Option<NodeGrid>,
    support: f64,
    elliptic_solves: AtomicUsize,
}

impl<'a> ShapeOperator<'a> {
    pub fn new(model: ShapeModel, mesh: &'a TriMesh, matrices: &'a FemMatrices) -> Result<Self, SourceError> {
        model.validate()?;
        let (elliptic, grid, support) = match model {
            ShapeModel::Elliptic { eta, gamma, beta } => {
                let a = elliptic_matrix(matrices, eta, gamma, beta.unwrap_or_else(|| default_beta(eta, gamma)));
                a.factorize()?;
                (Some(a), None, 0.0)
            }
            ShapeModel::Rbf { r, eps, flip_exponent } => {
                let support = if flip_exponent { f64::INFINITY } else { rbf_support_radius(r, eps) };
                let bbox = mesh.bounding_box();
                let cell = if support.is_finite() { 0.5 * support } else { bbox.width().max(bbox.height()) };
                (None, Some(NodeGrid::new(mesh.nodes(), cell)), support)
            }
            ShapeModel::Dirac => (None, None, 0.0),
        };
        Ok(Self { model, mesh, mass: &matrices.mass, elliptic, grid, support, elliptic_solves: AtomicUsize::new(0) })
    }

    pub fn model(&self) -> &ShapeModel {
        &self.model
    }

    pub fn elliptic_solves(&self) -> usize {
        self.elliptic_solves.load(Ordering::Relaxed)
    }

    fn solve_elliptic(&self, b: &[f64]) -> Result<Vec<f64>, SourceError> {
        self.elliptic_solves.fetch_add(1, Ordering::Relaxed);
        Ok(self.elliptic.as_ref().expect("elliptic model").solve(b)?)
    }

    /// Nodal field `sum_i lambda_i s(x_i)` of a measure.
    pub fn measure_field(&self, mu: &SparseMeasure) -> Result<Vec<f64>, SourceError> {
        let n = self.mesh.n_nodes();
        if mu.is_empty() {
            return Ok(vec![0.0; n]);
        }
        for (i, a) in mu.atoms.iter().enumerate() {
            if !(a.intensity >= 0.0) || !a.intensity.is_finite() {
                return Err(SourceError::BadIntensity(i));
            }
        }
        match self.model {
            ShapeModel::Rbf { r, eps, flip_exponent } => {
                let mut out = vec![0.0; n];
                for (i, a) in mu.atoms.iter().enumerate() {
                    let x = a.location();
                    self.mesh.locate(x).map_err(|_| SourceError::AtomOutside { index: i, x })?;
                    for (o, &p) in out.iter_mut().zip(self.mesh.nodes()) {
                        *o += a.intensity * rbf_profile(dist(p, x), r, eps, flip_exponent);
                    }
                }
                Ok(out)
            }
            ShapeModel::Elliptic { .. } | ShapeModel::Dirac => {
                let mut load = vec![0.0; n];
                for (i, a) in mu.atoms.iter().enumerate() {
                    let loc = self
                        .mesh
                        .locate(a.location())
                        .map_err(|_| SourceError::AtomOutside { index: i, x: a.location() })?;
                    for (&k, &w) in loc.nodes.iter().zip(&loc.weights) {
                        load[k] += a.intensity * w;
                    }
                }
                match self.model {
                    ShapeModel::Dirac => Ok(self.mass.solve(&load)?),
                    _ => self.solve_elliptic(&load),
                }
            }
        }
    }

    /// Field of a unit atom at mesh node `k`.
    pub fn node_field(&self, k: usize) -> Result<Vec<f64>, SourceError> {
        let x = self.mesh.nodes()[k];
        self.measure_field(&SparseMeasure::new(MeasureKind::Initial, vec![super::Atom::new(x, 1.0)]))
    }

    /// Dual variable `phi(x_k) = -s(x_k)^T q` at every node, where `q` is
    /// the gradient of `<F(m), y>` with respect to the nodal field `m`.
    pub fn dual(&self, q: &[f64]) -> Result<Vec<f64>, SourceError> {
        let n = self.mesh.n_nodes();
        assert_eq!(q.len(), n);
        if q.iter().all(|&v| v == 0.0) {
            return Ok(vec![0.0; n]);
        }
        let mut phi = match self.model {
            ShapeModel::Dirac => self.mass.solve(q)?,
            // the elliptic matrix is symmetric
            ShapeModel::Elliptic { .. } => self.solve_elliptic(q)?,
            ShapeModel::Rbf { r, eps, flip_exponent } => {
                let nodes = self.mesh.nodes();
                let grid = self.grid.as_ref().expect("rbf grid");
                let support = self.support;
                (0..n)
                    .into_par_iter()
                    .map(|k| {
                        let xk = nodes[k];
                        let mut s = 0.0;
                        grid.for_each_candidate(xk, support.min(1e300), |j| {
                            if q[j] != 0.0 {
                                s += rbf_profile(dist(xk, nodes[j]), r, eps, flip_exponent) * q[j];
                            }
                        });
                        s
                    })
                    .collect()
            }
        };
        for v in phi.iter_mut() {
            *v = -*v;
        }
        Ok(phi)
    }
}

/// `(m_I, m_C)` for an initial and a continuous measure.
pub fn measure_to_fields(
    mu_i: &SparseMeasure,
    mu_c: &SparseMeasure,
    shape_i: &ShapeOperator<'_>,
    shape_c: &ShapeOperator<'_>,
) -> Result<(Vec<f64>, Vec<f64>), SourceError> {
    if mu_i.kind != MeasureKind::Initial && !mu_i.is_empty() {
        return Err(SourceError::WrongKind { expected: MeasureKind::Initial, got: mu_i.kind });
    }
    if mu_c.kind != MeasureKind::Continuous && !mu_c.is_empty() {
        return Err(SourceError::WrongKind { expected: MeasureKind::Continuous, got: mu_c.kind });
    }
    Ok((shape_i.measure_field(mu_i)?, shape_c.measure_field(mu_c)?))
}

/// Largest nodal value, ties to the lowest node index.
pub fn argmax_dual(phi: &[f64], mesh: &TriMesh) -> Option<(usize, Point, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (k, &v) in phi.iter().enumerate() {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((k, v));
        }
    }
    best.map(|(k, v)| (k, mesh.nodes()[k], v))
}

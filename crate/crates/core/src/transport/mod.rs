//! Implicit Euler advection-diffusion with SUPG, its discrete adjoint and
//! the observation operator.
//!
//! One step of the forward scheme reads
//! `A u^{n+1} = R (u^n + dt m_C)` with
//! `A = M + dt V + dt kappa K + dt S_tau + Vt_tau` and `R = M + Vt_tau`,
//! where inflow nodes are eliminated from `A` and zeroed in the right-hand
//! side. The adjoint is the exact transpose of this recursion composed with
//! the observation operator.

mod export;
mod observation;

use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fem::{FemError, FemMatrices, SolverError, SparseMatrix, WindField};
use crate::geometry::Point;
use crate::mesh::TriMesh;

pub use export::{write_series_csv, write_trajectory_csv};
pub use observation::{sample_times, time_weights, Observation, ObservationOperator, SensorPlan};

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("invalid transport configuration: {0}")]
    InvalidConfig(String),
    #[error("vector has {got} entries, mesh has {expected} nodes")]
    SizeMismatch { expected: usize, got: usize },
    #[error("non-finite state at step {step}")]
    NonFinite { step: usize },
    #[error("observation {index} at t={t} lies outside the simulated interval")]
    ObservationTime { index: usize, t: f64 },
    #[error("sensor of observation {index} at ({}, {}) is outside the mesh", x[0], x[1])]
    SensorOutside { index: usize, x: Point },
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransportConfig {
    pub kappa: f64,
    pub dt: f64,
    pub n_steps: usize,
    #[serde(default = "default_true")]
    pub stabilization: bool,
}

fn default_true() -> bool {
    true
}

impl TransportConfig {
    pub fn new(kappa: f64, dt: f64, n_steps: usize) -> Self {
        Self { kappa, dt, n_steps, stabilization: true }
    }

    pub fn final_time(&self) -> f64 {
        self.dt * self.n_steps as f64
    }

    pub fn validate(&self) -> Result<(), TransportError> {
        if !(self.kappa > 0.0) {
            return Err(TransportError::InvalidConfig(format!("kappa must be positive, got {}", self.kappa)));
        }
        if !(self.dt > 0.0) {
            return Err(TransportError::InvalidConfig(format!("dt must be positive, got {}", self.dt)));
        }
        if self.n_steps == 0 {
            return Err(TransportError::InvalidConfig("n_steps must be at least 1".into()));
        }
        Ok(())
    }
}

/// Nodal vectors at steps `0..=n_steps`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateTrajectory {
    pub dt: f64,
    pub states: Vec<Vec<f64>>,
}

impl StateTrajectory {
    pub fn n_steps(&self) -> usize {
        self.states.len().saturating_sub(1)
    }

    pub fn last(&self) -> &[f64] {
        self.states.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Output of the backward march.
///
/// `states[n]` holds `z^n = A^{-T}(r_{n+1} + R^T P z^{n+1})` with
/// `z^{n_T} = 0`; `q0 = r_0 + R^T P z^0` is the gradient of
/// `<F(m_I, 0), y>` with respect to `m_I`, and `p0 = M^{-1} q0`.
#[derive(Debug, Clone)]
pub struct AdjointTrajectory {
    pub states: StateTrajectory,
    pub q0: Vec<f64>,
    pub p0: Vec<f64>,
}

/// Mesh, matrices and step operators of one transport problem.
#[derive(Debug)]
pub struct TransportModel {
    mesh: TriMesh,
    matrices: FemMatrices,
    cfg: TransportConfig,
    dirichlet: Vec<bool>,
    step_matrix: SparseMatrix,
    rhs_matrix: SparseMatrix,
    forward_solves: AtomicUsize,
    adjoint_solves: AtomicUsize,
}

impl TransportModel {
    /// Assembles all matrices. Inflow edges of `mesh` become homogeneous
    /// Dirichlet nodes.
    pub fn new(mesh: TriMesh, wind: &WindField, cfg: TransportConfig) -> Result<Self, TransportError> {
        cfg.validate()?;
        let matrices = FemMatrices::assemble(&mesh, wind, cfg.kappa, cfg.stabilization)?;
        Self::from_matrices(mesh, matrices, cfg)
    }

    pub fn from_matrices(mesh: TriMesh, matrices: FemMatrices, cfg: TransportConfig) -> Result<Self, TransportError> {
        cfg.validate()?;
        let dt = cfg.dt;
        let a = SparseMatrix::linear_combination(&[
            (1.0, &matrices.mass),
            (dt, &matrices.advection),
            (dt * cfg.kappa, &matrices.stiffness),
            (dt, &matrices.supg),
            (1.0, &matrices.supg_transport),
        ]);
        let rhs_matrix = SparseMatrix::linear_combination(&[(1.0, &matrices.mass), (1.0, &matrices.supg_transport)]);
        let dirichlet = mesh.dirichlet_mask();
        let step_matrix = a.eliminate_dirichlet(&dirichlet);
        step_matrix.factorize()?;
        Ok(Self {
            mesh,
            matrices,
            cfg,
            dirichlet,
            step_matrix,
            rhs_matrix,
            forward_solves: AtomicUsize::new(0),
            adjoint_solves: AtomicUsize::new(0),
        })
    }

    pub fn mesh(&self) -> &TriMesh {
        &self.mesh
    }

    pub fn matrices(&self) -> &FemMatrices {
        &self.matrices
    }

    pub fn config(&self) -> &TransportConfig {
        &self.cfg
    }

    pub fn dirichlet_mask(&self) -> &[bool] {
        &self.dirichlet
    }

    pub fn n_nodes(&self) -> usize {
        self.mesh.n_nodes()
    }

    pub fn forward_solves(&self) -> usize {
        self.forward_solves.load(Ordering::Relaxed)
    }

    pub fn adjoint_solves(&self) -> usize {
        self.adjoint_solves.load(Ordering::Relaxed)
    }

    pub fn reset_counters(&self) {
        self.forward_solves.store(0, Ordering::Relaxed);
        self.adjoint_solves.store(0, Ordering::Relaxed);
    }

    fn check_len(&self, v: &[f64]) -> Result<(), TransportError> {
        if v.len() != self.n_nodes() {
            return Err(TransportError::SizeMismatch { expected: self.n_nodes(), got: v.len() });
        }
        Ok(())
    }

    fn project(&self, v: &mut [f64]) {
        for (x, &d) in v.iter_mut().zip(&self.dirichlet) {
            if d {
                *x = 0.0;
            }
        }
    }

    /// Marches `u^0 = m_I` forward with the time-constant source `m_C`.
    pub fn forward_solve(&self, m_i: &[f64], m_c: &[f64]) -> Result<StateTrajectory, TransportError> {
        self.check_len(m_i)?;
        self.check_len(m_c)?;
        self.forward_solves.fetch_add(1, Ordering::Relaxed);
        let dt = self.cfg.dt;
        let has_source = m_c.iter().any(|&v| v != 0.0);
        let source = if has_source {
            let scaled: Vec<f64> = m_c.iter().map(|v| dt * v).collect();
            Some(self.rhs_matrix.mul_vec(&scaled))
        } else {
            None
        };
        let mut states = Vec::with_capacity(self.cfg.n_steps + 1);
        states.push(m_i.to_vec());
        for step in 1..=self.cfg.n_steps {
            let prev = &states[step - 1];
            let mut rhs = self.rhs_matrix.mul_vec(prev);
            if let Some(s) = &source {
                for (r, v) in rhs.iter_mut().zip(s) {
                    *r += v;
                }
            }
            self.project(&mut rhs);
            let next = self.step_matrix.solve(&rhs)?;
            if next.iter().any(|v| !v.is_finite()) {
                return Err(TransportError::NonFinite { step });
            }
            states.push(next);
        }
        Ok(StateTrajectory { dt, states })
    }

    pub fn observation_operator(&self, plan: &SensorPlan) -> Result<ObservationOperator, TransportError> {
        ObservationOperator::new(&self.mesh, plan, &self.cfg)
    }

    pub fn observe(&self, traj: &StateTrajectory, plan: &SensorPlan) -> Result<Vec<f64>, TransportError> {
        Ok(self.observation_operator(plan)?.apply(traj))
    }

    /// `F(m_I, m_C)`: forward solve followed by observation.
    pub fn parameter_to_observable(&self, op: &ObservationOperator, m_i: &[f64], m_c: &[f64]) -> Result<Vec<f64>, TransportError> {
        Ok(op.apply(&self.forward_solve(m_i, m_c)?))
    }

    /// Backward march driven by the misfit `y`, the exact transpose of
    /// `observe . forward_solve`.
    pub fn adjoint_solve(&self, op: &ObservationOperator, y: &[f64]) -> Result<AdjointTrajectory, TransportError> {
        if y.len() != op.len() {
            return Err(TransportError::SizeMismatch { expected: op.len(), got: y.len() });
        }
        if let Some(step) = y.iter().position(|v| !v.is_finite()) {
            return Err(TransportError::NonFinite { step });
        }
        self.adjoint_solves.fetch_add(1, Ordering::Relaxed);
        let n = self.n_nodes();
        let steps = self.cfg.n_steps;
        let loaded = op.loaded_steps();
        let mut states = vec![vec![0.0; n]; steps + 1];
        for step in (0..steps).rev() {
            let mut rhs = {
                let mut pz = states[step + 1].clone();
                self.project(&mut pz);
                self.rhs_matrix.mul_vec_transpose(&pz)
            };
            if loaded[step + 1] {
                op.add_load(y, step + 1, &mut rhs);
            }
            let z = self.step_matrix.solve_transpose(&rhs)?;
            if z.iter().any(|v| !v.is_finite()) {
                return Err(TransportError::NonFinite { step });
            }
            states[step] = z;
        }
        let mut pz = states[0].clone();
        self.project(&mut pz);
        let mut q0 = self.rhs_matrix.mul_vec_transpose(&pz);
        if loaded[0] {
            op.add_load(y, 0, &mut q0);
        }
        let p0 = self.matrices.mass.solve(&q0)?;
        Ok(AdjointTrajectory { states: StateTrajectory { dt: self.cfg.dt, states }, q0, p0 })
    }

    /// Gradient of `<F(0, m_C), y>` with respect to `m_C`:
    /// `dt R^T P sum_{n < n_T} z^n`.
    pub fn continuous_gradient(&self, adj: &AdjointTrajectory) -> Vec<f64> {
        let n = self.n_nodes();
        let mut acc = vec![0.0; n];
        for z in &adj.states.states[..self.cfg.n_steps] {
            for (a, v) in acc.iter_mut().zip(z) {
                *a += v;
            }
        }
        self.project(&mut acc);
        let mut c = self.rhs_matrix.mul_vec_transpose(&acc);
        for v in c.iter_mut() {
            *v *= self.cfg.dt;
        }
        c
    }

    /// M-weighted continuous dual `M^{-1} c`, so that
    /// `<F(0, m_C), y> = <m_C, M^{-1} c>_M`.
    pub fn adjoint_continuous_dual(&self, adj: &AdjointTrajectory) -> Result<Vec<f64>, TransportError> {
        Ok(self.matrices.mass.solve(&self.continuous_gradient(adj))?)
    }

    /// `1^T M u`, the total mass of a nodal field.
    pub fn total_mass(&self, u: &[f64]) -> f64 {
        self.matrices.mass.mul_vec(u).iter().sum()
    }
}

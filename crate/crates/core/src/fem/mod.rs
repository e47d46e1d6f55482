//! Linear finite elements: matrices, wind fields and sparse solves.

mod assembly;
mod sparse;
mod wind;

use thiserror::Error;

pub use assembly::{
    assemble_advection, assemble_boundary_mass, assemble_mass, assemble_stiffness, assemble_supg,
    barycentric_load, discrete_dirac, element_tau, p1_gradients, supg_tau, FemMatrices,
};
pub use sparse::{SolverError, SparseMatrix};
pub use wind::{read_wind, write_wind, AnalyticWind, Blocking, WindField};

use crate::mesh::MeshError;

#[derive(Debug, Error)]
pub enum FemError {
    #[error("size mismatch with mesh: expected {expected}, got {got}")]
    MeshMismatch { expected: usize, got: usize },
    #[error("diffusivity must be positive, got {0}")]
    NonPositiveKappa(f64),
    #[error("wind field contains non-finite values")]
    NonFiniteWind,
    #[error("wind file, line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

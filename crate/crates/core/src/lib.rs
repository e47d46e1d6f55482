//! Identification of airborne point sources from sparse sensor time series.
//!
//! The crate is organised bottom-up:
//!
//! - [`mesh`]: structured triangular meshes with rectangular obstacles, point
//!   location and boundary classification.
//! - [`fem`]: linear finite-element matrices (mass, stiffness, advection,
//!   streamline-upwind stabilisation, boundary mass), wind fields and a sparse
//!   matrix type with a cached direct factorisation.
//! - [`transport`]: implicit Euler advection-diffusion, its exact discrete
//!   adjoint and the space-time observation operator.
//! - [`sources`]: sparse measures, the three release shape models and the dual
//!   variables obtained from an adjoint state.
//! - [`inversion`]: the primal-dual active point loop, the nonnegative
//!   intensity subproblem, certificates, post-processing and an L2/CG baseline.
//! - [`scenario`]: configuration, presets, synthetic data, studies and reports.

// `!(x > 0.0)` is used on purpose so NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod fem;
pub mod geometry;
pub mod inversion;
pub mod mesh;
pub mod scenario;
pub mod sources;
pub mod transport;

pub use fem::{FemMatrices, SparseMatrix, WindField};
pub use geometry::{Point, Rect};
pub use inversion::{InversionResult, PdapConfig};
pub use mesh::{BaryLocation, BoundaryMarker, TriMesh};
pub use sources::{Atom, MeasureKind, ShapeModel, SparseMeasure};
pub use transport::{SensorPlan, StateTrajectory, TransportConfig, TransportModel};

//! Sparse source measures, release shape models and dual variables.

mod shape;

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fem::{FemError, SolverError};
use crate::geometry::Point;
use crate::mesh::{MeshError, TriMesh};

pub use shape::{
    argmax_dual, default_beta, eval_elliptic, eval_rbf, measure_to_fields, rbf_profile, rbf_support_radius, ShapeModel,
    ShapeOperator,
};

#[derive(Debug, Error)]
pub enum SourceError {
    #[error("invalid shape model: {0}")]
    InvalidShape(String),
    #[error("atom {0} has negative or non-finite intensity")]
    BadIntensity(usize),
    #[error("atom {index} at ({}, {}) is outside the mesh", x[0], x[1])]
    AtomOutside { index: usize, x: Point },
    #[error("expected a measure of kind {expected:?}, got {got:?}")]
    WrongKind { expected: MeasureKind, got: MeasureKind },
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Whether a measure describes an instantaneous release at `t = 0` or a
/// time-constant emission.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasureKind {
    Initial,
    Continuous,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub x: f64,
    pub y: f64,
    pub intensity: f64,
}

impl Atom {
    pub fn new(p: Point, intensity: f64) -> Self {
        Self { x: p[0], y: p[1], intensity }
    }

    pub fn location(&self) -> Point {
        [self.x, self.y]
    }
}

/// Finite nonnegative combination of point sources.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseMeasure {
    pub kind: MeasureKind,
    pub atoms: Vec<Atom>,
}

impl SparseMeasure {
    pub fn empty(kind: MeasureKind) -> Self {
        Self { kind, atoms: Vec::new() }
    }

    pub fn new(kind: MeasureKind, atoms: Vec<Atom>) -> Self {
        Self { kind, atoms }
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Sum of intensities.
    pub fn total_variation(&self) -> f64 {
        self.atoms.iter().map(|a| a.intensity).sum()
    }

    pub fn intensities(&self) -> Vec<f64> {
        self.atoms.iter().map(|a| a.intensity).collect()
    }

    pub fn validate(&self, mesh: &TriMesh) -> Result<(), SourceError> {
        for (i, a) in self.atoms.iter().enumerate() {
            if !(a.intensity >= 0.0) || !a.intensity.is_finite() {
                return Err(SourceError::BadIntensity(i));
            }
            if mesh.locate(a.location()).is_err() {
                return Err(SourceError::AtomOutside { index: i, x: a.location() });
            }
        }
        Ok(())
    }

    pub fn to_json<W: Write>(&self, w: W) -> Result<(), SourceError> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }

    pub fn from_json<R: Read>(r: R) -> Result<Self, SourceError> {
        Ok(serde_json::from_reader(r)?)
    }
}

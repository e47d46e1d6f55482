//! Two-dimensional triangular meshes.
//!
//! A [`TriMesh`] is immutable once built. It carries its boundary edges (with
//! an inflow/outflow/inner marker each), the per-element diameter and a
//! bucket index used by [`TriMesh::locate`].

mod generate;
mod io;
mod locate;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fem::WindField;
use crate::geometry::{cross, dist, Point};

pub use generate::{build_rect_mesh, snapped_holes};
pub use io::{read_mesh, write_mesh};
pub use locate::NodeGrid;

use locate::TriangleLocator;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("grid needs at least 2 cells per direction, got nx={nx}, ny={ny}")]
    TooFewCells { nx: usize, ny: usize },
    #[error("invalid bounding rectangle")]
    InvalidBounds,
    #[error("hole {0} is degenerate after snapping to the grid")]
    DegenerateHole(usize),
    #[error("hole {0} is not contained in the domain bounds")]
    HoleOutOfBounds(usize),
    #[error("holes {0} and {1} overlap")]
    OverlappingHoles(usize, usize),
    #[error("holes cover the whole domain")]
    HoleCoversDomain,
    #[error("triangle {tri} references node {node}, but the mesh has {n_nodes} nodes")]
    NodeOutOfRange { tri: usize, node: usize, n_nodes: usize },
    #[error("triangle {0} has zero area")]
    DegenerateTriangle(usize),
    #[error("edge ({0}, {1}) is shared by more than two triangles")]
    NonManifoldEdge(usize, usize),
    #[error("({0}, {1}) is not a boundary edge")]
    NotABoundaryEdge(usize, usize),
    #[error("point ({0}, {1}) is outside the meshed region")]
    PointNotFound(f64, f64),
    #[error("expected {expected} boundary markers, got {got}")]
    MarkerCount { expected: usize, got: usize },
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Classification of a boundary edge with respect to the wind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryMarker {
    Inflow,
    Outflow,
    Inner,
}

impl BoundaryMarker {
    pub fn as_str(&self) -> &'static str {
        match self {
            BoundaryMarker::Inflow => "inflow",
            BoundaryMarker::Outflow => "outflow",
            BoundaryMarker::Inner => "inner",
        }
    }
}

impl std::str::FromStr for BoundaryMarker {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "inflow" => Ok(BoundaryMarker::Inflow),
            "outflow" => Ok(BoundaryMarker::Outflow),
            "inner" => Ok(BoundaryMarker::Inner),
            other => Err(format!("unknown boundary marker `{other}`")),
        }
    }
}

/// A boundary edge, oriented counter-clockwise with respect to its triangle
/// so that the outward normal is `(dy, -dx) / len`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryEdge {
    pub nodes: [usize; 2],
    pub triangle: usize,
    pub marker: BoundaryMarker,
}

/// Barycentric location of a point: containing triangle and weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaryLocation {
    pub tri_index: usize,
    pub nodes: [usize; 3],
    pub weights: [f64; 3],
}

impl BaryLocation {
    /// Linear interpolation of a nodal vector at the located point.
    pub fn interpolate(&self, values: &[f64]) -> f64 {
        self.nodes
            .iter()
            .zip(self.weights.iter())
            .map(|(&n, &w)| w * values[n])
            .sum()
    }
}

#[derive(Debug, Clone)]
pub struct TriMesh {
    nodes: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    boundary_edges: Vec<BoundaryEdge>,
    elem_diameter: Vec<f64>,
    locator: TriangleLocator,
}

impl TriMesh {
    /// Builds a mesh from raw connectivity. Clockwise triangles are
    /// reoriented; zero-area triangles are rejected.
    pub fn new(nodes: Vec<Point>, mut triangles: Vec<[usize; 3]>) -> Result<Self, MeshError> {
        let n_nodes = nodes.len();
        for (t, tri) in triangles.iter_mut().enumerate() {
            for &node in tri.iter() {
                if node >= n_nodes {
                    return Err(MeshError::NodeOutOfRange { tri: t, node, n_nodes });
                }
            }
            let area2 = cross(nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]);
            if area2.abs() <= f64::EPSILON * diameter(&nodes, tri).powi(2) {
                return Err(MeshError::DegenerateTriangle(t));
            }
            if area2 < 0.0 {
                tri.swap(1, 2);
            }
        }

        let mut edge_owner: HashMap<(usize, usize), (usize, usize, usize)> = HashMap::new();
        for (t, tri) in triangles.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                let entry = edge_owner.entry(key).or_insert((0, t, a));
                entry.0 += 1;
                if entry.0 > 2 {
                    return Err(MeshError::NonManifoldEdge(key.0, key.1));
                }
                if entry.0 == 1 {
                    *entry = (1, t, a);
                }
            }
        }
        let mut boundary_edges: Vec<BoundaryEdge> = edge_owner
            .into_iter()
            .filter(|(_, (count, _, _))| *count == 1)
            .map(|((lo, hi), (_, t, first))| {
                let other = if first == lo { hi } else { lo };
                BoundaryEdge {
                    nodes: [first, other],
                    triangle: t,
                    marker: BoundaryMarker::Inner,
                }
            })
            .collect();
        boundary_edges.sort_by_key(|e| (e.triangle, e.nodes));

        let elem_diameter = triangles.iter().map(|t| diameter(&nodes, t)).collect();
        let locator = TriangleLocator::new(&nodes, &triangles);
        Ok(Self {
            nodes,
            triangles,
            boundary_edges,
            elem_diameter,
            locator,
        })
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary_edges
    }

    pub fn elem_diameter(&self) -> &[f64] {
        &self.elem_diameter
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn vertices(&self, t: usize) -> [Point; 3] {
        let tri = self.triangles[t];
        [self.nodes[tri[0]], self.nodes[tri[1]], self.nodes[tri[2]]]
    }

    pub fn area(&self, t: usize) -> f64 {
        let [a, b, c] = self.vertices(t);
        0.5 * cross(a, b, c)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.n_triangles()).map(|t| self.area(t)).sum()
    }

    pub fn max_diameter(&self) -> f64 {
        self.elem_diameter.iter().cloned().fold(0.0, f64::max)
    }

    pub fn bounding_box(&self) -> crate::Rect {
        self.locator.bounds()
    }

    /// Outward unit normal and length of a boundary edge.
    pub fn edge_normal(&self, edge: &BoundaryEdge) -> ([f64; 2], f64) {
        let a = self.nodes[edge.nodes[0]];
        let b = self.nodes[edge.nodes[1]];
        let len = dist(a, b);
        ([(b[1] - a[1]) / len, -(b[0] - a[0]) / len], len)
    }

    /// Nodes touched by inflow edges (homogeneous Dirichlet nodes).
    pub fn dirichlet_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.n_nodes()];
        for e in self.boundary_edges.iter().filter(|e| e.marker == BoundaryMarker::Inflow) {
            mask[e.nodes[0]] = true;
            mask[e.nodes[1]] = true;
        }
        mask
    }

    pub fn boundary_markers(&self) -> Vec<BoundaryMarker> {
        self.boundary_edges.iter().map(|e| e.marker).collect()
    }

    /// Returns a copy carrying the given per-edge markers.
    pub fn with_boundary_markers(&self, markers: &[BoundaryMarker]) -> Result<Self, MeshError> {
        if markers.len() != self.boundary_edges.len() {
            return Err(MeshError::MarkerCount {
                expected: self.boundary_edges.len(),
                got: markers.len(),
            });
        }
        let mut out = self.clone();
        for (e, &m) in out.boundary_edges.iter_mut().zip(markers) {
            e.marker = m;
        }
        Ok(out)
    }

    /// Index of the boundary edge joining `a` and `b`, in either orientation.
    pub fn find_boundary_edge(&self, a: usize, b: usize) -> Option<usize> {
        self.boundary_edges.iter().position(|e| {
            (e.nodes[0] == a && e.nodes[1] == b) || (e.nodes[0] == b && e.nodes[1] == a)
        })
    }

    /// Finds the triangle containing `x` and its barycentric weights.
    ///
    /// Points on shared edges or vertices resolve to the lowest triangle
    /// index among all containing triangles.
    pub fn locate(&self, x: Point) -> Result<BaryLocation, MeshError> {
        self.locator
            .locate(&self.nodes, &self.triangles, x)
            .ok_or(MeshError::PointNotFound(x[0], x[1]))
    }

    /// Node-to-node adjacency (sorted, without self).
    pub fn node_neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n_nodes()];
        for tri in &self.triangles {
            for i in 0..3 {
                for j in 0..3 {
                    if i != j {
                        adj[tri[i]].push(tri[j]);
                    }
                }
            }
        }
        for list in adj.iter_mut() {
            list.sort_unstable();
            list.dedup();
        }
        adj
    }
}

fn diameter(nodes: &[Point], tri: &[usize; 3]) -> f64 {
    let [a, b, c] = [nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]];
    dist(a, b).max(dist(b, c)).max(dist(c, a))
}

/// Marks each boundary edge as inflow, outflow or inner from the sign of the
/// wind's normal component at the edge midpoint.
///
/// An edge is outflow when `v.n > tol_n * |v|_max`, inflow when
/// `v.n < -tol_n * |v|_max`, and inner otherwise.
pub fn classify_boundary(mesh: &TriMesh, wind: &WindField, tol_n: f64) -> Vec<BoundaryMarker> {
    let vmax = wind.max_speed();
    let threshold = tol_n * vmax;
    mesh.boundary_edges()
        .iter()
        .map(|e| {
            let vn = wind.edge_normal_velocity(mesh, e);
            if vn > threshold {
                BoundaryMarker::Outflow
            } else if vn < -threshold {
                BoundaryMarker::Inflow
            } else {
                BoundaryMarker::Inner
            }
        })
        .collect()
}

pub const DEFAULT_NORMAL_TOL: f64 = 1e-10;

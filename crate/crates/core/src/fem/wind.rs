use std::f64::consts::PI;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::FemError;
use crate::geometry::{Point, Rect};
use crate::mesh::{BoundaryEdge, TriMesh};

/// Analytic wind fields, all defined through a stream function `psi` with
/// `v = (d psi/dy, -d psi/dx)`, so they are divergence free.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnalyticWind {
    /// Constant wind `(vx, vy)`.
    Uniform { vx: f64, vy: f64 },
    /// Gaussian vortex `psi = strength * exp(-|x - c|^2 / width^2)`, shifted
    /// and cut off at `4 width` so it vanishes exactly away from the core.
    Vortex {
        cx: f64,
        cy: f64,
        strength: f64,
        #[serde(default = "default_vortex_width")]
        width: f64,
    },
    /// One closed cell filling the domain, tangential to the outer walls.
    Cellular { strength: f64 },
    /// Two counter-rotating cells side by side, tangential to the outer
    /// walls; flow rises along both side walls and sinks in the middle.
    DoubleGyre { strength: f64 },
}

fn default_vortex_width() -> f64 {
    0.1
}

const VORTEX_CUTOFF: f64 = 4.0;

impl AnalyticWind {
    /// Stream function at `x` for a domain with bounding box `b`.
    pub fn stream(&self, b: &Rect, x: Point) -> f64 {
        let xh = (x[0] - b.x0) / b.width();
        let yh = (x[1] - b.y0) / b.height();
        match *self {
            AnalyticWind::Uniform { vx, vy } => vx * x[1] - vy * x[0],
            AnalyticWind::Vortex { cx, cy, strength, width } => {
                let r2 = ((x[0] - cx).powi(2) + (x[1] - cy).powi(2)) / (width * width);
                let floor = (-VORTEX_CUTOFF * VORTEX_CUTOFF).exp();
                strength * ((-r2).exp() - floor).max(0.0)
            }
            AnalyticWind::Cellular { strength } => {
                strength * b.width().min(b.height()) / PI * (PI * xh).sin() * (PI * yh).sin()
            }
            AnalyticWind::DoubleGyre { strength } => {
                -strength * b.width() / (2.0 * PI) * (2.0 * PI * xh).sin() * (PI * yh).sin()
            }
        }
    }

    /// Value of the stream function on the outer walls, if it is constant there.
    fn wall_value(&self) -> Option<f64> {
        match self {
            AnalyticWind::Uniform { .. } => None,
            _ => Some(0.0),
        }
    }

    pub fn describe(&self) -> String {
        match *self {
            AnalyticWind::Uniform { vx, vy } => format!("uniform({vx},{vy})"),
            AnalyticWind::Vortex { cx, cy, strength, width } => format!("vortex({cx},{cy},{strength},width={width})"),
            AnalyticWind::Cellular { strength } => format!("cellular({strength})"),
            AnalyticWind::DoubleGyre { strength } => format!("double_gyre({strength})"),
        }
    }
}

/// Rectangular obstacles that the stream function is bent around.
///
/// Within `length` of a building the stream function is blended towards a
/// constant, which makes the building walls streamlines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Blocking {
    pub buildings: Vec<Rect>,
    pub length: f64,
}

/// Velocity field on a mesh: nodal vectors plus one vector per element.
///
/// Fields built from a stream function use the exact curl of its P1
/// interpolant on each element; the nodal vectors are area-weighted averages.
#[derive(Debug, Clone)]
pub struct WindField {
    nodal: Vec<[f64; 2]>,
    elem: Vec<[f64; 2]>,
    stream: Option<Vec<f64>>,
    provenance: String,
}

impl WindField {
    pub fn zero(mesh: &TriMesh) -> Self {
        Self::from_nodal(mesh, vec![[0.0; 2]; mesh.n_nodes()], "zero".into()).expect("sizes match")
    }

    /// Wind given by nodal vectors, averaged to element midpoints.
    pub fn from_nodal(mesh: &TriMesh, nodal: Vec<[f64; 2]>, provenance: String) -> Result<Self, FemError> {
        if nodal.len() != mesh.n_nodes() {
            return Err(FemError::MeshMismatch { expected: mesh.n_nodes(), got: nodal.len() });
        }
        if nodal.iter().any(|v| !v[0].is_finite() || !v[1].is_finite()) {
            return Err(FemError::NonFiniteWind);
        }
        let elem = mesh
            .triangles()
            .iter()
            .map(|t| {
                let s = t.iter().fold([0.0, 0.0], |acc, &n| [acc[0] + nodal[n][0], acc[1] + nodal[n][1]]);
                [s[0] / 3.0, s[1] / 3.0]
            })
            .collect();
        Ok(Self { nodal, elem, stream: None, provenance })
    }

    /// Wind from nodal stream function values.
    pub fn from_stream_function(mesh: &TriMesh, psi: Vec<f64>, provenance: String) -> Result<Self, FemError> {
        if psi.len() != mesh.n_nodes() {
            return Err(FemError::MeshMismatch { expected: mesh.n_nodes(), got: psi.len() });
        }
        if psi.iter().any(|v| !v.is_finite()) {
            return Err(FemError::NonFiniteWind);
        }
        let mut elem = Vec::with_capacity(mesh.n_triangles());
        let mut acc = vec![[0.0; 2]; mesh.n_nodes()];
        let mut weight = vec![0.0; mesh.n_nodes()];
        for (t, tri) in mesh.triangles().iter().enumerate() {
            let g = super::assembly::p1_gradients(mesh, t);
            let grad = (0..3).fold([0.0, 0.0], |a, k| [a[0] + psi[tri[k]] * g[k][0], a[1] + psi[tri[k]] * g[k][1]]);
            let v = [grad[1], -grad[0]];
            elem.push(v);
            let area = mesh.area(t);
            for &n in tri {
                acc[n][0] += area * v[0];
                acc[n][1] += area * v[1];
                weight[n] += area;
            }
        }
        let nodal = acc
            .iter()
            .zip(&weight)
            .map(|(a, &w)| if w > 0.0 { [a[0] / w, a[1] / w] } else { [0.0, 0.0] })
            .collect();
        Ok(Self { nodal, elem, stream: Some(psi), provenance })
    }

    /// Evaluates an analytic field on the mesh, optionally bent around buildings.
    pub fn analytic(mesh: &TriMesh, field: &AnalyticWind, blocking: Option<&Blocking>) -> Result<Self, FemError> {
        let b = mesh.bounding_box();
        let psi: Vec<f64> = mesh
            .nodes()
            .iter()
            .map(|&x| match blocking {
                Some(bl) if !bl.buildings.is_empty() && bl.length > 0.0 => blocked_stream(field, &b, bl, x),
                _ => field.stream(&b, x),
            })
            .collect();
        let mut name = field.describe();
        if let Some(bl) = blocking.filter(|bl| !bl.buildings.is_empty()) {
            name.push_str(&format!(" blocked({} buildings, length={})", bl.buildings.len(), bl.length));
        }
        Self::from_stream_function(mesh, psi, name)
    }

    pub fn nodal(&self) -> &[[f64; 2]] {
        &self.nodal
    }

    /// Element-midpoint wind, one vector per triangle.
    pub fn elem(&self) -> &[[f64; 2]] {
        &self.elem
    }

    pub fn stream(&self) -> Option<&[f64]> {
        self.stream.as_deref()
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn n_nodes(&self) -> usize {
        self.nodal.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.elem.len()
    }

    pub fn max_speed(&self) -> f64 {
        self.nodal
            .iter()
            .chain(self.elem.iter())
            .map(|v| v[0].hypot(v[1]))
            .fold(0.0, f64::max)
    }

    /// Normal component of the wind on a boundary edge, evaluated at its
    /// midpoint (exact edge flux per length for stream-function fields).
    pub fn edge_normal_velocity(&self, mesh: &TriMesh, edge: &BoundaryEdge) -> f64 {
        let [a, b] = edge.nodes;
        let (n, len) = mesh.edge_normal(edge);
        match &self.stream {
            Some(psi) => (psi[b] - psi[a]) / len,
            None => {
                let v = [0.5 * (self.nodal[a][0] + self.nodal[b][0]), 0.5 * (self.nodal[a][1] + self.nodal[b][1])];
                v[0] * n[0] + v[1] * n[1]
            }
        }
    }

    pub fn check_mesh(&self, mesh: &TriMesh) -> Result<(), FemError> {
        if self.n_nodes() != mesh.n_nodes() {
            return Err(FemError::MeshMismatch { expected: mesh.n_nodes(), got: self.n_nodes() });
        }
        if self.n_triangles() != mesh.n_triangles() {
            return Err(FemError::MeshMismatch { expected: mesh.n_triangles(), got: self.n_triangles() });
        }
        Ok(())
    }
}

fn blocked_stream(field: &AnalyticWind, b: &Rect, bl: &Blocking, x: Point) -> f64 {
    let mut num_w = Vec::with_capacity(bl.buildings.len());
    for h in &bl.buildings {
        let gap = [h.x0 - b.x0, h.y0 - b.y0, b.x1 - h.x1, b.y1 - h.y1].into_iter().fold(f64::INFINITY, f64::min);
        let (len, target) = match field.wall_value() {
            Some(w) if gap < bl.length => (bl.length, w),
            _ => (bl.length.min(gap), field.stream(b, h.center())),
        };
        let e = if len > 0.0 { (1.0 - h.distance(x) / len).max(0.0).powi(2) } else { 0.0 };
        num_w.push((e, target));
    }
    let w0: f64 = num_w.iter().map(|(e, _)| 1.0 - e).product();
    let mut num = w0 * field.stream(b, x);
    let mut den = w0;
    for (h, &(e, target)) in num_w.iter().enumerate() {
        let others: f64 = num_w.iter().enumerate().filter(|(k, _)| *k != h).map(|(_, (ek, _))| 1.0 - ek).product();
        let w = e * others;
        num += w * target;
        den += w;
    }
    if den > 0.0 {
        num / den
    } else {
        // touching zones of two buildings; fall back to their mean constant
        let active: Vec<_> = num_w.iter().filter(|(e, _)| *e >= 1.0).collect();
        active.iter().map(|(_, t)| t).sum::<f64>() / active.len().max(1) as f64
    }
}

/// Writes the ASCII `windfield 2` format (nodal vectors).
pub fn write_wind<W: Write>(wind: &WindField, mut w: W) -> Result<(), FemError> {
    writeln!(w, "windfield 2")?;
    writeln!(w, "nodes {}", wind.n_nodes())?;
    for v in wind.nodal() {
        writeln!(w, "{} {}", v[0], v[1])?;
    }
    Ok(())
}

/// Reads the ASCII `windfield 2` format and attaches it to `mesh`.
pub fn read_wind<R: BufRead>(mesh: &TriMesh, r: R, provenance: String) -> Result<WindField, FemError> {
    let mut tokens = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let content = line.split('#').next().unwrap_or("");
        tokens.extend(content.split_whitespace().map(|t| (lineno + 1, t.to_string())));
    }
    let mut it = tokens.into_iter();
    let mut last_line = 0;
    let mut next = |what: &str| -> Result<String, FemError> {
        match it.next() {
            Some((l, t)) => {
                last_line = l;
                Ok(t)
            }
            None => Err(FemError::Parse { line: last_line, msg: format!("missing {what}") }),
        }
    };
    let bad = |line: usize, msg: String| FemError::Parse { line, msg };
    if next("header")? != "windfield" {
        return Err(bad(1, "expected `windfield 2` header".into()));
    }
    if next("dimension")? != "2" {
        return Err(bad(1, "unsupported dimension".into()));
    }
    if next("`nodes`")? != "nodes" {
        return Err(bad(2, "expected `nodes N`".into()));
    }
    let n_tok = next("node count")?;
    let n: usize = n_tok.parse().map_err(|_| bad(2, format!("invalid node count `{n_tok}`")))?;
    let mut nodal = Vec::with_capacity(n);
    for _ in 0..n {
        let a = next("vx")?;
        let b = next("vy")?;
        let vx: f64 = a.parse().map_err(|_| FemError::Parse { line: 0, msg: format!("invalid value `{a}`") })?;
        let vy: f64 = b.parse().map_err(|_| FemError::Parse { line: 0, msg: format!("invalid value `{b}`") })?;
        nodal.push([vx, vy]);
    }
    WindField::from_nodal(mesh, nodal, provenance)
}

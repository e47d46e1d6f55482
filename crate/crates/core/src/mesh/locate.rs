use crate::geometry::{cross, Point, Rect};

use super::BaryLocation;

const BARY_TOL: f64 = 1e-12;

/// Uniform bucket grid over triangle bounding boxes.
#[derive(Debug, Clone)]
pub(super) struct TriangleLocator {
    bounds: Rect,
    nx: usize,
    ny: usize,
    // triangle ids per bucket, ascending
    buckets: Vec<Vec<usize>>,
}

impl TriangleLocator {
    pub(super) fn new(nodes: &[Point], triangles: &[[usize; 3]]) -> Self {
        let bounds = bounding_rect(nodes);
        let side = ((triangles.len() as f64).sqrt().ceil() as usize).max(1);
        let (nx, ny) = grid_shape(&bounds, side);
        let mut buckets = vec![Vec::new(); nx * ny];
        let grid = GridMap { bounds, nx, ny };
        for (t, tri) in triangles.iter().enumerate() {
            let xs = tri.map(|n| nodes[n][0]);
            let ys = tri.map(|n| nodes[n][1]);
            let (i0, j0) = grid.cell([min3(xs), min3(ys)]);
            let (i1, j1) = grid.cell([max3(xs), max3(ys)]);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    buckets[j * nx + i].push(t);
                }
            }
        }
        Self { bounds, nx, ny, buckets }
    }

    pub(super) fn bounds(&self) -> Rect {
        self.bounds
    }

    pub(super) fn locate(&self, nodes: &[Point], triangles: &[[usize; 3]], x: Point) -> Option<BaryLocation> {
        if !x[0].is_finite() || !x[1].is_finite() {
            return None;
        }
        let slack = 1e-12 * (self.bounds.width() + self.bounds.height());
        if x[0] < self.bounds.x0 - slack
            || x[0] > self.bounds.x1 + slack
            || x[1] < self.bounds.y0 - slack
            || x[1] > self.bounds.y1 + slack
        {
            return None;
        }
        let grid = GridMap { bounds: self.bounds, nx: self.nx, ny: self.ny };
        // cell() is monotone, so every triangle whose box holds x is
        // registered in x's own bucket; ids are ascending there
        let (i, j) = grid.cell(x);
        self.buckets[j * self.nx + i]
            .iter()
            .find_map(|&t| barycentric(nodes, triangles, t, x))
    }
}

/// Barycentric weights of `x` in triangle `t`, or `None` if outside.
fn barycentric(nodes: &[Point], triangles: &[[usize; 3]], t: usize, x: Point) -> Option<BaryLocation> {
    let tri = triangles[t];
    let [a, b, c] = [nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]];
    let det = cross(a, b, c);
    let mut w = [cross(x, b, c) / det, cross(a, x, c) / det, cross(a, b, x) / det];
    if w.iter().any(|&wi| wi < -BARY_TOL) {
        return None;
    }
    for wi in w.iter_mut() {
        *wi = wi.clamp(0.0, 1.0);
    }
    let s: f64 = w.iter().sum();
    for wi in w.iter_mut() {
        *wi /= s;
    }
    Some(BaryLocation { tri_index: t, nodes: tri, weights: w })
}

#[derive(Debug, Clone, Copy)]
struct GridMap {
    bounds: Rect,
    nx: usize,
    ny: usize,
}

impl GridMap {
    fn cell(&self, p: Point) -> (usize, usize) {
        let fx = (p[0] - self.bounds.x0) / self.bounds.width() * self.nx as f64;
        let fy = (p[1] - self.bounds.y0) / self.bounds.height() * self.ny as f64;
        let i = (fx.floor().max(0.0) as usize).min(self.nx - 1);
        let j = (fy.floor().max(0.0) as usize).min(self.ny - 1);
        (i, j)
    }
}

fn grid_shape(bounds: &Rect, side: usize) -> (usize, usize) {
    let aspect = bounds.width() / bounds.height();
    let nx = ((side as f64 * aspect.sqrt()).round() as usize).max(1);
    let ny = ((side as f64 / aspect.sqrt()).round() as usize).max(1);
    (nx, ny)
}

fn bounding_rect(nodes: &[Point]) -> Rect {
    let mut r = Rect::new(f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in nodes {
        r.x0 = r.x0.min(p[0]);
        r.y0 = r.y0.min(p[1]);
        r.x1 = r.x1.max(p[0]);
        r.y1 = r.y1.max(p[1]);
    }
    if !r.is_valid() {
        // empty or degenerate node set; keep a unit box so lookups fail cleanly
        r = Rect::new(r.x0.min(0.0), r.y0.min(0.0), r.x0.min(0.0) + 1.0, r.y0.min(0.0) + 1.0);
    }
    r
}

fn min3(v: [f64; 3]) -> f64 {
    v[0].min(v[1]).min(v[2])
}

fn max3(v: [f64; 3]) -> f64 {
    v[0].max(v[1]).max(v[2])
}

/// Bucket index over mesh nodes for radius queries.
#[derive(Debug, Clone)]
pub struct NodeGrid {
    map: GridMap,
    buckets: Vec<Vec<usize>>,
}

impl NodeGrid {
    /// Builds an index with buckets of roughly `cell` meters.
    pub fn new(nodes: &[Point], cell: f64) -> Self {
        let bounds = bounding_rect(nodes);
        let nx = ((bounds.width() / cell).ceil() as usize).clamp(1, 4096);
        let ny = ((bounds.height() / cell).ceil() as usize).clamp(1, 4096);
        let grid = GridMap { bounds, nx, ny };
        let mut buckets = vec![Vec::new(); nx * ny];
        for (k, p) in nodes.iter().enumerate() {
            let (i, j) = grid.cell(*p);
            buckets[j * nx + i].push(k);
        }
        Self { map: grid, buckets }
    }

    /// Calls `f(node)` for every node within `radius` of `center`
    /// (bucket-level filter only; callers check the exact distance).
    pub fn for_each_candidate(&self, center: Point, radius: f64, mut f: impl FnMut(usize)) {
        let grid = self.map;
        let (i0, j0) = grid.cell([center[0] - radius, center[1] - radius]);
        let (i1, j1) = grid.cell([center[0] + radius, center[1] + radius]);
        for j in j0..=j1 {
            for i in i0..=i1 {
                for &k in &self.buckets[j * self.map.nx + i] {
                    f(k);
                }
            }
        }
    }
}

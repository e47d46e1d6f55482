use crate::geometry::Rect;

use super::{MeshError, TriMesh};

/// Structured triangulation of `bounds` with `nx * ny` cells, two triangles
/// per cell, diagonals alternating in a checkerboard pattern. Holes are
/// snapped to the nearest grid lines and their cells removed.
pub fn build_rect_mesh(bounds: Rect, nx: usize, ny: usize, holes: &[Rect]) -> Result<TriMesh, MeshError> {
    let snapped = snap_cells(bounds, nx, ny, holes)?;
    let hx = bounds.width() / nx as f64;
    let hy = bounds.height() / ny as f64;

    let in_hole = |i: usize, j: usize| snapped.iter().any(|c| i >= c[0] && i < c[1] && j >= c[2] && j < c[3]);
    let grid_id = |i: usize, j: usize| j * (nx + 1) + i;

    let mut triangles_grid = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            if in_hole(i, j) {
                continue;
            }
            let (a, b, c, d) = (grid_id(i, j), grid_id(i + 1, j), grid_id(i + 1, j + 1), grid_id(i, j + 1));
            if (i + j) % 2 == 0 {
                triangles_grid.push([a, b, c]);
                triangles_grid.push([a, c, d]);
            } else {
                triangles_grid.push([a, b, d]);
                triangles_grid.push([b, c, d]);
            }
        }
    }
    if triangles_grid.is_empty() {
        return Err(MeshError::HoleCoversDomain);
    }

    // drop grid nodes that lie strictly inside holes, keep lexicographic order
    let mut used = vec![false; (nx + 1) * (ny + 1)];
    for tri in &triangles_grid {
        for &n in tri {
            used[n] = true;
        }
    }
    let mut new_id = vec![usize::MAX; used.len()];
    let mut nodes = Vec::new();
    for j in 0..=ny {
        for i in 0..=nx {
            let g = grid_id(i, j);
            if used[g] {
                new_id[g] = nodes.len();
                let x = grid_coord(bounds.x0, bounds.x1, hx, i, nx);
                let y = grid_coord(bounds.y0, bounds.y1, hy, j, ny);
                nodes.push([x, y]);
            }
        }
    }
    let triangles = triangles_grid.into_iter().map(|t| t.map(|n| new_id[n])).collect();
    TriMesh::new(nodes, triangles)
}

fn grid_coord(origin: f64, end: f64, h: f64, i: usize, n: usize) -> f64 {
    if i == n {
        end
    } else {
        origin + i as f64 * h
    }
}

/// The holes as they appear in the mesh built by [`build_rect_mesh`] with
/// the same arguments, i.e. snapped to grid lines.
pub fn snapped_holes(bounds: Rect, nx: usize, ny: usize, holes: &[Rect]) -> Result<Vec<Rect>, MeshError> {
    let cells = snap_cells(bounds, nx, ny, holes)?;
    let hx = bounds.width() / nx as f64;
    let hy = bounds.height() / ny as f64;
    Ok(cells
        .iter()
        .map(|c| {
            Rect::new(
                grid_coord(bounds.x0, bounds.x1, hx, c[0], nx),
                grid_coord(bounds.y0, bounds.y1, hy, c[2], ny),
                grid_coord(bounds.x0, bounds.x1, hx, c[1], nx),
                grid_coord(bounds.y0, bounds.y1, hy, c[3], ny),
            )
        })
        .collect())
}

// snapped holes as half-open cell index ranges [i0, i1) x [j0, j1)
fn snap_cells(bounds: Rect, nx: usize, ny: usize, holes: &[Rect]) -> Result<Vec<[usize; 4]>, MeshError> {
    if nx < 2 || ny < 2 {
        return Err(MeshError::TooFewCells { nx, ny });
    }
    if !bounds.is_valid() {
        return Err(MeshError::InvalidBounds);
    }
    let hx = bounds.width() / nx as f64;
    let hy = bounds.height() / ny as f64;

    let mut snapped: Vec<[usize; 4]> = Vec::with_capacity(holes.len());
    for (k, hole) in holes.iter().enumerate() {
        if !hole.is_valid() {
            return Err(MeshError::DegenerateHole(k));
        }
        if hole.contains_rect(&bounds) {
            return Err(MeshError::HoleCoversDomain);
        }
        if !bounds.contains_rect(hole) {
            return Err(MeshError::HoleOutOfBounds(k));
        }
        let snap = |v: f64, origin: f64, h: f64, n: usize| (((v - origin) / h).round().max(0.0) as usize).min(n);
        let cells = [
            snap(hole.x0, bounds.x0, hx, nx),
            snap(hole.x1, bounds.x0, hx, nx),
            snap(hole.y0, bounds.y0, hy, ny),
            snap(hole.y1, bounds.y0, hy, ny),
        ];
        if cells[0] >= cells[1] || cells[2] >= cells[3] {
            return Err(MeshError::DegenerateHole(k));
        }
        for (other, prev) in snapped.iter().enumerate() {
            let overlap_x = cells[0] < prev[1] && prev[0] < cells[1];
            let overlap_y = cells[2] < prev[3] && prev[2] < cells[3];
            if overlap_x && overlap_y {
                return Err(MeshError::OverlappingHoles(other, k));
            }
        }
        snapped.push(cells);
    }

    Ok(snapped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn unit_square_two_by_two() {
        let m = build_rect_mesh(Rect::unit(), 2, 2, &[]).unwrap();
        assert_eq!(m.n_nodes(), 9);
        assert_eq!(m.n_triangles(), 8);
        assert_eq!(m.boundary_edges().len(), 8);
    }

    #[test]
    fn triangle_count_with_one_cell_hole() {
        // oracle: count cells not covered by the hole, two triangles each
        let (nx, ny) = (4, 4);
        let hole = Rect::new(0.25, 0.5, 0.5, 0.75);
        let mut free_cells = 0;
        for j in 0..ny {
            for i in 0..nx {
                let c = [(i as f64 + 0.5) / nx as f64, (j as f64 + 0.5) / ny as f64];
                if !hole.contains(c) {
                    free_cells += 1;
                }
            }
        }
        let m = build_rect_mesh(Rect::unit(), nx, ny, &[hole]).unwrap();
        assert_eq!(m.n_triangles(), 2 * free_cells);
        assert_eq!(m.n_triangles(), 30);
        // the hole's four edges become boundary edges
        assert_eq!(m.boundary_edges().len(), 16 + 4);
    }

    #[test]
    fn rejects_degenerate_input() {
        assert!(matches!(build_rect_mesh(Rect::unit(), 1, 4, &[]), Err(MeshError::TooFewCells { .. })));
        let overlapping = [Rect::new(0.2, 0.2, 0.6, 0.6), Rect::new(0.5, 0.5, 0.8, 0.8)];
        assert!(matches!(
            build_rect_mesh(Rect::unit(), 10, 10, &overlapping),
            Err(MeshError::OverlappingHoles(0, 1))
        ));
        assert!(matches!(
            build_rect_mesh(Rect::unit(), 4, 4, &[Rect::unit()]),
            Err(MeshError::HoleCoversDomain)
        ));
        assert!(matches!(
            build_rect_mesh(Rect::unit(), 4, 4, &[Rect::new(0.5, 0.5, 1.5, 0.75)]),
            Err(MeshError::HoleOutOfBounds(0))
        ));
    }

    #[test]
    fn area_and_edge_sharing() {
        let holes = [Rect::new(0.25, 0.15, 0.5, 0.4), Rect::new(0.6, 0.6, 0.75, 0.85)];
        let m = build_rect_mesh(Rect::unit(), 20, 20, &holes).unwrap();
        // snapped holes: [5,10]x[3,8] and [12,15]x[12,17] cells of 1/20
        let expected = 1.0 - (5.0 * 5.0 + 3.0 * 5.0) / 400.0;
        assert!((m.total_area() - expected).abs() <= 1e-10 * expected);

        let mut count: HashMap<(usize, usize), usize> = HashMap::new();
        for tri in m.triangles() {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                *count.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        let boundary = count.values().filter(|&&c| c == 1).count();
        assert_eq!(boundary, m.boundary_edges().len());
        assert!(count.values().all(|&c| c == 1 || c == 2));
        for t in 0..m.n_triangles() {
            assert!(m.area(t) > 0.0);
        }
    }
}

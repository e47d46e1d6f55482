use super::{FemError, SparseMatrix, WindField};
use crate::geometry::Point;
use crate::mesh::TriMesh;

/// Gradients of the three P1 basis functions on triangle `t`.
pub fn p1_gradients(mesh: &TriMesh, t: usize) -> [[f64; 2]; 3] {
    let [a, b, c] = mesh.vertices(t);
    let two_a = 2.0 * mesh.area(t);
    [
        [(b[1] - c[1]) / two_a, (c[0] - b[0]) / two_a],
        [(c[1] - a[1]) / two_a, (a[0] - c[0]) / two_a],
        [(a[1] - b[1]) / two_a, (b[0] - a[0]) / two_a],
    ]
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn assemble_elementwise(mesh: &TriMesh, mut local: impl FnMut(usize) -> [[f64; 3]; 3]) -> SparseMatrix {
    let n = mesh.n_nodes();
    let mut t = Vec::with_capacity(9 * mesh.n_triangles());
    for (e, tri) in mesh.triangles().iter().enumerate() {
        let k = local(e);
        for i in 0..3 {
            for j in 0..3 {
                if k[i][j] != 0.0 {
                    t.push((tri[i], tri[j], k[i][j]));
                }
            }
        }
    }
    SparseMatrix::from_triplets(n, n, &t)
}

/// `M_ij = int phi_i phi_j`.
pub fn assemble_mass(mesh: &TriMesh) -> SparseMatrix {
    assemble_elementwise(mesh, |e| {
        let a = mesh.area(e) / 12.0;
        let mut k = [[a; 3]; 3];
        for (i, row) in k.iter_mut().enumerate() {
            row[i] = 2.0 * a;
        }
        k
    })
}

/// `K_ij = int grad phi_i . grad phi_j`, plus `robin * B` when given.
pub fn assemble_stiffness(mesh: &TriMesh, robin: Option<f64>) -> SparseMatrix {
    let k = assemble_elementwise(mesh, |e| {
        let g = p1_gradients(mesh, e);
        let a = mesh.area(e);
        let mut k = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                k[i][j] = a * dot(g[i], g[j]);
            }
        }
        k
    });
    match robin {
        Some(beta) if beta != 0.0 => SparseMatrix::linear_combination(&[(1.0, &k), (beta, &assemble_boundary_mass(mesh))]),
        _ => k,
    }
}

/// `V_ij = int phi_i (v . grad phi_j)` with the element-midpoint wind.
pub fn assemble_advection(mesh: &TriMesh, wind: &WindField) -> Result<SparseMatrix, FemError> {
    wind.check_mesh(mesh)?;
    Ok(assemble_elementwise(mesh, |e| {
        let g = p1_gradients(mesh, e);
        let v = wind.elem()[e];
        let a3 = mesh.area(e) / 3.0;
        let mut k = [[0.0; 3]; 3];
        for row in k.iter_mut() {
            for (j, kij) in row.iter_mut().enumerate() {
                *kij = a3 * dot(g[j], v);
            }
        }
        k
    }))
}

/// Streamline-upwind parameter `min(h^2 / (2 kappa), h / |v|)`; the
/// diffusive branch is used when the wind vanishes.
pub fn supg_tau(h: f64, kappa: f64, speed: f64) -> f64 {
    let diffusive = h * h / (2.0 * kappa);
    if speed > 0.0 {
        diffusive.min(h / speed)
    } else {
        diffusive
    }
}

/// Per-element stabilisation parameters.
pub fn element_tau(mesh: &TriMesh, wind: &WindField, kappa: f64) -> Result<Vec<f64>, FemError> {
    if !(kappa > 0.0) {
        return Err(FemError::NonPositiveKappa(kappa));
    }
    wind.check_mesh(mesh)?;
    Ok(mesh
        .elem_diameter()
        .iter()
        .zip(wind.elem())
        .map(|(&h, v)| supg_tau(h, kappa, v[0].hypot(v[1])))
        .collect())
}

/// Returns `(S_tau, Vt_tau)`:
/// `S_tau_ij = sum_E tau_E int (v . grad phi_i)(v . grad phi_j)` and
/// `Vt_tau_ij = sum_E tau_E int (v . grad phi_i) phi_j`.
pub fn assemble_supg(mesh: &TriMesh, wind: &WindField, kappa: f64) -> Result<(SparseMatrix, SparseMatrix), FemError> {
    let tau = element_tau(mesh, wind, kappa)?;
    let s = assemble_elementwise(mesh, |e| {
        let g = p1_gradients(mesh, e);
        let v = wind.elem()[e];
        let c = tau[e] * mesh.area(e);
        let d = [dot(g[0], v), dot(g[1], v), dot(g[2], v)];
        let mut k = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                k[i][j] = c * d[i] * d[j];
            }
        }
        k
    });
    let vt = assemble_elementwise(mesh, |e| {
        let g = p1_gradients(mesh, e);
        let v = wind.elem()[e];
        let c = tau[e] * mesh.area(e) / 3.0;
        let mut k = [[0.0; 3]; 3];
        for (i, row) in k.iter_mut().enumerate() {
            let di = dot(g[i], v);
            for kij in row.iter_mut() {
                *kij = c * di;
            }
        }
        k
    });
    Ok((s, vt))
}

/// `B_ij = int_{boundary} phi_i phi_j` over all boundary edges.
pub fn assemble_boundary_mass(mesh: &TriMesh) -> SparseMatrix {
    let n = mesh.n_nodes();
    let mut t = Vec::with_capacity(4 * mesh.boundary_edges().len());
    for e in mesh.boundary_edges() {
        let (_, len) = mesh.edge_normal(e);
        let [a, b] = e.nodes;
        t.push((a, a, len / 3.0));
        t.push((b, b, len / 3.0));
        t.push((a, b, len / 6.0));
        t.push((b, a, len / 6.0));
    }
    SparseMatrix::from_triplets(n, n, &t)
}

/// Barycentric load of a point: `sum_j a_j e_{l_j}` as a dense vector.
pub fn barycentric_load(mesh: &TriMesh, x: Point) -> Result<Vec<f64>, FemError> {
    let loc = mesh.locate(x)?;
    let mut b = vec![0.0; mesh.n_nodes()];
    for (&n, &w) in loc.nodes.iter().zip(&loc.weights) {
        b[n] += w;
    }
    Ok(b)
}

/// Discrete Dirac `M^{-1} sum_j a_j e_{l_j}`.
pub fn discrete_dirac(mesh: &TriMesh, mass: &SparseMatrix, x: Point) -> Result<Vec<f64>, FemError> {
    Ok(mass.solve(&barycentric_load(mesh, x)?)?)
}

/// All matrices of the transport model for one mesh, wind and diffusivity.
#[derive(Debug, Clone)]
pub struct FemMatrices {
    pub mass: SparseMatrix,
    pub stiffness: SparseMatrix,
    pub advection: SparseMatrix,
    pub supg: SparseMatrix,
    pub supg_transport: SparseMatrix,
    pub boundary_mass: SparseMatrix,
    pub tau: Vec<f64>,
}

impl FemMatrices {
    /// With `stabilization` off the SUPG matrices are zero.
    pub fn assemble(mesh: &TriMesh, wind: &WindField, kappa: f64, stabilization: bool) -> Result<Self, FemError> {
        if !(kappa > 0.0) {
            return Err(FemError::NonPositiveKappa(kappa));
        }
        let n = mesh.n_nodes();
        let (supg, supg_transport, tau) = if stabilization {
            let (s, vt) = assemble_supg(mesh, wind, kappa)?;
            (s, vt, element_tau(mesh, wind, kappa)?)
        } else {
            (SparseMatrix::zeros(n, n), SparseMatrix::zeros(n, n), vec![0.0; mesh.n_triangles()])
        };
        Ok(Self {
            mass: assemble_mass(mesh),
            stiffness: assemble_stiffness(mesh, None),
            advection: assemble_advection(mesh, wind)?,
            supg,
            supg_transport,
            boundary_mass: assemble_boundary_mass(mesh),
            tau,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::AnalyticWind;
    use crate::geometry::Rect;
    use crate::mesh::build_rect_mesh;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_triangle() -> TriMesh {
        TriMesh::new(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![[0, 1, 2]]).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn reference_element_mass_and_stiffness() {
        let m = unit_triangle();
        let mass = assemble_mass(&m);
        let k = assemble_stiffness(&m, None);
        let expected_k = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
        for i in 0..3 {
            for j in 0..3 {
                let em = if i == j { 2.0 } else { 1.0 } * 0.5 / 12.0;
                assert!(close(mass.get(i, j), em, 1e-15));
                assert!(close(k.get(i, j), expected_k[i][j], 1e-15));
            }
        }
    }

    #[test]
    fn mass_sums_to_area_and_stiffness_kills_constants() {
        let m = build_rect_mesh(Rect::new(0.0, 0.0, 2.0, 1.0), 8, 5, &[Rect::new(0.5, 0.4, 1.0, 0.8)]).unwrap();
        let mass = assemble_mass(&m);
        let total: f64 = mass.triplets().iter().map(|t| t.2).sum();
        assert!(close(total, m.total_area(), 1e-12 * m.total_area()));
        let k = assemble_stiffness(&m, None);
        let k1 = k.mul_vec(&vec![1.0; m.n_nodes()]);
        assert!(k1.iter().all(|v| v.abs() < 1e-12));
        assert!(k.asymmetry() <= 1e-12 * k.max_abs());
    }

    #[test]
    fn boundary_mass_sums_to_perimeter() {
        let m = build_rect_mesh(Rect::unit(), 6, 6, &[]).unwrap();
        let b = assemble_boundary_mass(&m);
        let total: f64 = b.triplets().iter().map(|t| t.2).sum();
        assert!(close(total, 4.0, 4e-10));
        let on_boundary: Vec<bool> = {
            let mut mask = vec![false; m.n_nodes()];
            for e in m.boundary_edges() {
                mask[e.nodes[0]] = true;
                mask[e.nodes[1]] = true;
            }
            mask
        };
        for (r, _, _) in b.triplets() {
            assert!(on_boundary[r]);
        }
        let single = assemble_boundary_mass(&unit_triangle());
        // edge (0,0)-(1,0) has length 1
        assert!(close(single.get(0, 1), 1.0 / 6.0, 1e-15));
    }

    #[test]
    fn tau_examples() {
        assert!(close(supg_tau(0.1, 0.001, 1.0), 0.1, 1e-15));
        assert!(close(supg_tau(0.1, 0.001, 0.0), 5.0, 1e-12));
    }

    #[test]
    fn zero_wind_gives_zero_advection_and_supg() {
        let m = build_rect_mesh(Rect::unit(), 4, 4, &[]).unwrap();
        let w = WindField::zero(&m);
        assert_eq!(assemble_advection(&m, &w).unwrap().max_abs(), 0.0);
        let (s, vt) = assemble_supg(&m, &w, 1e-3).unwrap();
        assert_eq!(s.max_abs(), 0.0);
        assert_eq!(vt.max_abs(), 0.0);
        assert!(matches!(assemble_supg(&m, &w, 0.0), Err(FemError::NonPositiveKappa(_))));
    }

    #[test]
    fn tangential_vortex_advection_is_skew() {
        let m = build_rect_mesh(Rect::unit(), 16, 16, &[]).unwrap();
        let w = WindField::analytic(&m, &AnalyticWind::Vortex { cx: 0.5, cy: 0.5, strength: 1.0, width: 0.1 }, None).unwrap();
        let v = assemble_advection(&m, &w).unwrap();
        let vt = v.transpose();
        let sum = SparseMatrix::linear_combination(&[(1.0, &v), (1.0, &vt)]);
        assert!(sum.max_abs() <= 1e-8 * v.max_abs());
        let col = v.mul_vec(&vec![1.0; m.n_nodes()]);
        assert!(col.iter().all(|c| c.abs() <= 1e-12));
        let row = v.mul_vec_transpose(&vec![1.0; m.n_nodes()]);
        assert!(row.iter().all(|c| c.abs() <= 1e-12));
    }

    #[test]
    fn supg_matrix_is_symmetric_psd() {
        let m = build_rect_mesh(Rect::unit(), 8, 8, &[]).unwrap();
        let w = WindField::analytic(&m, &AnalyticWind::DoubleGyre { strength: 1.0 }, None).unwrap();
        let (s, _) = assemble_supg(&m, &w, 1e-3).unwrap();
        assert!(s.asymmetry() <= 1e-12 * s.max_abs());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let u: Vec<f64> = (0..m.n_nodes()).map(|_| rng.random_range(-1.0..1.0)).collect();
            assert!(s.inner(&u, &u) >= -1e-14);
        }
    }

    #[test]
    fn discrete_dirac_duality() {
        let m = build_rect_mesh(Rect::unit(), 6, 6, &[]).unwrap();
        let mass = assemble_mass(&m);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let x = [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
            let d = discrete_dirac(&m, &mass, x).unwrap();
            let md = mass.mul_vec(&d);
            let u: Vec<f64> = (0..m.n_nodes()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let lhs: f64 = md.iter().zip(&u).map(|(a, b)| a * b).sum();
            let interp = m.locate(x).unwrap().interpolate(&u);
            assert!(close(lhs, interp, 1e-10));
            let total: f64 = md.iter().sum();
            assert!(close(total, 1.0, 1e-10));
        }
        let at_node = barycentric_load(&m, m.nodes()[9]).unwrap();
        assert!(close(at_node[9], 1.0, 1e-12));
    }
}

use crate::geometry::dist;
use crate::sources::{Atom, SparseMeasure};

/// Drops atoms with intensity below `prune_rel * max intensity` (and all
/// atoms of an all-zero measure).
pub fn prune(mu: &SparseMeasure, prune_rel: f64) -> SparseMeasure {
    let max = mu.atoms.iter().map(|a| a.intensity).fold(0.0, f64::max);
    let threshold = prune_rel * max;
    let atoms = mu.atoms.iter().filter(|a| a.intensity > 0.0 && a.intensity >= threshold).copied().collect();
    SparseMeasure::new(mu.kind, atoms)
}

/// Greedy clustering in descending intensity: the strongest unassigned atom
/// collects every unassigned atom within `radius` and the cluster is
/// replaced by its intensity-weighted centroid carrying the summed
/// intensity. Radius 0 is the identity.
pub fn merge_atoms(mu: &SparseMeasure, radius: f64) -> SparseMeasure {
    if radius <= 0.0 || mu.len() < 2 {
        return mu.clone();
    }
    let mut order: Vec<usize> = (0..mu.len()).collect();
    order.sort_by(|&a, &b| mu.atoms[b].intensity.total_cmp(&mu.atoms[a].intensity).then(a.cmp(&b)));
    let mut taken = vec![false; mu.len()];
    let mut out = Vec::new();
    for &seed in &order {
        if taken[seed] {
            continue;
        }
        let centre = mu.atoms[seed].location();
        let (mut wx, mut wy, mut total) = (0.0, 0.0, 0.0);
        for &k in &order {
            let a = &mu.atoms[k];
            if !taken[k] && dist(a.location(), centre) <= radius {
                taken[k] = true;
                wx += a.intensity * a.x;
                wy += a.intensity * a.y;
                total += a.intensity;
            }
        }
        let p = if total > 0.0 { [wx / total, wy / total] } else { centre };
        out.push(Atom::new(p, total));
    }
    SparseMeasure::new(mu.kind, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sources::MeasureKind;

    fn measure(atoms: &[(f64, f64, f64)]) -> SparseMeasure {
        SparseMeasure::new(MeasureKind::Initial, atoms.iter().map(|&(x, y, l)| Atom::new([x, y], l)).collect())
    }

    #[test]
    fn prune_examples() {
        assert_eq!(prune(&measure(&[(0.0, 0.0, 1.0), (1.0, 0.0, 1e-15)]), 1e-10).len(), 1);
        assert!(prune(&measure(&[(0.0, 0.0, 0.0), (1.0, 0.0, 0.0)]), 1e-10).is_empty());
        let m = measure(&[(0.0, 0.0, 1.0), (1.0, 0.0, 0.5)]);
        assert_eq!(prune(&m, 1e-10), m);
        assert!(prune(&SparseMeasure::empty(MeasureKind::Initial), 1e-10).is_empty());
    }

    #[test]
    fn merge_examples() {
        let m = merge_atoms(&measure(&[(0.0, 0.0, 0.5), (0.01, 0.0, 0.5)]), 0.05);
        assert_eq!(m.len(), 1);
        assert!((m.atoms[0].x - 0.005).abs() < 1e-15 && m.atoms[0].y == 0.0);
        assert!((m.atoms[0].intensity - 1.0).abs() < 1e-15);

        let m = measure(&[(0.0, 0.0, 0.5), (0.01, 0.0, 0.5)]);
        assert_eq!(merge_atoms(&m, 0.0), m);
    }

    #[test]
    fn merge_recovers_barycentric_point() {
        let mesh = crate::mesh::build_rect_mesh(crate::Rect::unit(), 4, 4, &[]).unwrap();
        let x = [0.37, 0.61];
        let loc = mesh.locate(x).unwrap();
        let atoms: Vec<Atom> = loc.nodes.iter().zip(&loc.weights).map(|(&k, &w)| Atom::new(mesh.nodes()[k], w)).collect();
        let merged = merge_atoms(&SparseMeasure::new(MeasureKind::Initial, atoms), 0.5);
        assert_eq!(merged.len(), 1);
        assert!(dist(merged.atoms[0].location(), x) < 1e-12);
        assert!((merged.total_variation() - 1.0).abs() < 1e-12);
    }
}

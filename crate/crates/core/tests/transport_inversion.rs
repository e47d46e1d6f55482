use plume_core::fem::{AnalyticWind, WindField};
use plume_core::inversion::{compute_column, pdap_run, ColumnCache, InversionProblem, Status};
use plume_core::mesh::{build_rect_mesh, classify_boundary, DEFAULT_NORMAL_TOL};
use plume_core::scenario::{conservation_check, duality_check};
use plume_core::transport::{sample_times, SensorPlan};
use plume_core::{Atom, MeasureKind, PdapConfig, Point, Rect, ShapeModel, SparseMeasure, TransportConfig, TransportModel};
use proptest::prelude::*;

fn model(n: usize, field: AnalyticWind, cfg: TransportConfig, holes: &[Rect]) -> TransportModel {
    let mesh = build_rect_mesh(Rect::unit(), n, n, holes).unwrap();
    let wind = WindField::analytic(&mesh, &field, None).unwrap();
    let mesh = mesh.with_boundary_markers(&classify_boundary(&mesh, &wind, DEFAULT_NORMAL_TOL)).unwrap();
    TransportModel::new(mesh, &wind, cfg).unwrap()
}

fn grid(k: usize, lo: f64, hi: f64) -> Vec<Point> {
    let step = (hi - lo) / (k - 1) as f64;
    (0..k).flat_map(|i| (0..k).map(move |j| [lo + i as f64 * step, lo + j as f64 * step])).collect()
}

fn small_problem() -> TransportModel {
    model(16, AnalyticWind::DoubleGyre { strength: 0.5 }, TransportConfig::new(0.005, 0.05, 40), &[])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn adjoint_duality_on_random_models(
        n in 4usize..14,
        strength in -1.0..1.0f64,
        vx in -0.3..0.3f64,
        kappa in 1e-4..1e-1f64,
        dt in 0.01..0.2f64,
        uniform in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let field = if uniform { AnalyticWind::Uniform { vx, vy: strength * 0.2 } } else { AnalyticWind::DoubleGyre { strength } };
        let cfg = TransportConfig::new(kappa, dt, 12);
        let m = model(n, field, cfg, &[]);
        let times: Vec<f64> = (1..=6).map(|k| k as f64 * 2.0 * dt * 0.97).collect();
        let plan = SensorPlan::static_sensors(&[[0.21, 0.33], [0.7, 0.8], [0.5, 0.5]], &times);
        let op = m.observation_operator(&plan).unwrap();
        let r = duality_check(&m, &op, 2, seed).unwrap();
        prop_assert!(r.max_rel_initial <= 1e-10, "initial {}", r.max_rel_initial);
        prop_assert!(r.max_rel_continuous <= 1e-10, "continuous {}", r.max_rel_continuous);
    }

    #[test]
    fn unstabilised_vortex_conserves_mass(cells in 8usize..24, steps in 5usize..40) {
        let r = conservation_check(cells, steps).unwrap();
        prop_assert!(r.max_rel_drift <= 1e-10, "drift {}", r.max_rel_drift);
    }

    #[test]
    fn forward_map_is_linear(a in -3.0..3.0f64, b in -3.0..3.0f64, seed in 0u64..1000) {
        let m = small_problem();
        let n = m.n_nodes();
        let f = |k: u64| -> Vec<f64> { (0..n).map(|i| ((i as u64 * 7919 + k * 104729) % 1000) as f64 / 1000.0).collect() };
        let (x, y) = (f(seed), f(seed + 1));
        let ci: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
        let cc: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * q + b * p).collect();
        let plan = SensorPlan::static_sensors(&grid(3, 0.2, 0.8), &sample_times(0.5, 2.0, 4.0));
        let op = m.observation_operator(&plan).unwrap();
        let fxy = m.parameter_to_observable(&op, &x, &y).unwrap();
        let fyx = m.parameter_to_observable(&op, &y, &x).unwrap();
        let fc = m.parameter_to_observable(&op, &ci, &cc).unwrap();
        let scale = fxy.iter().chain(&fyx).fold(1e-300f64, |s, v| s.max(v.abs())) * (a.abs() + b.abs()).max(1.0);
        for k in 0..fc.len() {
            prop_assert!((fc[k] - a * fxy[k] - b * fyx[k]).abs() <= 1e-12 * scale);
        }
    }
}

#[test]
fn cached_columns_equal_fresh_evaluations() {
    let m = small_problem();
    let plan = SensorPlan::static_sensors(&grid(3, 0.2, 0.8), &sample_times(0.5, 2.0, 4.0));
    let shape = ShapeModel::Rbf { r: 0.2, eps: 0.01, flip_exponent: false };
    let problem = InversionProblem::new(&m, plan, Some(shape), Some(ShapeModel::Dirac)).unwrap();
    let cache = ColumnCache::new();
    for (kind, node) in [(MeasureKind::Initial, 40), (MeasureKind::Continuous, 100), (MeasureKind::Initial, 40)] {
        let cached = cache.get_or_compute(&problem, kind, node).unwrap();
        let fresh = compute_column(&problem, kind, node).unwrap();
        let scale = fresh.iter().fold(1e-300f64, |s, v| s.max(v.abs()));
        assert!(cached.iter().zip(&fresh).all(|(a, b)| (a - b).abs() <= 1e-12 * scale));
    }
    assert_eq!(cache.len(), 2);
}

#[test]
fn zero_data_terminates_immediately() {
    let m = small_problem();
    let plan = SensorPlan::static_sensors(&grid(3, 0.2, 0.8), &sample_times(0.5, 2.0, 4.0));
    let problem = InversionProblem::new(&m, plan, Some(ShapeModel::Dirac), Some(ShapeModel::Dirac)).unwrap();
    let d = vec![0.0; problem.op.len()];
    let cfg = PdapConfig::new(2.0, 0.1);
    let r = pdap_run(&problem, &d, &cfg).unwrap();
    assert_eq!(r.status, Status::Certified);
    assert_eq!(r.counters.iterations, 0);
    assert!(r.mu_i.is_empty() && r.mu_c.is_empty());
    assert_eq!(r.certificate.global_slack, -2.0);
    assert_eq!(r.objective, 0.0);
}

#[test]
fn objective_of_empty_and_zero_atoms() {
    let m = small_problem();
    let plan = SensorPlan::static_sensors(&grid(3, 0.2, 0.8), &sample_times(0.5, 2.0, 4.0));
    let problem = InversionProblem::new(&m, plan, Some(ShapeModel::Dirac), None).unwrap();
    let d: Vec<f64> = (0..problem.op.len()).map(|k| (k as f64 * 0.3).sin()).collect();
    let (sigma, alpha) = (0.4, 3.0);
    let empty_i = SparseMeasure::empty(MeasureKind::Initial);
    let empty_c = SparseMeasure::empty(MeasureKind::Continuous);
    let j0 = problem.objective_value(&empty_i, &empty_c, &d, sigma, alpha).unwrap();
    let expected = d.iter().map(|v| v * v).sum::<f64>() / (2.0 * sigma * sigma);
    assert!((j0 - expected).abs() <= 1e-12 * expected);
    let zero_atom = SparseMeasure::new(MeasureKind::Initial, vec![Atom::new([0.4, 0.6], 0.0)]);
    let j1 = problem.objective_value(&zero_atom, &empty_c, &d, sigma, alpha).unwrap();
    assert!((j1 - j0).abs() <= 1e-12 * j0);
}

#[test]
fn noiseless_dirac_at_node_is_recovered_by_first_solve() {
    let m = small_problem();
    let node = 7 * 17 + 5;
    let x = m.mesh().nodes()[node];
    let plan = SensorPlan::static_sensors(&grid(8, 0.05, 0.95), &sample_times(0.2, 2.0, 10.0));
    let problem = InversionProblem::new(&m, plan, Some(ShapeModel::Dirac), None).unwrap();
    let truth = SparseMeasure::new(MeasureKind::Initial, vec![Atom::new(x, 1.0)]);
    let d = problem.observe_measures(&truth, &SparseMeasure::empty(MeasureKind::Continuous)).unwrap();
    let sigma = 1e-2 * d.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    let gg: f64 = d.iter().map(|v| v * v).sum::<f64>() / (sigma * sigma);
    // intensity bias alpha / (g^T g / sigma^2) of one part in a thousand
    let mut cfg = PdapConfig::new(1e-3 * gg, sigma);
    cfg.max_iter = 1;
    let r = pdap_run(&problem, &d, &cfg).unwrap();
    assert_eq!(r.counters.iterations, 1);
    assert_eq!(r.mu_i.len(), 1);
    let a = r.mu_i.atoms[0];
    assert_eq!(a.location(), x);
    assert!((a.intensity - 1.0).abs() <= 1e-2, "intensity {}", a.intensity);
}

#[test]
fn solve_accounting_matches_model_counters() {
    let m = small_problem();
    let plan = SensorPlan::static_sensors(&grid(4, 0.15, 0.85), &sample_times(0.5, 2.0, 5.0));
    let shape = ShapeModel::Rbf { r: 0.2, eps: 0.01, flip_exponent: false };
    let problem = InversionProblem::new(&m, plan, Some(shape), None).unwrap();
    let truth = SparseMeasure::new(MeasureKind::Initial, vec![Atom::new([0.3, 0.6], 1.0), Atom::new([0.7, 0.35], 0.6)]);
    let d = problem.observe_measures(&truth, &SparseMeasure::empty(MeasureKind::Continuous)).unwrap();
    let sigma = 0.01 * d.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    m.reset_counters();
    let cfg = PdapConfig::new(10.0, sigma);
    let r = pdap_run(&problem, &d, &cfg).unwrap();
    assert_eq!(r.counters.forward_solves, m.forward_solves());
    assert_eq!(r.counters.adjoint_solves, m.adjoint_solves());
    assert_eq!(r.counters.adjoint_solves, r.counters.iterations + 1);
    assert!(r.counters.forward_solves <= r.counters.iterations);
    assert!(r.n_atoms() <= r.n_data);
    let j = r.objective_history();
    assert!(j.windows(2).all(|w| w[1] <= w[0] + 1e-12 * j[0]), "{j:?}");
    if r.certified() {
        assert!(r.certificate.max_phi_i.unwrap() <= cfg.alpha + cfg.tol());
    }
}

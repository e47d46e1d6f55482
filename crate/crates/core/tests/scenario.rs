use plume_core::inversion::{l2_invert, L2Config};
use plume_core::mesh::build_rect_mesh;
use plume_core::scenario::{
    gaussian_reference, generate_measurements, moving_sensor_plan, preset, recovery_metrics, run_scenario, trajectory_point,
    Method, MeshSpec, Scenario, ScenarioConfig, ScenarioError, SourceGroup, TruthSpec, MOVING_TRAJECTORY,
    PRESET_NAMES,
};
use plume_core::{Atom, MeasureKind, Rect, ShapeModel, SparseMeasure};

/// Baseline on a coarse mesh with a short horizon, for fast end-to-end runs.
fn coarse_baseline() -> ScenarioConfig {
    let mut cfg = preset("baseline").unwrap();
    if let MeshSpec::Generated { nx, ny, .. } = &mut cfg.mesh {
        *nx = 24;
        *ny = 24;
    }
    cfg.transport.n_steps = 60;
    cfg.sensors.window = [1.0, 3.0];
    cfg.sensors.rate = 4.0;
    cfg
}

#[test]
fn moving_sensor_trajectory_examples() {
    let p = trajectory_point(MOVING_TRAJECTORY, 1.0);
    assert!((p[0] - 13.0 / 30.0).abs() <= 1e-15);
    assert!((p[1] - (0.5 + 64.0 / 300.0)).abs() <= 1e-15);

    let mesh = build_rect_mesh(Rect::unit(), 8, 8, &[]).unwrap();
    let plan = moving_sensor_plan(&mesh, MOVING_TRAJECTORY, [1.0, 5.0], 10.0, 5.0).unwrap();
    assert_eq!(plan.len(), 41);
    assert_eq!(plan.n_sensors(), 1);
    for (k, o) in plan.observations.iter().enumerate() {
        assert!((o.t - (1.0 + 0.1 * k as f64)).abs() <= 1e-12);
        assert_eq!(o.x, trajectory_point(MOVING_TRAJECTORY, o.t));
    }

    let still = [[0.3, 0.4], [0.0, 0.0], [0.0, 0.0]];
    let plan = moving_sensor_plan(&mesh, still, [1.0, 2.0], 2.0, 5.0).unwrap();
    assert!(plan.observations.iter().all(|o| o.x == [0.3, 0.4]));
}

#[test]
fn trajectory_leaving_the_domain_lists_times() {
    let mesh = build_rect_mesh(Rect::unit(), 8, 8, &[]).unwrap();
    let escaping = [[0.5, 0.5], [0.2, 0.0], [0.0, 0.0]];
    match moving_sensor_plan(&mesh, escaping, [1.0, 4.0], 1.0, 5.0) {
        Err(ScenarioError::TrajectoryOutside { times }) => assert_eq!(times, vec![3.0, 4.0]),
        other => panic!("expected TrajectoryOutside, got {other:?}"),
    }
}

#[test]
fn presets_round_trip_through_json() {
    for name in PRESET_NAMES {
        let cfg = preset(name).unwrap();
        cfg.validate().unwrap();
        let back = ScenarioConfig::from_json(&cfg.to_json_pretty()).unwrap();
        assert_eq!(back, cfg, "{name}");
    }
    assert!(matches!(preset("nope"), Err(ScenarioError::UnknownPreset(_))));
}

#[test]
fn config_validation_rejects_bad_windows_and_noise() {
    let mut cfg = coarse_baseline();
    cfg.sensors.window = [0.0, 2.0];
    assert!(cfg.validate().is_err());
    let mut cfg = coarse_baseline();
    cfg.sensors.window = [1.0, cfg.transport.final_time() + 0.5];
    assert!(cfg.validate().is_err());
    let mut cfg = coarse_baseline();
    cfg.noise.level = -0.1;
    assert!(cfg.validate().is_err());
    let mut cfg = coarse_baseline();
    cfg.inversion.method = Method::L2;
    assert!(cfg.validate().is_err());
}

#[test]
fn sensor_counts_of_presets() {
    let count = |name: &str| Scenario::build(&preset(name).unwrap()).unwrap().plan.n_sensors();
    assert_eq!(count("baseline"), 9);
    assert_eq!(count("reduced_sensors_3"), 3);
    assert_eq!(count("moving_sensor"), 1);
    let plan = Scenario::build(&preset("baseline").unwrap()).unwrap().plan;
    assert_eq!(plan.len(), 9 * 41);
}

#[test]
fn relative_noise_sets_the_snr() {
    let cfg = coarse_baseline();
    let scenario = Scenario::build(&cfg).unwrap();
    let data = generate_measurements(&scenario, 5).unwrap();
    let max = data.clean.iter().cloned().fold(0.0, f64::max);
    assert!((data.sigma - 0.03 * max).abs() <= 1e-15 * max);
    assert!((data.snr().unwrap() - 100.0 / 3.0).abs() <= 1e-9);
    assert_eq!(generate_measurements(&scenario, 5).unwrap(), data);
    assert_ne!(generate_measurements(&scenario, 6).unwrap().d, data.d);

    let mut quiet = cfg.clone();
    quiet.noise.level = 0.0;
    let data = generate_measurements(&Scenario::build(&quiet).unwrap(), 5).unwrap();
    assert_eq!(data.d, data.clean);
    assert_eq!(data.snr(), None);
}

#[test]
fn same_seed_gives_identical_reports() {
    let cfg = coarse_baseline();
    let a = run_scenario(&cfg, Some(3)).unwrap().report.without_timing();
    let b = run_scenario(&cfg, Some(3)).unwrap().report.without_timing();
    assert_eq!(a.to_json_pretty(), b.to_json_pretty());
    assert_eq!(a.schema, 1);
}

#[test]
fn empty_truth_without_noise_gives_empty_measures() {
    let mut cfg = coarse_baseline();
    let shape = cfg.truth.initial.as_ref().unwrap().shape;
    cfg.truth = TruthSpec { initial: Some(SourceGroup { shape, atoms: vec![] }), continuous: None };
    cfg.noise.level = 0.0;
    let report = run_scenario(&cfg, None).unwrap().report;
    let p = report.pdap.unwrap();
    assert!(p.certified());
    assert!(p.mu_i.is_empty() && p.mu_c.is_empty());
    assert_eq!(p.counters.iterations, 0);
}

#[test]
fn distance_is_zero_at_exact_recovery() {
    let truth = TruthSpec {
        initial: Some(SourceGroup {
            shape: ShapeModel::Dirac,
            atoms: vec![Atom::new([0.2, 0.3], 1.0), Atom::new([0.7, 0.8], 2.0)],
        }),
        continuous: None,
    };
    let rec = SparseMeasure::new(MeasureKind::Initial, vec![Atom::new([0.7, 0.8], 4.0), Atom::new([0.2, 0.3], 1.0)]);
    let m = recovery_metrics(&truth, &rec, &SparseMeasure::empty(MeasureKind::Continuous));
    assert_eq!(m.max_distance, Some(0.0));
    assert_eq!(m.sources[1].intensity_ratio, Some(2.0));
    assert!(m.all_within(0.0));
}

#[test]
fn gaussian_reference_peak() {
    let peak = gaussian_reference([0.6, 0.6], 1.0, [0.5, 0.5], [0.1, 0.1], 0.001);
    assert!((peak - 1.0 / (4.0 * std::f64::consts::PI * 0.001)).abs() <= 1e-9);
    assert!((peak - 79.577).abs() < 1e-3);
}

#[test]
fn l2_prior_dominates_without_data_weight() {
    let cfg = coarse_baseline();
    let scenario = Scenario::build(&cfg).unwrap();
    let data = generate_measurements(&scenario, 1).unwrap();
    let op = scenario.model.observation_operator(&data.plan).unwrap();
    let n = scenario.model.n_nodes();
    let prior: Vec<f64> = (0..n).map(|i| (i as f64 * 0.01).sin()).collect();
    let lcfg = L2Config {
        eta: 1.0,
        gamma: 1e-2,
        beta: None,
        sigma: 1e12,
        cg_tol: 1e-10,
        cg_max: 50,
        m_prior: Some(prior.clone()),
    };
    let r = l2_invert(&scenario.model, &op, &data.d, &lcfg).unwrap();
    let err = r.m.iter().zip(&prior).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err <= 1e-8, "max deviation from prior {err}");

    let lcfg = L2Config { sigma: data.sigma, m_prior: None, cg_tol: 1e-8, eta: 10.0, gamma: 0.1, ..lcfg };
    let r = l2_invert(&scenario.model, &op, &data.d, &lcfg).unwrap();
    assert!(r.objective_history.windows(2).all(|w| w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0)), "{:?}", r.objective_history);
    assert_eq!(r.pde_solves, r.forward_solves + r.adjoint_solves);
}

#[test]
fn converged_baseline_has_tight_atom_slacks() {
    let cfg = preset("baseline").unwrap();
    let report = run_scenario(&cfg, None).unwrap().report;
    let p = report.pdap.as_ref().unwrap();
    assert!(p.certified());
    let alpha = cfg.inversion.alpha;
    assert!(p.certificate.atom_slack_i.iter().all(|s| s.abs() <= 1e-2 * alpha), "{:?}", p.certificate.atom_slack_i);
    assert!(p.objective <= p.log[0].objective);
}

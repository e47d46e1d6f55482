//! Acceptance criteria, one test each. Tests are serialised so the measured
//! runtimes are not inflated by each other, and each writes a single
//! PASS/FAIL line straight to stderr (visible without `--nocapture`).

use std::io::Write;
use std::sync::{Mutex, OnceLock};
use std::time::{Duration, Instant};

use plume_core::geometry::dist;
use plume_core::inversion::{intensity_subproblem, solve_quadratic, Quadratic};
use plume_core::scenario::{
    compare_methods, conservation_check, convergence_study, duality_check, preset, robustness_suite, run_scenario,
    ConvergenceConfig, Method, MeshSpec, RunReport, Scenario, ROBUSTNESS_PRESETS,
};
use plume_core::PdapConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn verdict(n: usize, name: &str, ok: bool, elapsed: Duration, limit: Duration, detail: &str) {
    let pass = ok && elapsed < limit;
    let line = format!(
        "acceptance {n:>2} {name:<28} {} | {detail} | {:.1}s (limit {}s)\n",
        if pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        limit.as_secs()
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(ok, "criterion {n} ({name}) failed: {detail}");
    assert!(elapsed < limit, "criterion {n} ({name}) took {elapsed:?}, limit {limit:?}");
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

#[test]
fn c01_adjoint_duality() {
    let _g = serial();
    let t = Instant::now();
    let mut cfg = preset("baseline").unwrap();
    if let MeshSpec::Generated { nx, ny, .. } = &mut cfg.mesh {
        *nx = 46;
        *ny = 46;
    }
    assert!(cfg.transport.stabilization);
    let scenario = Scenario::build(&cfg).unwrap();
    let n = scenario.model.n_nodes();
    let op = scenario.model.observation_operator(&scenario.plan).unwrap();
    let r = duality_check(&scenario.model, &op, 20, 11).unwrap();
    let ok = (1800..=2600).contains(&n) && r.trials == 20 && r.max_rel_initial <= 1e-10 && r.max_rel_continuous <= 1e-10;
    let detail = format!("{n} dofs, initial {:.2e}, continuous {:.2e}", r.max_rel_initial, r.max_rel_continuous);
    verdict(1, "adjoint duality", ok, t.elapsed(), secs(10), &detail);
}

#[test]
fn c02_convergence_order() {
    let _g = serial();
    let t = Instant::now();
    let cfg = ConvergenceConfig::default();
    assert_eq!(cfg.refinements, vec![32, 64, 128]);
    let table = convergence_study(&cfg).unwrap();
    let order = table.last_order().unwrap_or(f64::NAN);
    let errors: Vec<String> = table.rows.iter().map(|r| format!("{:.3e}", r.error)).collect();
    let ok = order >= 0.9;
    verdict(2, "convergence order", ok, t.elapsed(), secs(120), &format!("errors [{}], order {order:.3}", errors.join(", ")));
}

#[test]
fn c03_mass_conservation() {
    let _g = serial();
    let t = Instant::now();
    let r = conservation_check(32, 100).unwrap();
    verdict(3, "mass conservation", r.max_rel_drift <= 1e-10, t.elapsed(), secs(10), &format!("drift {:.2e} over {} steps", r.max_rel_drift, r.steps));
}

fn coordinate_descent(q: &Quadratic) -> Vec<f64> {
    let n = q.len();
    let mut l = vec![0.0; n];
    for _ in 0..200_000 {
        let mut change = 0.0f64;
        for i in 0..n {
            let off: f64 = (0..n).filter(|&j| j != i).map(|j| q.h[i][j] * l[j]).sum();
            let new = ((q.b[i] - q.alpha - off) / q.h[i][i]).max(0.0);
            change = change.max((new - l[i]).abs());
            l[i] = new;
        }
        if change <= 1e-15 * l.iter().fold(1.0f64, |m, v| m.max(*v)) {
            break;
        }
    }
    l
}

#[test]
fn c04_subproblem_oracle() {
    let _g = serial();
    let t = Instant::now();
    let mut worst = 0.0f64;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let k = rng.random_range(1..=10);
        let n_d = rng.random_range(k + 10..=50);
        let cols: Vec<Vec<f64>> = (0..k).map(|_| (0..n_d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let d: Vec<f64> = (0..n_d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let refs: Vec<&[f64]> = cols.iter().map(|c| c.as_slice()).collect();
        let sigma = rng.random_range(0.2..2.0);
        let probe = Quadratic::from_columns(&refs, &d, sigma, 1.0).unwrap();
        let bmax = probe.b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let alpha = rng.random_range(0.01..0.9) * bmax;
        let q = Quadratic::from_columns(&refs, &d, sigma, alpha).unwrap();
        let newton = solve_quadratic(&q, &vec![0.0; k]).unwrap();
        let oracle = coordinate_descent(&q);
        let scale = oracle.iter().fold(1.0f64, |m, v| m.max(*v));
        let diff = newton.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale;
        worst = worst.max(diff);
    }
    let g = [0.4, -0.9, 1.7, 0.2, -0.3];
    let d = [0.8, -1.1, 2.9, 0.1, 0.4];
    let (sigma, alpha) = (0.5, 2.0);
    let s2 = sigma * sigma;
    let gd: f64 = g.iter().zip(&d).map(|(a, b)| a * b).sum();
    let gg: f64 = g.iter().map(|a| a * a).sum();
    let exact = ((gd / s2 - alpha) / (gg / s2)).max(0.0);
    let one = intensity_subproblem(&[&g], &d, sigma, alpha, &[0.0]).unwrap()[0];
    let err_1d = (one - exact).abs();
    let ok = worst <= 1e-8 && err_1d <= 1e-12;
    verdict(4, "subproblem oracle", ok, t.elapsed(), secs(5), &format!("100 instances, worst {worst:.2e}; 1-D error {err_1d:.2e}"));
}

#[test]
fn c05_baseline_recovery() {
    let _g = serial();
    let t = Instant::now();
    let cfg = preset("baseline").unwrap();
    let r = run_scenario(&cfg, None).unwrap().report;
    let p = r.pdap.as_ref().unwrap();
    let dist = r.metrics.max_distance.unwrap_or(f64::INFINITY);
    let max_phi = p.certificate.max_phi_i.unwrap_or(f64::INFINITY);
    let snr = r.snr.unwrap_or(0.0);
    let ok = r.n_sensors == 9
        && (snr - 33.3).abs() < 0.1
        && dist <= 0.02
        && p.certified()
        && max_phi <= cfg.inversion.alpha + p.certificate.tol
        && p.counters.iterations <= 30;
    let detail = format!(
        "distance {dist:.4} m, {} iterations, max phi {max_phi:.2} (alpha {}), SNR {snr:.1}",
        p.counters.iterations, cfg.inversion.alpha
    );
    verdict(5, "baseline recovery", ok, t.elapsed(), secs(120), &detail);
}

#[test]
fn c06_overlapping_sources() {
    let _g = serial();
    let t = Instant::now();
    let cfg = preset("overlapping").unwrap();
    let r = run_scenario(&cfg, None).unwrap().report;
    let p = r.pdap.as_ref().unwrap();
    let truth: Vec<[f64; 2]> = cfg.truth.initial.as_ref().unwrap().atoms.iter().map(|a| a.location()).collect();
    let rec: Vec<[f64; 2]> = p.post_processed_i.atoms.iter().map(|a| a.location()).collect();
    let matched = rec.len() == 2 && {
        let direct = dist(rec[0], truth[0]).max(dist(rec[1], truth[1]));
        let swapped = dist(rec[0], truth[1]).max(dist(rec[1], truth[0]));
        direct.min(swapped) <= 0.05
    };
    let snr = r.snr.unwrap_or(0.0);
    let ok = matched && (snr - 100.0).abs() < 0.5;
    let detail = format!("{} atoms {:?}, SNR {snr:.1}", rec.len(), rec.iter().map(|p| [round4(p[0]), round4(p[1])]).collect::<Vec<_>>());
    verdict(6, "overlapping separation", ok, t.elapsed(), secs(120), &detail);
}

fn round4(v: f64) -> f64 {
    (v * 1e4).round() / 1e4
}

struct Suite {
    reports: Vec<RunReport>,
    elapsed: Duration,
}

static SUITE: OnceLock<Suite> = OnceLock::new();

fn suite() -> &'static Suite {
    SUITE.get_or_init(|| {
        let t = Instant::now();
        let reports = robustness_suite(None).unwrap();
        Suite { reports, elapsed: t.elapsed() }
    })
}

#[test]
fn c07_robustness_suite() {
    let _g = serial();
    let s = suite();
    let mut parts = Vec::new();
    let mut ok = s.reports.len() == ROBUSTNESS_PRESETS.len();
    for r in &s.reports {
        let d = r.metrics.max_distance.unwrap_or(f64::INFINITY);
        ok &= r.metrics.all_within(0.1);
        parts.push(format!("{} {d:.3}", r.name));
    }
    let snr = s.reports.iter().find(|r| r.name == "reduced_snr").and_then(|r| r.snr).unwrap_or(0.0);
    let n3 = s.reports.iter().find(|r| r.name == "reduced_sensors_3").map_or(0, |r| r.n_sensors);
    ok &= (snr - 6.67).abs() < 0.05 && n3 == 3;
    verdict(7, "robustness suite", ok, s.elapsed, secs(600), &parts.join(", "));
}

#[test]
fn c08_atom_budget_and_descent() {
    let _g = serial();
    let t = Instant::now();
    let s = suite();
    let mut ok = true;
    let mut worst_rise = 0.0f64;
    for r in &s.reports {
        let p = r.pdap.as_ref().unwrap();
        ok &= p.n_atoms() <= r.n_data;
        let j = p.objective_history();
        for w in j.windows(2) {
            worst_rise = worst_rise.max((w[1] - w[0]) / j[0]);
        }
    }
    ok &= worst_rise <= 1e-12;
    let atoms: Vec<String> = s.reports.iter().map(|r| format!("{}/{}", r.pdap.as_ref().unwrap().n_atoms(), r.n_data)).collect();
    verdict(8, "atom budget and descent", ok, t.elapsed(), secs(600), &format!("atoms/N_d {}, worst relative rise {worst_rise:.1e}", atoms.join(" ")));
}

#[test]
fn c09_method_comparison() {
    let _g = serial();
    let t = Instant::now();
    let cfg = preset("comparison").unwrap();
    let table = compare_methods(&cfg, None).unwrap();
    let pdap = table.row(Method::Pdap).unwrap();
    let l2 = table.row(Method::L2).unwrap();
    let (dp, dl) = (pdap.max_distance.unwrap_or(f64::INFINITY), l2.max_distance.unwrap_or(f64::INFINITY));
    let ok = cfg.truth.n_atoms() == 3
        && pdap.sensors >= 200
        && pdap.online_pde_solves < l2.online_pde_solves
        && dp <= dl;
    let detail = format!(
        "{} sensors; PDAP {} solves at {dp:.4} m, L2 {} solves at {dl:.4} m",
        pdap.sensors, pdap.online_pde_solves, l2.online_pde_solves
    );
    verdict(9, "method comparison", ok, t.elapsed(), secs(600), &detail);
}

#[test]
fn c10_plant_scale() {
    let _g = serial();
    let t = Instant::now();
    let cfg = preset("plant").unwrap();
    let r = run_scenario(&cfg, None).unwrap().report;
    let m = &r.metrics;
    let max = m.max_distance.unwrap_or(f64::INFINITY);
    let mean = m.mean_distance.unwrap_or(f64::INFINITY);
    let snr = r.snr.unwrap_or(0.0);
    let ok = m.sources.len() == 8
        && m.all_within(15.0)
        && max <= 15.0
        && mean <= 5.0
        && r.merge_radius == 40.0
        && (120..=180).contains(&r.n_sensors)
        && (snr - 33.3).abs() < 0.1;
    let detail = format!("{} sensors, max {max:.2} m, mean {mean:.2} m, {} iterations", r.n_sensors, r.pdap.as_ref().unwrap().counters.iterations);
    verdict(10, "plant-scale analog", ok, t.elapsed(), secs(300), &detail);
}

#[test]
fn c11_certificate_semantics() {
    let _g = serial();
    let t = Instant::now();
    let cfg = preset("baseline").unwrap();
    let r = run_scenario(&cfg, None).unwrap().report;
    let p = r.pdap.as_ref().unwrap();
    let alpha = cfg.inversion.alpha;
    let tol = PdapConfig::new(alpha, 1.0).tol();
    let lowered = p.duals.certify(alpha / 10.0, PdapConfig::new(alpha / 10.0, 1.0).tol());
    let raised_ok = [1.0, 2.0, 10.0, 1e3, 1e6].iter().all(|k| p.duals.certify(alpha, k * tol).certified);

    let mut loose = cfg.clone();
    loose.inversion.tol_abs = Some(10.0 * tol);
    let rerun = run_scenario(&loose, None).unwrap().report;
    let ok = p.certified() && !lowered.certified && raised_ok && rerun.pdap.as_ref().unwrap().certified();
    let detail = format!(
        "certified at alpha {alpha}; alpha/10 slack {:.1}; larger tol keeps certificate: {}",
        lowered.global_slack,
        raised_ok
    );
    verdict(11, "certificate semantics", ok, t.elapsed(), secs(60), &detail);
}

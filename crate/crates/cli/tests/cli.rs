use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use plume_core::scenario::{preset, MeshSpec, ScenarioConfig, PRESET_NAMES};

fn plume(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_plume")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn small_config(dir: &Path, edit: impl FnOnce(&mut ScenarioConfig)) -> PathBuf {
    let mut cfg = preset("baseline").unwrap();
    if let MeshSpec::Generated { nx, ny, .. } = &mut cfg.mesh {
        *nx = 20;
        *ny = 20;
    }
    cfg.transport.n_steps = 50;
    cfg.sensors.window = [1.0, 2.5];
    cfg.sensors.rate = 4.0;
    edit(&mut cfg);
    let path = dir.join("scenario.json");
    std::fs::write(&path, cfg.to_json_pretty()).unwrap();
    path
}

#[test]
fn preset_listing_and_printing() {
    let o = plume(&["preset"]);
    assert!(o.status.success());
    let names: Vec<String> = stdout(&o).lines().map(str::to_string).collect();
    assert_eq!(names, PRESET_NAMES);
    let o = plume(&["preset", "plant"]);
    assert!(o.status.success());
    let cfg = ScenarioConfig::from_json(&stdout(&o)).unwrap();
    assert_eq!(cfg, preset("plant").unwrap());
}

#[test]
fn mesh_gen_then_info_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), |_| {});
    let out = dir.path().join("out");
    let o = plume(&["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "mesh", "gen"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mesh = out.join("mesh.txt");
    assert!(mesh.exists());
    let o = plume(&["mesh", "info", mesh.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("nodes "));
}

#[test]
fn forward_and_observe_write_series() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), |_| {});
    let out = dir.path().join("out");
    let args = ["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    let o = plume(&[&args[..], &["forward"]].concat());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("trajectory.csv").exists() && out.join("clean.csv").exists());
    let o = plume(&[&args[..], &["--seed", "4", "observe"]].concat());
    assert!(o.status.success());
    let observed = std::fs::read_to_string(out.join("observed.csv")).unwrap();
    // header plus 9 sensors at 7 times
    assert_eq!(observed.lines().count(), 1 + 9 * 7);
    assert!(stdout(&o).contains("SNR 33.3"));
}

#[test]
fn invert_writes_versioned_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), |_| {});
    let out = dir.path().join("out");
    let o = plume(&["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "invert", "pdap"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["schema"], 1);
    assert_eq!(report["method"], "pdap");
    assert!(report["pdap"]["log"].as_array().is_some_and(|l| !l.is_empty()));
}

#[test]
fn iteration_cap_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), |c| {
        c.inversion.max_iter = 1;
        c.inversion.alpha = 1.0;
    });
    let out = dir.path().join("out");
    let o = plume(&["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "invert", "pdap"]);
    assert_eq!(o.status.code(), Some(2), "{}", stdout(&o));
}

#[test]
fn verify_checks_pass() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), |_| {});
    let o = plume(&["verify", "conservation", "--cells", "16", "--steps", "30"]);
    assert!(o.status.success(), "{}", stdout(&o));
    let o = plume(&["--config", cfg.to_str().unwrap(), "verify", "duality", "--trials", "3"]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).starts_with("3 trials"));
}

#[test]
fn errors_exit_with_one() {
    let o = plume(&["--preset", "nope", "forward"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"name\": 3}").unwrap();
    let o = plume(&["--config", bad.to_str().unwrap(), "observe"]);
    assert_eq!(o.status.code(), Some(1));
}

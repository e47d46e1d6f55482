use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use plume_core::mesh::{read_mesh, write_mesh, BoundaryMarker, TriMesh};
use plume_core::scenario::{
    compare_methods, conservation_check, convergence_study, duality_check, generate_measurements, preset,
    robustness_suite, run_scenario, ConvergenceConfig, Method, Scenario, ScenarioConfig, PRESET_NAMES,
};
use plume_core::transport::{write_series_csv, write_trajectory_csv};

#[derive(Parser)]
#[command(name = "plume", version, about = "Point-source identification for airborne contaminants")]
struct Cli {
    /// Scenario configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Named preset, used when no --config is given.
    #[arg(long, global = true, default_value = "baseline")]
    preset: String,
    /// Overrides the noise seed of the scenario.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "plume-out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mesh generation and inspection.
    Mesh {
        #[command(subcommand)]
        action: MeshAction,
    },
    /// Simulates the true sources and writes the concentration trajectory.
    Forward,
    /// Generates noisy observations of the true sources.
    Observe,
    /// Identifies sources from synthetic data.
    Invert {
        #[command(subcommand)]
        method: InvertMethod,
    },
    /// Numerical self-checks.
    Verify {
        #[command(subcommand)]
        check: VerifyCheck,
    },
    /// Batches of scenarios.
    Suite {
        #[command(subcommand)]
        suite: SuiteKind,
    },
    /// Prints a preset configuration as JSON, or lists the presets.
    Preset { name: Option<String> },
}

#[derive(Subcommand)]
enum MeshAction {
    /// Builds the scenario mesh and writes `mesh.txt`.
    Gen,
    /// Prints statistics of a mesh file, or of the scenario mesh.
    Info { file: Option<PathBuf> },
}

#[derive(Subcommand)]
enum InvertMethod {
    Pdap,
    L2,
}

#[derive(Subcommand)]
enum VerifyCheck {
    /// Refinement study against the Gaussian reference solution.
    Convergence,
    /// Dot-product test of the discrete adjoint on the scenario model.
    Duality {
        #[arg(long, default_value_t = 20)]
        trials: usize,
    },
    /// Mass drift without stabilisation in a closed vortex.
    Conservation {
        #[arg(long, default_value_t = 32)]
        cells: usize,
        #[arg(long, default_value_t = 100)]
        steps: usize,
    },
}

#[derive(Subcommand)]
enum SuiteKind {
    /// Baseline and its five degradations.
    Robustness,
    /// PDAP against the L2 baseline on the comparison preset.
    Comparison,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn load_config(cli: &Cli) -> Result<ScenarioConfig> {
    match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            Ok(ScenarioConfig::from_json(&text).with_context(|| format!("parsing {}", path.display()))?)
        }
        None => Ok(preset(&cli.preset)?),
    }
}

fn out_file(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    Ok(BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?))
}

fn run(cli: &Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Preset { name } => {
            match name {
                Some(name) => println!("{}", preset(name)?.to_json_pretty()),
                None => PRESET_NAMES.iter().for_each(|n| println!("{n}")),
            }
        }
        Command::Mesh { action: MeshAction::Gen } => {
            let scenario = Scenario::build(&load_config(cli)?)?;
            write_mesh(scenario.mesh(), out_file(&cli.out, "mesh.txt")?)?;
            print_mesh_info(scenario.mesh());
            println!("wrote {}", cli.out.join("mesh.txt").display());
        }
        Command::Mesh { action: MeshAction::Info { file } } => match file {
            Some(path) => {
                let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
                print_mesh_info(&read_mesh(BufReader::new(f))?);
            }
            None => print_mesh_info(Scenario::build(&load_config(cli)?)?.mesh()),
        },
        Command::Forward => {
            let scenario = Scenario::build(&load_config(cli)?)?;
            let n = scenario.model.n_nodes();
            let (m_i, m_c) = scenario.truth_fields()?;
            let traj = scenario.model.forward_solve(&m_i, &m_c)?;
            write_trajectory_csv(&traj, out_file(&cli.out, "trajectory.csv")?)?;
            let series = scenario.model.observation_operator(&scenario.plan)?.apply(&traj);
            write_series_csv(&scenario.plan, &series, out_file(&cli.out, "clean.csv")?)?;
            println!(
                "{} steps on {} nodes, final mass {:.6e}; wrote trajectory.csv and clean.csv to {}",
                traj.n_steps(),
                n,
                scenario.model.total_mass(traj.last()),
                cli.out.display()
            );
        }
        Command::Observe => {
            let cfg = load_config(cli)?;
            let scenario = Scenario::build(&cfg)?;
            let data = generate_measurements(&scenario, cli.seed.unwrap_or(cfg.noise.seed))?;
            write_series_csv(&data.plan, &data.d, out_file(&cli.out, "observed.csv")?)?;
            write_series_csv(&data.plan, &data.clean, out_file(&cli.out, "clean.csv")?)?;
            let snr = data.snr().map_or("n/a".to_string(), |s| format!("{s:.1}"));
            println!("{} observations from {} sensors, sigma {:.4e}, SNR {snr}", data.plan.len(), data.plan.n_sensors(), data.sigma);
        }
        Command::Invert { method } => {
            let mut cfg = load_config(cli)?;
            cfg.inversion.method = match method {
                InvertMethod::Pdap => Method::Pdap,
                InvertMethod::L2 => Method::L2,
            };
            cfg.validate()?;
            let outcome = run_scenario(&cfg, cli.seed)?;
            outcome.write(&cli.out)?;
            let r = &outcome.report;
            if let Some(p) = &r.pdap {
                println!(
                    "status {:?} after {} iterations, J = {:.6e}, {} online solves",
                    p.status, p.counters.iterations, p.objective, r.online_pde_solves
                );
                for a in p.post_processed_i.atoms.iter().chain(&p.post_processed_c.atoms) {
                    println!("  atom ({:.4}, {:.4}) intensity {:.4e}", a.x, a.y, a.intensity);
                }
            }
            if let Some(l2) = &r.l2 {
                println!(
                    "CG {} iterations (converged: {}), {} online solves, {} peaks",
                    l2.result.cg_iterations,
                    l2.result.converged,
                    r.online_pde_solves,
                    l2.peaks.len()
                );
            }
            if let Some(d) = r.metrics.max_distance {
                println!("max recovery distance {d:.4}");
            }
            println!("wrote report.json to {}", cli.out.display());
            if r.hit_max_iter() {
                return Ok(ExitCode::from(2));
            }
        }
        Command::Verify { check } => return verify(cli, check),
        Command::Suite { suite: SuiteKind::Robustness } => {
            let reports = robustness_suite(cli.seed)?;
            let mut w = out_file(&cli.out, "robustness.csv")?;
            writeln!(w, "preset,sensors,data,snr,iterations,atoms,max_distance,online_solves")?;
            for r in &reports {
                let p = r.pdap.as_ref().context("robustness runs use pdap")?;
                let dist = r.metrics.max_distance.map_or(String::from("nan"), |d| format!("{d:.5}"));
                let snr = r.snr.map_or(String::from("nan"), |s| format!("{s:.2}"));
                writeln!(
                    w,
                    "{},{},{},{snr},{},{},{dist},{}",
                    r.name,
                    r.n_sensors,
                    r.n_data,
                    p.counters.iterations,
                    p.n_atoms(),
                    r.online_pde_solves
                )?;
                println!("{:<18} sensors {:>3} iterations {:>2} distance {dist}", r.name, r.n_sensors, p.counters.iterations);
            }
            serde_json::to_writer_pretty(out_file(&cli.out, "robustness.json")?, &reports)?;
        }
        Command::Suite { suite: SuiteKind::Comparison } => {
            let cfg = match &cli.config {
                Some(_) => load_config(cli)?,
                None => preset("comparison")?,
            };
            let table = compare_methods(&cfg, cli.seed)?;
            for row in &table.rows {
                let d = row.max_distance.map_or(String::from("nan"), |d| format!("{d:.4}"));
                println!("{:?}: {} sensors, {}, {} online solves, max distance {d}", row.method, row.sensors, row.parameters, row.online_pde_solves);
            }
            serde_json::to_writer_pretty(out_file(&cli.out, "comparison.json")?, &table)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn verify(cli: &Cli, check: &VerifyCheck) -> Result<ExitCode> {
    let ok = match check {
        VerifyCheck::Convergence => {
            let table = convergence_study(&ConvergenceConfig::default())?;
            println!("reference peak {:.3}", table.reference_peak);
            for r in &table.rows {
                let order = r.order.map_or(String::from("-"), |o| format!("{o:.3}"));
                println!("h = 1/{:<4} dt = {:.5}  error {:.4e}  order {order}", r.cells, r.dt, r.error);
            }
            serde_json::to_writer_pretty(out_file(&cli.out, "convergence.json")?, &table)?;
            table.is_monotone()
        }
        VerifyCheck::Duality { trials } => {
            let scenario = Scenario::build(&load_config(cli)?)?;
            let op = scenario.model.observation_operator(&scenario.plan)?;
            let r = duality_check(&scenario.model, &op, *trials, cli.seed.unwrap_or(0))?;
            println!("{} trials: initial {:.3e}, continuous {:.3e}", r.trials, r.max_rel_initial, r.max_rel_continuous);
            r.max_rel_initial <= 1e-10 && r.max_rel_continuous <= 1e-10
        }
        VerifyCheck::Conservation { cells, steps } => {
            let r = conservation_check(*cells, *steps)?;
            println!("{} steps: relative mass drift {:.3e}", r.steps, r.max_rel_drift);
            r.max_rel_drift <= 1e-10
        }
    };
    if !ok {
        bail!("verification failed");
    }
    Ok(ExitCode::SUCCESS)
}

fn print_mesh_info(mesh: &TriMesh) {
    let markers = mesh.boundary_markers();
    let count = |m: BoundaryMarker| markers.iter().filter(|&&x| x == m).count();
    println!(
        "nodes {}, triangles {}, boundary edges {} (inflow {}, outflow {}, inner {}), area {:.6}, max h {:.5}",
        mesh.n_nodes(),
        mesh.n_triangles(),
        markers.len(),
        count(BoundaryMarker::Inflow),
        count(BoundaryMarker::Outflow),
        count(BoundaryMarker::Inner),
        mesh.total_area(),
        mesh.max_diameter()
    );
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use hologlab::euler2d::{load_trajectory, save_trajectory, verify_energy_identity, EulerState, Solver};
use hologlab::fields::{load_field, save_field, FieldSidecar};
use hologlab::harness::{
    fit_scaling_with, periodic_field, read_table, render, report, run_experiment, Experiment, FitModel, SweepConfig,
};
use hologlab::modulus::{holog_seminorm_with, Modulus, ModulusSpec};
use hologlab::mollify::MollifierKernel;
use hologlab::par::Exec;
use hologlab::{Error, Result};

#[derive(Parser)]
#[command(
    name = "hologlab",
    version,
    about = "Energy-flux and boundary-cutoff experiments for Hölog-regular flows"
)]
struct Cli {
    /// TOML sweep configuration (schema in docs/schema.md).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; affects speed only, never results.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Writes the configured periodic field to a binary file plus sidecar.
    GenField {
        #[arg(long)]
        output: Option<PathBuf>,
        /// Points per axis (defaults to grid.n).
        #[arg(long)]
        n: Option<usize>,
    },
    /// Seminorm of a saved field, or the seminorm_report experiment when no
    /// field is given.
    Seminorm {
        #[arg(long)]
        field: Option<PathBuf>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        s_max: Option<f64>,
    },
    /// Runs a flux_sweep config and audits its CSV.
    FluxSweep,
    /// Runs a lemma_sweep config and audits its CSV.
    LemmaSweep,
    /// Runs a j_sweep config and audits its CSV.
    JSweep,
    /// Integrates the configured initial data and saves the trajectory.
    EulerRun {
        #[arg(long)]
        dt: Option<f64>,
    },
    /// Checks the mollified energy balance on a saved trajectory, or runs the
    /// euler_identity experiment when no trajectory is given.
    EulerVerify {
        #[arg(long)]
        trajectory: Option<PathBuf>,
        #[arg(long, num_args = 1..)]
        eps: Vec<f64>,
    },
    /// Fits `log v = c + p log s (+ q log log 1/s)` to two CSV columns.
    Fit {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        x: String,
        #[arg(long)]
        y: String,
        #[arg(long, value_enum, default_value = "power-log")]
        model: ModelArg,
        /// Fit |y| instead of y.
        #[arg(long)]
        abs: bool,
    },
    /// Merges summaries, re-audits their CSVs and exits 1 on any violation.
    Report {
        #[arg(required = true)]
        summaries: Vec<PathBuf>,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum ModelArg {
    PowerLog,
    Power,
}

/// Whether any audited invariant failed.
type Violated = bool;

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(if cli.verbose {
            log::LevelFilter::Info
        } else {
            log::LevelFilter::Warn
        })
        .parse_default_env()
        .init();
    if let Some(t) = cli.threads {
        set_threads(t);
    }
    match dispatch(&cli) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

#[cfg(feature = "parallel")]
fn set_threads(n: usize) {
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
        log::warn!("could not size the thread pool: {e}");
    }
}

#[cfg(not(feature = "parallel"))]
fn set_threads(_: usize) {
    log::info!("built without the parallel feature; --threads is ignored");
}

fn load_config(cli: &Cli, experiment: Option<Experiment>) -> Result<SweepConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("this command needs --config <path>".into()))?;
    let mut cfg = SweepConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(e) = experiment {
        if cfg.experiment != e {
            return Err(Error::Config(format!(
                "{} holds a {} config, not {}",
                path.display(),
                cfg.experiment.name(),
                e.name()
            )));
        }
    }
    Ok(cfg)
}

fn experiment(cli: &Cli, e: Experiment) -> Result<Violated> {
    let cfg = load_config(cli, Some(e))?;
    let out = run_experiment(&cfg, &cli.out, Exec::default())?;
    let s = &out.summary;
    for c in &s.checks {
        println!("[{}] {:<24} {}", if c.passed { "ok" } else { "FAIL" }, c.name, c.detail);
    }
    println!("wrote {} and {}", out.csv_path.display(), out.summary_path.display());
    Ok(!s.passed)
}

fn print_json(v: &impl serde::Serialize) -> Result<()> {
    println!(
        "{}",
        serde_json::to_string_pretty(v).map_err(|e| Error::Format(e.to_string()))?
    );
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<Violated> {
    let exec = Exec::default();
    match &cli.command {
        Command::GenField { output, n } => {
            let cfg = load_config(cli, None)?;
            let n = n.unwrap_or(cfg.grid.n);
            if let Some(spec) = cfg.field.lacunary_spec(cfg.seed) {
                spec.validate()?;
                spec.check_resolution(n)?;
            }
            let field = periodic_field(&cfg, n)?;
            let path = output
                .clone()
                .unwrap_or_else(|| cli.out.join(format!("{}_{n}.field", cfg.field.kind())));
            if let Some(dir) = path.parent() {
                std::fs::create_dir_all(dir).map_err(|e| Error::Io {
                    path: dir.to_path_buf(),
                    source: e,
                })?;
            }
            let generator = json!({ "field": cfg.field, "seed": cfg.seed, "n": n });
            save_field(&path, &field, Some(&FieldSidecar::new(generator)))?;
            println!("wrote {}", path.display());
            Ok(false)
        }
        Command::Seminorm {
            field,
            alpha,
            lambda,
            s_max,
        } => match field {
            None => experiment(cli, Experiment::SeminormReport),
            Some(path) => {
                let m = seminorm_modulus(cli, *alpha, *lambda, *s_max)?;
                let f = load_field(path)?;
                print_json(&holog_seminorm_with(exec, &f, &m)?)?;
                Ok(false)
            }
        },
        Command::FluxSweep => experiment(cli, Experiment::FluxSweep),
        Command::LemmaSweep => experiment(cli, Experiment::LemmaSweep),
        Command::JSweep => experiment(cli, Experiment::JSweep),
        Command::EulerRun { dt } => {
            let cfg = load_config(cli, None)?;
            let e = &cfg.euler;
            let dt = dt
                .or(e.dt.first().copied())
                .ok_or_else(|| Error::Config("no time step given".into()))?;
            let init = EulerState::smooth_random(e.n, cfg.seed, e.decay_rate, e.u_max)?;
            let solver = Solver::new(init.grid(), exec)?;
            let steps = (e.t_final / dt).round() as usize;
            let traj = solver.run(&init, dt, steps, e.snapshot_every.max(1))?;
            let dir = cli.out.join("trajectory");
            let manifest = save_trajectory(&dir, &traj, Some(cfg.seed))?;
            println!(
                "{} snapshots, {} stability warning(s); wrote {}",
                traj.states.len(),
                traj.warnings.len(),
                manifest.display()
            );
            Ok(false)
        }
        Command::EulerVerify { trajectory, eps } => match trajectory {
            None => experiment(cli, Experiment::EulerIdentity),
            Some(dir) => verify_saved(cli, dir, eps),
        },
        Command::Fit { csv, x, y, model, abs } => {
            let t = read_table(csv)?;
            let col = |name: &str| -> Result<Vec<f64>> {
                let i = t
                    .columns
                    .iter()
                    .position(|c| c == name)
                    .ok_or_else(|| Error::Config(format!("{} has no column {name}", csv.display())))?;
                t.rows
                    .iter()
                    .map(|r| {
                        r[i].parse::<f64>()
                            .map_err(|_| Error::Format(format!("column {name}: bad value {:?}", r[i])))
                    })
                    .collect()
            };
            let (xs, ys) = (col(x)?, col(y)?);
            let pts: Vec<(f64, f64)> = xs
                .into_iter()
                .zip(ys)
                .map(|(s, v)| (s, if *abs { v.abs() } else { v }))
                .collect();
            let model = match model {
                ModelArg::PowerLog => FitModel::PowerLog,
                ModelArg::Power => FitModel::Power,
            };
            print_json(&fit_scaling_with(&pts, model)?)?;
            Ok(false)
        }
        Command::Report { summaries } => {
            let r = report(summaries)?;
            print!("{}", render(&r));
            std::fs::create_dir_all(&cli.out).map_err(|e| Error::Io {
                path: cli.out.clone(),
                source: e,
            })?;
            let path = cli.out.join("report.json");
            let text = serde_json::to_string_pretty(&r).map_err(|e| Error::Format(e.to_string()))?;
            std::fs::write(&path, text + "\n").map_err(|e| Error::Io {
                path: path.clone(),
                source: e,
            })?;
            println!("wrote {}", path.display());
            Ok(!r.passed)
        }
    }
}

fn seminorm_modulus(cli: &Cli, alpha: Option<f64>, lambda: Option<f64>, s_max: Option<f64>) -> Result<Modulus> {
    match alpha {
        Some(alpha) => ModulusSpec::Holog {
            alpha,
            lambda: lambda.unwrap_or(0.0),
            s_max: s_max.unwrap_or(hologlab::modulus::DEFAULT_S_MAX),
        }
        .build(),
        None => load_config(cli, None)?.modulus(),
    }
}

fn verify_saved(cli: &Cli, dir: &Path, eps: &[f64]) -> Result<Violated> {
    let (traj, _) = load_trajectory(dir)?;
    let grid = traj.states[0].grid().clone();
    let (eps, floor, tol) = match &cli.config {
        Some(_) => {
            let cfg = load_config(cli, None)?;
            let list = if eps.is_empty() {
                cfg.sweep.eps_list()
            } else {
                eps.to_vec()
            };
            (list, cfg.euler.kernel_floor, cfg.checks.euler_residual_max)
        }
        None => (eps.to_vec(), 1.0, 1e-4),
    };
    if eps.is_empty() {
        return Err(Error::Config("give --eps or a config with a sweep eps list".into()));
    }
    let mut violated = false;
    for e in eps {
        let k = MollifierKernel::with_floor(e, &grid, floor)?;
        let id = verify_energy_identity(&traj, &k, Exec::default())?;
        violated |= id.residual > tol * id.energy0;
        print_json(&id)?;
    }
    Ok(violated)
}

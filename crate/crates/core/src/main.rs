use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::{info, warn};
use num::ToPrimitive;

use chemovir::config::{parse_config, Config};
use chemovir::model::alpha_threshold;
use chemovir::monitors::{classify_boundedness, write_diagnostics_csv};
use chemovir::output::{write_atomic, write_atomic_with};
use chemovir::snapshot::write_snapshot;
use chemovir::stepper::{run, RunError};
use chemovir::sweep::run_sweep;
use chemovir::verify::{run_suite, Suite};

const EXIT_VERIFY: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(
    name = "chemovir",
    version,
    about = "Chemotaxis virus-infection model solver"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write diagnostics.csv and final.cvf.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; defaults to `output_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an alpha sweep and write sweep.csv.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads; defaults to `[sweep] jobs`, then available parallelism.
        #[arg(long, env = "CHEMOVIR_JOBS")]
        jobs: Option<usize>,
    },
    /// Run built-in verification scenarios (all suites when none is given).
    Verify {
        #[arg(long, value_parser = parse_suite)]
        suite: Vec<Suite>,
    },
    /// Print the critical alpha for dimension N.
    Threshold {
        #[arg(long)]
        n: u32,
    },
}

fn parse_suite(s: &str) -> Result<Suite, String> {
    s.parse()
}

struct Failure {
    code: u8,
    message: String,
}

fn fail(code: u8, message: impl Into<String>) -> Failure {
    Failure {
        code,
        message: message.into(),
    }
}

fn load_config(path: &Path) -> Result<Config, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        fail(
            EXIT_USAGE,
            format!("cannot read config {}: {e}", path.display()),
        )
    })?;
    parse_config(&text).map_err(|e| fail(EXIT_USAGE, format!("{}: {e}", path.display())))
}

fn prepare_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| {
        fail(
            EXIT_USAGE,
            format!("cannot create output directory {}: {e}", dir.display()),
        )
    })
}

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    fail(EXIT_USAGE, format!("cannot write {}: {e}", path.display()))
}

fn simulate(config: &Path, out: Option<PathBuf>) -> Result<(), Failure> {
    let cfg = load_config(config)?;
    let dir = out.unwrap_or_else(|| cfg.monitors.output_dir.clone());
    prepare_dir(&dir)?;
    let grid = cfg.grid();
    let params = cfg.params();
    let initial = cfg
        .model
        .preset
        .build(&grid, cfg.model.kappa, cfg.model.seed);
    let result = run(
        &initial,
        &params,
        &grid,
        &cfg.stepper.control,
        &cfg.run_options(),
    );
    let output = match result {
        Ok(o) => o,
        Err(RunError::Unstable {
            t,
            halvings,
            state,
            source,
        }) => {
            let path = dir.join("abort.cvf");
            if let Ok(text) = write_snapshot(&grid, &state) {
                if let Err(e) = write_atomic(&path, text.as_bytes()) {
                    warn!("{}", io_failure(&path, e).message);
                }
            }
            return Err(fail(
                EXIT_NUMERICAL,
                format!("run aborted at t = {t} after {halvings} step halvings: {source}; last state in {}", path.display()),
            ));
        }
        Err(e @ RunError::InvalidOptions(_)) => return Err(fail(EXIT_USAGE, e.to_string())),
        Err(e) => return Err(fail(EXIT_NUMERICAL, e.to_string())),
    };

    let csv_path = dir.join("diagnostics.csv");
    write_atomic_with(&csv_path, |w| {
        write_diagnostics_csv(&output.records, w).map_err(std::io::Error::other)
    })
    .map_err(|e| io_failure(&csv_path, e))?;
    let mut states = vec![("final.cvf".to_string(), &output.final_state)];
    for (i, s) in output.snapshots.iter().enumerate() {
        states.push((format!("snapshot_{i:03}.cvf"), s));
    }
    for (name, state) in states {
        let path = dir.join(name);
        let text = write_snapshot(&grid, state).map_err(|e| fail(EXIT_NUMERICAL, e.to_string()))?;
        write_atomic(&path, text.as_bytes()).map_err(|e| io_failure(&path, e))?;
    }

    info!(
        "{} steps, {} halvings, dt in [{:e}, {:e}]",
        output.stats.steps, output.stats.halvings, output.stats.dt_min, output.stats.dt_max
    );
    match classify_boundedness(&output.records, &cfg.monitors.classifier) {
        Ok(v) => println!("verdict: {} (peak sup u = {:.6e})", v.label, v.peak_sup_u),
        Err(e) => println!("verdict: unavailable ({e})"),
    }
    println!("wrote {}", dir.display());
    Ok(())
}

fn sweep(config: &Path, out: Option<PathBuf>, jobs: Option<usize>) -> Result<(), Failure> {
    let cfg = load_config(config)?;
    let dir = out.unwrap_or_else(|| cfg.monitors.output_dir.clone());
    prepare_dir(&dir)?;
    if jobs == Some(0) {
        return Err(fail(EXIT_USAGE, "--jobs must be >= 1"));
    }
    let result = run_sweep(&cfg.sweep_spec(), jobs.or(cfg.sweep.jobs))
        .map_err(|e| fail(EXIT_USAGE, e.to_string()))?;
    for row in &result.rows {
        if row.run_status != "ok" {
            warn!("alpha = {}: {}", row.alpha, row.run_status);
        }
    }
    let path = dir.join("sweep.csv");
    write_atomic_with(&path, |w| {
        result.write_csv(w).map_err(std::io::Error::other)
    })
    .map_err(|e| io_failure(&path, e))?;
    println!("wrote {} rows to {}", result.rows.len(), path.display());
    Ok(())
}

fn verify(suites: Vec<Suite>) -> Result<(), Failure> {
    let suites = if suites.is_empty() {
        Suite::ALL.to_vec()
    } else {
        suites
    };
    let mut failed = false;
    for suite in suites {
        let report =
            run_suite(suite).map_err(|e| fail(EXIT_NUMERICAL, format!("suite {suite}: {e}")))?;
        print!("{report}");
        failed |= !report.passed();
    }
    if failed {
        Err(fail(EXIT_VERIFY, "verification failed"))
    } else {
        Ok(())
    }
}

fn threshold(n: u32) -> Result<(), Failure> {
    let t = alpha_threshold(n).map_err(|e| fail(EXIT_USAGE, e.to_string()))?;
    let decimal = t.to_f64().expect("small rational");
    println!("{}/{} ≈ {decimal}", t.numer(), t.denom());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate { config, out } => simulate(&config, out),
        Command::Sweep { config, out, jobs } => sweep(&config, out, jobs),
        Command::Verify { suite } => verify(suite),
        Command::Threshold { n } => threshold(n),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

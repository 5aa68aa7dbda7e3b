mod config;
mod error;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use volterra_core::suite::{self, Status, SuiteConfig};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::run::Outcome;

/// Volterra-series modelling, identification and control toolkit.
#[derive(Debug, Parser)]
#[command(name = "volterra-lab", version)]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Step size override.
    #[arg(long, global = true)]
    h: Option<f64>,
    /// Number of cells override.
    #[arg(long, global = true)]
    n: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evaluate the Lambert W function.
    Lambert {
        /// Branch index (0 or -1).
        #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
        branch: i32,
        /// Explicit arguments, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        y: Vec<f64>,
        #[arg(long, allow_hyphen_values = true)]
        from: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        to: Option<f64>,
        #[arg(long, default_value_t = 11)]
        count: usize,
    },
    /// Generate the identification test signals.
    Signals,
    /// Identify kernels or product-integration weights.
    Identify,
    /// Simulate a model or reference system.
    Simulate,
    /// Solve an amplitude minimax problem.
    Optimize {
        #[arg(long)]
        problem: Option<String>,
        #[arg(long = "B")]
        b: Option<f64>,
        #[arg(long = "T")]
        t: Option<f64>,
    },
    /// Solve a polynomial Volterra equation.
    Solve,
    /// Estimate the blow-up time of a polynomial Volterra equation.
    Blowup,
    /// Run the regulation loop or the open-loop inverse.
    Control,
    /// Run the built-in acceptance checks.
    PaperSuite {
        /// Emit JSON instead of a table.
        #[arg(long)]
        json: bool,
        /// Override the Lambert identity tolerance.
        #[arg(long)]
        lambert_tol: Option<f64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match real_main(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("VOLTERRA_LAB_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("VOLTERRA_LAB_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))
}

fn real_main(cli: Cli) -> Result<ExitCode, CliError> {
    init_threads()?;
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply_overrides(cli.h, cli.n);
    cfg.check_paths()?;

    let outcome = match cli.command {
        Command::Lambert { branch, y, from, to, count } => {
            let ys = match (from, to) {
                (Some(a), Some(b)) if y.is_empty() => {
                    if count < 2 {
                        return Err(CliError::Config("--count must be at least 2".into()));
                    }
                    (0..count).map(|k| a + (b - a) * k as f64 / (count - 1) as f64).collect()
                }
                (None, None) if !y.is_empty() => y,
                _ => return Err(CliError::Config("give either --y or both --from and --to".into())),
            };
            run::lambert(branch, &ys)?
        }
        Command::Signals => run::signals(&cfg)?,
        Command::Identify => run::identify(&cfg)?,
        Command::Simulate => run::simulate(&cfg)?,
        Command::Optimize { problem, b, t } => {
            if let Some(p) = problem {
                cfg.optimize.problem = p;
            }
            if let Some(b) = b {
                cfg.optimize.b = b;
            }
            if let Some(t) = t {
                cfg.optimize.t = t;
            }
            run::optimize(&cfg)?
        }
        Command::Solve => run::solve(&cfg)?,
        Command::Blowup => run::blowup(&cfg)?,
        Command::Control => run::control(&cfg)?,
        Command::PaperSuite { json, lambert_tol } => return paper_suite(&cfg, json, lambert_tol),
    };
    for line in &outcome.log {
        println!("{line}");
    }
    write_outcome(&cli.out, &outcome)?;
    Ok(ExitCode::SUCCESS)
}

fn paper_suite(cfg: &RunConfig, json: bool, lambert_tol: Option<f64>) -> Result<ExitCode, CliError> {
    let mut sc = SuiteConfig { plant: cfg.plant, ..SuiteConfig::default() };
    if let Some(t) = lambert_tol {
        sc.lambert_tol = t;
    }
    let checks = suite::run_all(&sc);
    if json {
        let s = serde_json::to_string_pretty(&checks).map_err(|e| CliError::Io(e.to_string()))?;
        println!("{s}");
    } else {
        for c in &checks {
            println!("{}", c.line());
        }
    }
    let failed = checks.iter().filter(|c| c.status == Status::Fail).count();
    if !json {
        println!("{} checks, {failed} failed", checks.len());
    }
    Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

/// Writes every file to a temporary name first, then renames, so a failed
/// write leaves no half-populated output set.
fn write_outcome(dir: &Path, outcome: &Outcome) -> Result<(), CliError> {
    let io = |p: &Path, e: std::io::Error| CliError::Io(format!("{}: {e}", p.display()));
    std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let mut log = outcome.log.join("\n");
    log.push('\n');
    let mut all: Vec<(&str, &[u8])> = outcome.files.iter().map(|(n, b)| (n.as_str(), b.as_slice())).collect();
    all.push(("run.log", log.as_bytes()));
    let mut staged = Vec::new();
    for (name, bytes) in &all {
        let tmp = dir.join(format!(".{name}.tmp"));
        if let Err(e) = std::fs::write(&tmp, bytes) {
            for t in &staged {
                let _ = std::fs::remove_file(t);
            }
            return Err(io(&tmp, e));
        }
        staged.push(tmp);
    }
    for ((name, _), tmp) in all.iter().zip(&staged) {
        let dst = dir.join(name);
        std::fs::rename(tmp, &dst).map_err(|e| io(&dst, e))?;
    }
    Ok(())
}

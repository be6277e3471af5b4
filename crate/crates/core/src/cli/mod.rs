//! Command-line front end.
//!
//! Every command reads one JSON [`RunConfig`] and writes
//! `<out>/<command>/<hash16>/{report.json, *.csv, manifest.json}`, where
//! `hash16` is the first 16 hex digits of the SHA-256 of the canonical JSON of
//! the resolved config, command, seed and tolerance. Exit codes: 0 success,
//! 1 usage or config error, 2 model or numeric failure.

mod commands;
mod config;
mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use thiserror::Error;

pub use commands::{run_command, CommandOutput};
pub use config::{GibbsConfig, RunConfig, SaddleCheckConfig, SearchConfig, SimulationConfig};
pub use output::{config_hash, write_outputs, Manifest, OutputFile};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Model(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 1,
            CliError::Model(_) | CliError::Io(_) => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Critical points, certificates and valley structure.
    Analyze,
    /// Eyring–Kramers predictions on the epsilon ladder.
    Predict,
    /// Monte Carlo hitting-time ensembles.
    Simulate,
    /// Predictions against ensembles, with a PASS/FAIL verdict.
    Compare,
    /// Long-run occupation histogram against the Gibbs density.
    Gibbs,
    /// Saddle-local quadrature checks (d = 2).
    SaddleCheck,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Analyze => "analyze",
            Command::Predict => "predict",
            Command::Simulate => "simulate",
            Command::Compare => "compare",
            Command::Gibbs => "gibbs",
            Command::SaddleCheck => "saddle-check",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "metastable", version, about = "Eyring–Kramers predictions and Monte Carlo checks for non-reversible diffusions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output root directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Master seed for every random stream.
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Relative tolerance for `compare`.
    #[arg(long, global = true, default_value_t = 0.25)]
    pub tolerance: f64,
}

fn execute(cli: &Cli) -> Result<(PathBuf, Vec<String>), CliError> {
    let path = cli.config.as_ref().ok_or_else(|| CliError::Usage("--config PATH is required".into()))?;
    if !(cli.tolerance > 0.0 && cli.tolerance.is_finite()) {
        return Err(CliError::Usage(format!("--tolerance must be positive, got {}", cli.tolerance)));
    }
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    let cfg = RunConfig::from_json(&text)?.resolve_defaults()?;
    let started = std::time::Instant::now();
    let run = || run_command(cli.command, &cfg, cli.seed, cli.tolerance);
    let out = match cli.threads {
        Some(0) => return Err(CliError::Usage("--threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Usage(format!("cannot start {n} threads: {e}")))?
            .install(run),
        None => run(),
    };
    let (output, failure) = match out {
        Ok(o) => (o, None),
        // Model failures that still produced a report are written before exiting.
        Err((Some(o), e)) => (*o, Some(e)),
        Err((None, e)) => return Err(e),
    };
    let dir = write_outputs(&cli.out, cli.command.name(), path, &cfg, cli.seed, cli.tolerance, &output, started.elapsed())?;
    match failure {
        Some(e) => Err(e),
        None => Ok((dir, output.summary)),
    }
}

/// Parses `args` (including the program name) and runs the command; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok((dir, summary)) => {
            for line in summary {
                println!("{line}");
            }
            println!("{}", dir.display());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn main() -> i32 {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    run(std::env::args_os())
}

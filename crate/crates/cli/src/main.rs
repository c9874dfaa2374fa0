//! `packbench`: dataset generation, training, adaptation, evaluation and
//! oracle analysis for online 3D bin packing.

mod artifacts;
mod commands;
mod config;
mod error;
mod report;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use config::{Overrides, RunConfig};
use error::CliError;

/// Environment variable holding the worker count.
const WORKERS_VAR: &str = "PACKBENCH_WORKERS";

#[derive(Parser)]
#[command(name = "packbench", version, about = "Online 3D bin packing benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset file for one subset.
    Gen(Overrides),
    /// Two-phase training; one checkpoint per seed.
    Train(Overrides),
    /// Fine-tune the selection policy on each dataset's distributions and
    /// report the change in utilization.
    Adapt(Overrides),
    /// Argmax evaluation of checkpoints (or a baseline agent) on datasets.
    Eval(Overrides),
    /// Play datasets with tree search, with and without proposal pruning.
    Oracle(Overrides),
    /// Inclusion rates and rank curves of a proposal policy.
    Analyze(Overrides),
}

impl Command {
    fn split(self) -> (&'static str, Overrides) {
        match self {
            Command::Gen(o) => ("gen", o),
            Command::Train(o) => ("train", o),
            Command::Adapt(o) => ("adapt", o),
            Command::Eval(o) => ("eval", o),
            Command::Oracle(o) => ("oracle", o),
            Command::Analyze(o) => ("analyze", o),
        }
    }
}

fn configure_workers() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(WORKERS_VAR) else {
        return Ok(());
    };
    let n: usize = raw
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Usage(format!("{WORKERS_VAR} must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Runtime(e.to_string()))
}

fn run() -> Result<(), CliError> {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return Ok(());
        }
        Err(e) => return Err(CliError::Usage(e.to_string().trim_end().to_string())),
    };
    configure_workers()?;
    ctrlc::set_handler(|| {
        artifacts::discard_active();
        eprintln!("{}", CliError::Cancelled.record());
        std::process::exit(CliError::Cancelled.exit_code());
    })
    .map_err(|e| CliError::Runtime(e.to_string()))?;
    let (name, overrides) = cli.command.split();
    let cfg = RunConfig::resolve(name, &overrides)?;
    commands::run(&cfg)
}

fn main() {
    if let Err(e) = run() {
        eprintln!("{}", e.record());
        std::process::exit(e.exit_code());
    }
}

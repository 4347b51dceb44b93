//! `gridopf` — pipeline driver for the unified optimal-power-flow
//! surrogate: case tools, oracle-labeled dataset generation, incremental
//! training, evaluation against the oracle, and daily-trajectory tracking.
//!
//! Exit codes: 0 success, 1 domain failure (solver, data, model),
//! 2 usage error (bad flags or config).

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use config::CliError;

#[derive(Parser)]
#[command(name = "gridopf", version, about = "Unified optimal power flow surrogate pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Inspect, convert, or reduce network case files.
    Case(CaseArgs),
    /// Generate an oracle-labeled dataset from a run config.
    Gendata(GendataArgs),
    /// Train the voltage surrogate on a generated dataset.
    Train(TrainArgs),
    /// Score a trained model against the oracle labels of the test split.
    Eval(EvalArgs),
    /// Replay the daily trajectory and report per-slot optimality gaps.
    Track(TrackArgs),
}

#[derive(Args)]
struct CaseArgs {
    #[command(subcommand)]
    action: CaseAction,
}

#[derive(Subcommand)]
enum CaseAction {
    /// Parse a case file and report its dimensions.
    Validate { file: PathBuf },
    /// Parse a case file and print it as JSON.
    Dump {
        file: PathBuf,
        /// Write here instead of stdout.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Reduce a case to a nested sub-network of the given size.
    Derive {
        file: PathBuf,
        /// Number of buses to keep.
        #[arg(long)]
        target: usize,
        /// Destination case file.
        #[arg(short, long)]
        output: PathBuf,
    },
}

#[derive(Args)]
struct GendataArgs {
    /// Run configuration (TOML).
    #[arg(short, long)]
    config: PathBuf,
    /// Override the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override sampling.n_per_network.
    #[arg(long)]
    n: Option<usize>,
    /// Override sampling.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Generate the time-varying tracking dataset instead of the static one.
    #[arg(long)]
    tracking: bool,
    /// Cap the labeling worker pool at this many threads.
    #[arg(long)]
    jobs: Option<usize>,
    /// Omit wall-clock fields so identical reruns are byte-identical.
    #[arg(long)]
    no_provenance: bool,
}

#[derive(Args)]
struct TrainArgs {
    /// Run configuration (TOML).
    #[arg(short, long)]
    config: PathBuf,
    /// Dataset directory (default: <output_dir>/data).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Override the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override train.epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// Override train.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Train one standalone model per network instead of the shared one.
    #[arg(long)]
    separate: bool,
    /// Continue training from this checkpoint.
    #[arg(long, conflicts_with = "separate")]
    resume: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Run configuration (TOML).
    #[arg(short, long)]
    config: PathBuf,
    /// Dataset directory (default: <output_dir>/data).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Checkpoint to score (default: <output_dir>/checkpoint.json).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Report destination (default: <output_dir>/metrics.json).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override eval.tol.
    #[arg(long)]
    tol: Option<f64>,
    /// Score the oracle's own solutions as predictions (pipeline check).
    #[arg(long)]
    oracle_as_prediction: bool,
    /// Omit timing-derived numbers so identical reruns are byte-identical.
    #[arg(long)]
    no_provenance: bool,
}

#[derive(Args)]
struct TrackArgs {
    /// Run configuration (TOML).
    #[arg(short, long)]
    config: PathBuf,
    /// Dataset directory (default: <output_dir>/data).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Checkpoint to follow the day with (default: <output_dir>/checkpoint.json).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Slot schedule (default: <data>/schedule.json).
    #[arg(long)]
    schedule: Option<PathBuf>,
    /// CSV destination (default: <output_dir>/tracking.csv).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Case(args) => commands::case::run(args),
        Command::Gendata(args) => commands::gendata::run(args),
        Command::Train(args) => commands::train::run(args),
        Command::Eval(args) => commands::evaluate::run(args),
        Command::Track(args) => commands::track::run(args),
    }
}

fn main() -> ExitCode {
    // Die quietly when a pipe reader hangs up (e.g. `gridopf ... | head`)
    // instead of panicking on the failed write.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Domain(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

//! `vol`: descriptive statistics, training, Monte-Carlo prediction,
//! calibration and run reports.

mod commands;
mod config;
mod error;
mod plots;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::Common;
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "vol", version, about = "Probabilistic forecasting of a daily index series")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment configuration (flat JSON). Missing keys take default values.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Run directory to write to (and, for predict/calibrate, read from).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Seed for parameter initialization, shuffling and sampling.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// CSV file with Date and Close columns.
    #[arg(long, global = true, value_name = "PATH")]
    data: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Descriptive statistics, correlograms and a naive baseline.
    Stats,
    /// Train a model and write its checkpoint and metrics.
    Train,
    /// Monte-Carlo predictions with uncertainty decomposition.
    Predict,
    /// Fit the std scale factor on validation and evaluate it on test.
    Calibrate,
    /// Compare every run found under --out.
    Report,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let out = cli
        .out
        .ok_or_else(|| CliError::config("--out DIR is required"))?;
    let common = Common {
        config: cli.config,
        out,
        seed: cli.seed,
        data: cli.data,
    };
    match cli.command {
        Command::Stats => commands::stats(&common),
        Command::Train => commands::train_cmd(&common),
        Command::Predict => commands::predict_cmd(&common),
        Command::Calibrate => commands::calibrate_cmd(&common),
        Command::Report => commands::report_cmd(&common),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let report = serde_json::json!({ "error": e.kind, "code": e.code, "message": e.message });
            eprintln!("vol: {e}");
            eprintln!("{report}");
            ExitCode::from(e.code as u8)
        }
    }
}

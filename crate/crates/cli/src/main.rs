//! `sagan`: the staged command-line workflow.
//!
//! Exit codes: 0 success, 1 computation failure, 2 usage or I/O error.

mod commands;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sagan_core::config::RunConfig;

use crate::error::{usage, CliResult};

#[derive(Parser)]
#[command(name = "sagan", version, about = "Cross-subject activity-recognition transfer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic subjects in the raw recording format.
    Synth(commands::SynthArgs),
    /// Parse, window and project recordings into per-subject domain files.
    Preprocess(commands::PreprocessArgs),
    /// Rank candidate sources by estimated W1 distance to a target.
    Distance(commands::DistanceArgs),
    /// Train a transfer model (or a plain baseline classifier).
    Train(commands::TrainArgs),
    /// Score a checkpoint on a target's test split, or a confusion matrix file.
    Evaluate(commands::EvaluateArgs),
    /// Merge evaluation reports into the comparison table.
    Report(commands::ReportArgs),
    /// Evaluate every ordered subject pair under every mode.
    Matrix(commands::MatrixArgs),
}

/// Configuration flags shared by every computing command.
#[derive(Args, Debug, Clone, Default)]
pub struct ConfigArgs {
    /// `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set trainer.epochs=20`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Shorthand for `--set seed=N`.
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> CliResult<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| usage(format!("--set expects KEY=VALUE, got {kv:?}")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Preprocess(a) => commands::preprocess(a),
        Command::Distance(a) => commands::distance(a),
        Command::Train(a) => commands::train(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Report(a) => commands::report(a),
        Command::Matrix(a) => commands::matrix(a),
    };
    match result {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

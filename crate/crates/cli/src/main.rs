//! `ncae` command-line tool: train, evaluate, recommend and split.

mod commands;
mod options;

use std::fmt;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{EvaluateCmd, RecommendCmd, SplitCmd, TrainCmd};

/// Invalid flag combination or value; reported with exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Debug, Parser)]
#[command(name = "ncae", version, about = "Autoencoder recommender for ratings and implicit feedback")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Pre-train and fine-tune a model, logging JSON lines to stdout.
    Train(TrainCmd),
    /// Score a checkpoint on the validation or test part of its split.
    Evaluate(EvaluateCmd),
    /// Top-M unseen items for one user.
    Recommend(RecommendCmd),
    /// Write the train/valid/test parts of a ratings file.
    Split(SplitCmd),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(cmd) => commands::train(cmd),
        Command::Evaluate(cmd) => commands::evaluate(cmd),
        Command::Recommend(cmd) => commands::recommend(cmd),
        Command::Split(cmd) => commands::split_data(cmd),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            if let Some(usage) = err.downcast_ref::<UsageError>() {
                eprintln!("error: {}", usage);
                return ExitCode::from(2);
            }
            eprintln!("error: {:#}", err);
            ExitCode::FAILURE
        }
    }
}

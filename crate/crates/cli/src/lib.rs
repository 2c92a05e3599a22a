//! Command-line driver: synthesize tensors, stream-train, predict, evaluate
//! and run the oracle checks.

pub mod commands;
pub mod config;

use anyhow::Result;
use clap::{Parser, Subcommand};

pub use config::{ConfigFlags, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "streamfact", version, about = "Streaming Bayesian deep tensor factorization")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a synthetic tensor and write train/test COO files plus ground truth.
    Synth(commands::SynthArgs),
    /// Stream the training entries batch by batch; optionally score a test set after each batch.
    Train(commands::TrainArgs),
    /// Predict values for index tuples from a checkpoint.
    Predict(commands::PredictArgs),
    /// Score a checkpoint on labelled entries (RMSE or AUC).
    Eval(commands::EvalArgs),
    /// Run the oracle checks and print one line per check.
    Verify(commands::VerifyArgs),
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Synth(a) => commands::cmd_synth(a),
        Command::Train(a) => commands::cmd_train(a),
        Command::Predict(a) => commands::cmd_predict(a),
        Command::Eval(a) => commands::cmd_eval(a),
        Command::Verify(a) => commands::cmd_verify(a),
    }
}

/// Stable code for the first recognised error in the chain.
pub fn error_code(err: &anyhow::Error) -> &'static str {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<streamfact_core::Error>() {
            return e.code();
        }
        if cause.is::<serde_json::Error>() {
            return "json";
        }
        if cause.is::<std::io::Error>() {
            return "io";
        }
    }
    "internal"
}

/// `error: <code>: <message>` on one line.
pub fn error_line(err: &anyhow::Error) -> String {
    let msg = format!("{err:#}").replace(['\n', '\r'], " ");
    format!("error: {}: {}", error_code(err), msg)
}

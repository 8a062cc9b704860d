//! `hsmm`: simulate, fit, decode and diagnose covariate-duration HSMMs.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hsmm_core::HsmmError;
use serde_json::json;
use thiserror::Error;

use crate::config::{Config, Overrides};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] HsmmError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Core(HsmmError::Config(_)) => 2,
            _ => 1,
        }
    }

    fn to_json(&self) -> serde_json::Value {
        let kind = match self {
            CliError::Config(_) | CliError::Core(HsmmError::Config(_)) => "config",
            CliError::Core(HsmmError::Data { .. }) => "data",
            CliError::Core(HsmmError::Parse { .. }) => "parse",
            CliError::Core(HsmmError::Schema(_)) => "schema",
            CliError::Core(HsmmError::Singular { .. }) => "singular",
            CliError::Core(HsmmError::Infeasible(_)) => "infeasible",
            CliError::Io(_) | CliError::Core(HsmmError::Io(_)) => "io",
            CliError::Csv(_) | CliError::Core(HsmmError::Csv(_)) => "csv",
            CliError::Json(_) | CliError::Core(HsmmError::Json(_)) => "json",
            CliError::Core(_) => "model",
        };
        let mut value = json!({ "error": kind, "message": self.to_string() });
        match self {
            CliError::Core(HsmmError::Data { row, .. }) => value["row"] = json!(row),
            CliError::Core(HsmmError::Parse { row, column, .. }) => {
                value["row"] = json!(row);
                value["column"] = json!(column);
            }
            CliError::Core(HsmmError::Schema(column)) => value["column"] = json!(column),
            CliError::Core(HsmmError::Singular { dims }) => value["dims"] = json!(dims),
            _ => {}
        }
        value
    }
}

#[derive(Debug, Parser)]
#[command(name = "hsmm", version, about = "Bayesian hidden semi-Markov models with covariate-dependent durations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML configuration file; unknown keys are rejected.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    chains: Option<usize>,
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a data set with known states and parameters.
    Simulate,
    /// Run MCMC chains for every configured state count.
    Fit,
    /// Write the most probable state sequence under given parameters.
    Decode,
    /// Run the fixed-state credible-interval coverage study.
    Coverage,
    /// Estimate within-state autocorrelation and recommend a subsampling rate.
    Diagnose,
    /// Re-summarize the draw files of a previous fit.
    Summarize,
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let overrides = Overrides { seed: cli.seed, chains: cli.chains, threads: cli.threads, out: cli.out.clone() };
    let config = Config::load(cli.config.as_deref(), &overrides)?;
    match cli.command {
        Command::Simulate => commands::simulate(&config),
        Command::Fit => commands::fit(&config),
        Command::Decode => commands::decode(&config),
        Command::Coverage => commands::coverage(&config),
        Command::Diagnose => commands::diagnose(&config),
        Command::Summarize => commands::summarize_fit(&config),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code())
        }
    }
}

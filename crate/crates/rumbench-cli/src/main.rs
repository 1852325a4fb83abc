//! `rumbench`: benchmark choice models against analytic ground truth.
//!
//! Each subcommand reads one JSON configuration, runs deterministically and
//! prints a JSON summary naming the output directory. Failures print a
//! machine-readable error object to stderr and exit nonzero.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use rumbench::{Error, Result};
use rumbench_cli::config::ToolConfig;
use rumbench_cli::runner;

#[derive(Parser)]
#[command(
    name = "rumbench",
    version,
    about = "Benchmark random-utility and machine-learning choice models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand; each overrides its config field.
#[derive(Args)]
struct Common {
    /// Run configuration file (JSON); built-in defaults when omitted.
    #[arg(long, value_name = "JSON")]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Trial budget for every configured hyperparameter search.
    #[arg(long)]
    budget: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the selected synthetic datasets as train/test CSV pairs.
    Generate(Common),
    /// Fit every configured model and persist the fitted documents.
    Fit(Common),
    /// Score configured models, or a persisted model file, on held-out data.
    Evaluate(Common),
    /// Run the configured hyperparameter searches and report trials.
    Hpo(Common),
    /// Population willingness-to-pay / value-of-time reports.
    Indicators(Common),
    /// Probability curves along one attribute, with truth where available.
    Sweep(Common),
    /// The three synthetic experiments and the real-data pipeline.
    #[command(subcommand)]
    Experiment(ExperimentCommand),
}

#[derive(Subcommand)]
enum ExperimentCommand {
    /// Predictive performance: grouped CV and held-out metrics per model.
    #[command(name = "1")]
    One(Common),
    /// Probability curves inside and outside the attribute support.
    #[command(name = "2")]
    Two(Common),
    /// Market shares under demand scenarios and WTP distributions.
    #[command(name = "3")]
    Three(Common),
    /// Ingest an external CSV, split, normalise, fit and report.
    Real(Common),
}

fn load_config(common: &Common) -> Result<ToolConfig> {
    let mut cfg = match &common.config {
        Some(path) => ToolConfig::load(path)?,
        None => ToolConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out = out.clone();
    }
    if let Some(budget) = common.budget {
        if budget == 0 {
            return Err(Error::config("--budget must be positive"));
        }
        for entry in &mut cfg.models {
            if let Some(hpo) = &mut entry.hpo {
                hpo.budget = budget;
            }
        }
    }
    Ok(cfg)
}

fn dispatch(command: &Command) -> Result<Value> {
    let (common, run): (&Common, fn(&ToolConfig) -> Result<Value>) = match command {
        Command::Generate(c) => (c, runner::run_generate),
        Command::Fit(c) => (c, runner::run_fit),
        Command::Evaluate(c) => (c, runner::run_evaluate),
        Command::Hpo(c) => (c, runner::run_hpo),
        Command::Indicators(c) => (c, runner::run_indicators),
        Command::Sweep(c) => (c, runner::run_sweep),
        Command::Experiment(e) => match e {
            ExperimentCommand::One(c) => (c, runner::run_experiment1),
            ExperimentCommand::Two(c) => (c, runner::run_experiment2),
            ExperimentCommand::Three(c) => (c, runner::run_experiment3),
            ExperimentCommand::Real(c) => (c, runner::run_real),
        },
    };
    run(&load_config(common)?)
}

fn error_kind(error: &Error) -> &'static str {
    match error {
        Error::Config(_) => "config",
        Error::Dimension(_) => "dimension",
        Error::Domain(_) => "domain",
        Error::Family(_) => "family",
        Error::NonConvergence { .. } => "non_convergence",
        Error::Diverged(_) => "diverged",
        Error::InvalidModel(_) => "invalid_model",
        Error::UnsupportedVersion(_) => "unsupported_version",
        Error::Csv(_) => "csv",
        Error::Io(_) => "io",
        Error::Json(_) => "json",
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli.command) {
        Ok(summary) => {
            println!("{summary:#}");
            ExitCode::SUCCESS
        }
        Err(error) => {
            let report = json!({"error": error.to_string(), "kind": error_kind(&error)});
            eprintln!("{report}");
            ExitCode::FAILURE
        }
    }
}

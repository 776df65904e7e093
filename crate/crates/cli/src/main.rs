//! `urca`: validate datasets, run the pipeline, sweep ablations and label
//! forest-plot intervals.
//!
//! Exit codes: 0 success, 1 data errors, 2 usage or configuration errors.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use urca_core::generation::OrderingKind;
use urca_core::VariantSpec;

#[derive(Debug, Parser)]
#[command(name = "urca", version, about = "Uniform retrieval and clustered extraction for study-level evidence synthesis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check every record of a JSON-lines dataset.
    Validate {
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Run one variant over a dataset and write its run log.
    Run {
        #[command(flatten)]
        common: CommonArgs,
        /// Variant name; defaults to the config's variant.
        #[arg(long)]
        variant: Option<VariantSpec>,
        /// Run log destination (JSON lines).
        #[arg(long)]
        out: PathBuf,
    },
    /// Run several variants and/or every ordering strategy, then write a
    /// comparison table.
    Ablate {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated variant names.
        #[arg(long, value_delimiter = ',')]
        variants: Vec<String>,
        /// Also run the configured variant under all five ordering strategies.
        #[arg(long)]
        ordering_sweep: bool,
        /// Variant used by the ordering sweep; defaults to the config's variant.
        #[arg(long)]
        variant: Option<VariantSpec>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Label studies from a CSV of confidence intervals
    /// (study_id, point, ci_low, ci_high, effect_kind).
    Label {
        csv: PathBuf,
    },
}

#[derive(Debug, Args)]
struct CommonArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// TOML pipeline config; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Concurrent records in flight.
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u32).range(1..))]
    parallelism: u32,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config's cluster ordering strategy.
    #[arg(long)]
    ordering: Option<OrderingKind>,
    /// Record the current time in the run manifest.
    #[arg(long)]
    timestamp: bool,
}

#[derive(Debug)]
pub enum CliError {
    /// Bad input data; exit status 1.
    Data(String),
    /// Bad invocation or configuration; exit status 2.
    Usage(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Data(_) => 1,
            CliError::Usage(_) => 2,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Validate { dataset } => commands::validate(&dataset),
        Command::Run { common, variant, out } => commands::run(&common, variant, &out),
        Command::Ablate {
            common,
            variants,
            ordering_sweep,
            variant,
            out_dir,
        } => commands::ablate(&common, &variants, ordering_sweep, variant, &out_dir),
        Command::Label { csv } => commands::label(&csv),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (CliError::Data(msg) | CliError::Usage(msg)) = &e;
            eprintln!("error: {msg}");
            ExitCode::from(e.exit_code())
        }
    }
}

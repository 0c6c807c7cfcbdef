//! `rna`: generate synthetic audio-visual benchmarks, train two-stream
//! models with cross-modal norm losses, run result matrices and report
//! feature-norm statistics.
//!
//! Exit codes: 0 success, 1 numerical failure, 2 configuration or parse
//! failure.

mod commands;
mod config_file;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::{NormsOptions, RunOptions};
use crate::error::CliResult;

#[derive(Debug, Parser)]
#[command(name = "rna", version, about = "Relative norm alignment experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Configuration file (`[section]` headers, `key = value` lines).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the seed from the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Only errors on stderr.
    #[arg(long)]
    quiet: bool,
}

impl From<RunArgs> for RunOptions {
    fn from(a: RunArgs) -> Self {
        RunOptions {
            config: a.config,
            out: a.out,
            seed: a.seed,
            quiet: a.quiet,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic benchmark as RNAFEAT v1 files, one per domain and split.
    Generate(RunArgs),
    /// Train and evaluate one model; prints `setting=<..> aux=<..> acc=<..>`.
    Train(RunArgs),
    /// Run a methods x domain-pairs table over several seeds.
    Matrix(RunArgs),
    /// Report mean norms, delta, rho and top-k norm share.
    Norms {
        /// Telemetry CSVs or RNAFEAT v1 feature files.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Dimensions counted in the top-k share (default 300, clamped to the width).
        #[arg(long)]
        top_k: Option<usize>,
        /// Encode feature files with this model before measuring.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Also write the report as CSV into this directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        quiet: bool,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Generate(a) => commands::generate(&a.into()),
        Command::Train(a) => commands::train(&a.into()),
        Command::Matrix(a) => commands::matrix(&a.into()),
        Command::Norms {
            inputs,
            top_k,
            checkpoint,
            out,
            quiet,
        } => commands::norms(&NormsOptions {
            inputs,
            top_k,
            checkpoint,
            out,
            quiet,
        })
        .map(|_| ()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

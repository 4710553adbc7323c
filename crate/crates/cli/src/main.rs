//! `strainve`: fit, test, simulate, and report from the command line.

mod commands;
mod config;
mod input;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::NumericalFailure;
use crate::config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "strainve", version, about = "Strain-specific vaccine efficacy with missing causes")]
struct Cli {
    /// TOML file with default values for any flag.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit the requested methods and write coefficient, VE, VD and baseline tables.
    Fit(RunConfig),
    /// Fit and run the overall, per-strain and sieve tests.
    Test(RunConfig),
    /// Run a replication study of a simulation scenario.
    Simulate(RunConfig),
    /// Re-render tables from the JSON results in `--out`.
    Report(RunConfig),
}

/// 2 for input problems, 1 for numerical failures.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<NumericalFailure>().is_some() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<strainve_core::Error>() {
            return if e.is_input_error() { 2 } else { 1 };
        }
    }
    2
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let base = match &cli.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Fit(flags) => commands::fit(&base.merged(&flags)),
        Command::Test(flags) => commands::test(&base.merged(&flags)),
        Command::Simulate(flags) => commands::simulate(&base.merged(&flags)),
        Command::Report(flags) => commands::report(&base.merged(&flags)),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

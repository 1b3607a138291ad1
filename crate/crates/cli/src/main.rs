//! `qswitch`: batch runner for switched-environment quantum experiments.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::Command;
use crate::config::{Experiment, Overrides};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "qswitch", version, about = "Environment-averaged dynamics of switched quantum systems")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// Integrate the averaged master equation.
    Ode(RunArgs),
    /// Monte Carlo average over environment paths.
    Mc(RunArgs),
    /// Run both and fail if any entry differs by more than 5 standard errors.
    Compare(RunArgs),
    /// Check the Laplace fixed point against the generator resolvent.
    Laplace(RunArgs),
    /// Run the model's invariant suite.
    Check(RunArgs),
}

#[derive(Debug, clap::Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for Monte Carlo sampling; results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

fn execute(command: Command, args: RunArgs) -> Result<(), CliError> {
    let overrides = Overrides { seed: args.seed, samples: args.samples, out: args.out };
    let experiment = Experiment::load(&args.config, &overrides)?;
    commands::run(command, &experiment, args.threads)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (command, args) = match cli.command {
        Sub::Ode(a) => (Command::Ode, a),
        Sub::Mc(a) => (Command::Mc, a),
        Sub::Compare(a) => (Command::Compare, a),
        Sub::Laplace(a) => (Command::Laplace, a),
        Sub::Check(a) => (Command::Check, a),
    };
    match execute(command, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.failure.exit_code() as u8)
        }
    }
}

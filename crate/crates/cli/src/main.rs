//! `invlim`: batch driver for the hyperbolic-structure, bundle and conjugacy computations.

mod commands;
mod config;
mod exit;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::ExperimentConfig;
use exit::Failure;

#[derive(Parser)]
#[command(name = "invlim", version, about = "Conjugacy experiments on inverse limits of hyperbolic endomorphisms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Run {
    /// TOML experiment config.
    config: PathBuf,
    /// Overrides `output_dir` from the config.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Basic pieces, filtration, covers and the Axiom A check.
    Hyperbolic(Run),
    /// Invariant bundle families and their item-by-item report.
    Bundles(Run),
    /// Solve for the conjugacy and verify its conditions.
    Conjugacy(Run),
    /// Run `bundles` or `conjugacy` over the grid in the config's [sweep] table.
    Sweep {
        #[command(flatten)]
        run: Run,
        /// Runs executed at the same time.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// List the systems addressable by name.
    ZooList,
}

fn load(run: &Run) -> Result<ExperimentConfig, Failure> {
    let mut cfg = ExperimentConfig::load(&run.config)?;
    if let Some(d) = &run.output_dir {
        cfg.output_dir = d.clone();
    }
    Ok(cfg)
}

fn dispatch(cmd: Command) -> Result<u8, Failure> {
    match cmd {
        Command::Hyperbolic(r) => commands::hyperbolic(&load(&r)?),
        Command::Bundles(r) => commands::bundles(&load(&r)?),
        Command::Conjugacy(r) => commands::conjugacy(&load(&r)?),
        Command::Sweep { run, jobs } => commands::sweep(&load(&run)?, jobs),
        Command::ZooList => {
            print!("{}", commands::zoo_list());
            Ok(exit::OK)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}

//! `bohmlab`: runs coin-toss, equivariance, equilibrium and classical-flip
//! experiments and analyzes bit sequences.
//!
//! Exit status: 0 success, 1 configuration error, 2 runtime error,
//! 3 verdict "refuted" under `--expect-consistent`.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::{parse_oracle_override, ExperimentConfig, ORACLE_OVERRIDE_ENV};
use crate::error::CliError;
use crate::output::OutputDir;

#[derive(Debug, Parser)]
#[command(
    name = "bohmlab",
    version,
    about = "Pilot-wave coin tosses and randomness analysis"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Sectioned TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set packet.width=1.5`. Repeatable.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Output directory (default `experiment.out`, then `bohmlab-out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Use the seeded ChaCha20 oracle with this seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a sequence of quantum coin tosses.
    Toss,
    /// Randomness report for a file of ASCII bits.
    Analyze {
        /// Bit file; defaults to `analysis.input`.
        input: Option<PathBuf>,
        /// Exit with status 3 if the verdict is "refuted".
        #[arg(long)]
        expect_consistent: bool,
    },
    /// Compare an evolved Born ensemble with the evolved density.
    Equivariance,
    /// Conditional wave functions and the product Born rule on small grids.
    EquilibriumDemo,
    /// Classical coin flip: band structure and washing out.
    CoinflipClassical,
}

fn load_config(common: &Common) -> Result<ExperimentConfig, CliError> {
    let mut config = ExperimentConfig::load(common.config.as_deref(), &common.overrides)?;
    if let Some(seed) = common.seed {
        config.set_oracle(&bohmlab::sampling::OracleDescriptor::SeededPrng { seed });
    }
    if let Ok(forced) = std::env::var(ORACLE_OVERRIDE_ENV) {
        if !forced.trim().is_empty() {
            config.set_oracle(&parse_oracle_override(&forced)?);
        }
    }
    if let Some(out) = &common.out {
        config.experiment.out = Some(out.clone());
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = load_config(&cli.common)?;
    let dir = config
        .experiment
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("bohmlab-out"));
    let mut out = OutputDir::create(&dir)?;
    match &cli.command {
        Command::Toss => commands::toss(&config, &mut out),
        Command::Analyze {
            input,
            expect_consistent,
        } => commands::analyze(&config, input.as_deref(), *expect_consistent, &mut out),
        Command::Equivariance => commands::equivariance(&config, &mut out),
        Command::EquilibriumDemo => commands::equilibrium_demo(&config, &mut out),
        Command::CoinflipClassical => commands::coinflip_classical(&config, &mut out),
    }?;
    println!("outputs written to {}", out.path().display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("bohmlab: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

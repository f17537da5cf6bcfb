//! `fedshap` command-line harness: TOML-configured simulation, contribution
//! assessment, epoch scheduling, dishonest-client detection and method
//! comparison, with reproducible file outputs.

pub mod commands;
pub mod config;
pub mod error;
mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::{Context, Outcome, Overrides};
pub use config::ExperimentConfig;
pub use error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "fedshap", version, about = "Contribution assessment for federated training runs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the config's seed list with this single seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (default: the config's output_dir, else ./fedshap-out).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Wall-clock budget for assessment, in seconds.
    #[arg(long)]
    pub cutoff_seconds: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the federated simulation and write the gradient log.
    Simulate(Common),
    /// Compute the contribution timeline of a gradient log.
    Assess {
        #[command(flatten)]
        common: Common,
        /// Gradient log to assess (default: <out>/gradient_log.json).
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Choose the epochs to assess under the configured budget.
    Schedule {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Flag clients whose contribution trend changes inside the configured window.
    Detect {
        #[command(flatten)]
        common: Common,
        /// Timeline to analyse (default: <out>/timeline.json).
        #[arg(long)]
        timeline: Option<PathBuf>,
    },
    /// Compare exact, Monte Carlo and scheduled assessment over the configured grid.
    Compare(Common),
}

fn context(common: &Common) -> Result<Context> {
    Context::load(
        &common.config,
        &Overrides {
            seed: common.seed,
            out: common.out.clone(),
            cutoff_seconds: common.cutoff_seconds,
        },
    )
}

pub fn run(cli: &Cli) -> Result<Outcome> {
    match &cli.command {
        Command::Simulate(common) => commands::simulate(&context(common)?),
        Command::Assess { common, log } => {
            let ctx = context(common)?;
            let log = log.clone().unwrap_or_else(|| ctx.out.join(commands::LOG_FILE));
            commands::assess(&ctx, &log)
        }
        Command::Schedule { common, log } => {
            let ctx = context(common)?;
            let log = log.clone().unwrap_or_else(|| ctx.out.join(commands::LOG_FILE));
            commands::schedule(&ctx, &log)
        }
        Command::Detect { common, timeline } => {
            let ctx = context(common)?;
            let timeline = timeline.clone().unwrap_or_else(|| ctx.out.join(commands::TIMELINE_JSON));
            commands::detect(&ctx, &timeline)
        }
        Command::Compare(common) => commands::compare(&context(common)?),
    }
}

//! Batch front end: estimation, training, tuning, reports and synthetic
//! datasets.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{Overrides, RunConfig};
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "nightawb", version, about = "Nighttime auto white balance")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct CommonArgs {
    /// TOML configuration file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// `first-M` or comma-separated image ids.
    #[arg(long)]
    pub pool: Option<String>,
    /// Disable the variance and color-deviation filters.
    #[arg(long)]
    pub no_filters: bool,
    /// One environment and a 20 000-step budget.
    #[arg(long)]
    pub desk_scale: bool,
}

impl CommonArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            config: self.config.clone(),
            dataset: self.dataset.clone(),
            out: self.out.clone(),
            seed: self.seed,
            checkpoint: self.checkpoint.clone(),
            pool: self.pool.clone(),
            no_filters: self.no_filters,
            desk_scale: self.desk_scale,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate illuminants with fixed parameters.
    Estimate(CommonArgs),
    /// Train the tuning policy on a curriculum pool.
    Train(CommonArgs),
    /// Tune parameters per image with a trained policy.
    Tune(CommonArgs),
    /// Compare estimate CSVs in a summary table.
    Report {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Render a synthetic night-scene dataset.
    Synth {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        size: Option<usize>,
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long)]
        gray_fraction: Option<f64>,
    },
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Estimate(a) => commands::cmd_estimate(&RunConfig::resolve(&a.overrides())?),
        Command::Train(a) => commands::cmd_train(&RunConfig::resolve(&a.overrides())?),
        Command::Tune(a) => commands::cmd_tune(&RunConfig::resolve(&a.overrides())?),
        Command::Report { common, inputs } => {
            commands::cmd_report(&RunConfig::resolve(&common.overrides())?, &inputs)
        }
        Command::Synth {
            common,
            count,
            size,
            noise,
            gray_fraction,
        } => {
            let mut cfg = RunConfig::resolve(&common.overrides())?;
            let s = &mut cfg.synth;
            s.count = count.unwrap_or(s.count);
            s.size = size.unwrap_or(s.size);
            s.noise_sigma = noise.unwrap_or(s.noise_sigma);
            s.gray_fraction = gray_fraction.unwrap_or(s.gray_fraction);
            commands::cmd_synth(&cfg)
        }
    }
}

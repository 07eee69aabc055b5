//! Command-line front end.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::Result;
use crate::experiment::{
    cmd_bias, cmd_estimate, cmd_limits, cmd_simulate, cmd_sweep, CommandOutcome, ExperimentConfig,
};

/// Exit code when a bias calibration cannot decide the sign.
pub const EXIT_INCONCLUSIVE: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "multiscale-mle", version, about = "Drift estimation for multiscale diffusions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write one stationary trajectory as CSV.
    Simulate(CommonArgs),
    /// Per-replicate estimates with and without subsampling.
    Estimate(CommonArgs),
    /// Replicate means of the estimator across subsampling exponents.
    Sweep(CommonArgs),
    /// Closed-form bias term against its simulated value.
    Bias(CommonArgs),
    /// Large-time limits of the per-time log-likelihood and their maximizers.
    Limits(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Experiment config (key = value lines); a run manifest also works.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Base seed (overrides `base_seed`).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of replicates (overrides `replicates`).
    #[arg(long)]
    pub replicates: Option<usize>,
}

impl CommonArgs {
    pub fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        if let Some(seed) = self.seed {
            cfg.base_seed = seed;
        }
        if let Some(n) = self.replicates {
            cfg.replicates = n;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn execute(cli: &Cli) -> Result<CommandOutcome> {
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(&a.load()?),
        Command::Estimate(a) => cmd_estimate(&a.load()?),
        Command::Sweep(a) => cmd_sweep(&a.load()?),
        Command::Bias(a) => cmd_bias(&a.load()?),
        Command::Limits(a) => cmd_limits(&a.load()?),
    }
}

/// Runs the CLI and returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    match execute(cli) {
        Ok(outcome) => {
            println!("{}", outcome.summary);
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            if outcome.inconclusive {
                eprintln!("calibration inconclusive: standard error exceeds |Ê|");
                EXIT_INCONCLUSIVE
            } else {
                0
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use lagfluid::io::RunConfig;
use lagfluid::pipeline;

/// Lagrangian fluid workbench: SPH datasets, learned surrogates, rollout metrics.
#[derive(Parser)]
#[command(name = "lagfluid", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Override the master seed; model and training seeds are re-derived.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> Result<RunConfig> {
        let mut run = RunConfig::load(&self.config).with_context(|| format!("reading {}", self.config.display()))?;
        if let Some(seed) = self.seed {
            run.set_seed(seed);
        }
        Ok(run)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the configured scenario and write a dataset directory.
    Generate {
        #[command(flatten)]
        common: Common,
        /// Output dataset directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the configured model; resumes from an existing checkpoint.
    Train {
        #[command(flatten)]
        common: Common,
        /// Dataset directory written by `generate`.
        #[arg(long)]
        dataset: PathBuf,
        /// Directory for checkpoints and the training curve.
        #[arg(long)]
        checkpoints: PathBuf,
    },
    /// Roll a checkpoint out from the first frames of a trajectory file.
    Rollout {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Reference trajectory supplying the seed frames.
        #[arg(long)]
        trajectory: PathBuf,
        /// Output trajectory file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a checkpoint on the test split of a dataset.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Directory for `steps.csv` and `summary.json`.
        #[arg(long)]
        report: PathBuf,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { common, out } => {
            let config = common.load()?;
            let manifest = pipeline::generate(&config, &out, |line| eprintln!("{line}"))?;
            println!("wrote {} dataset entries to {}", manifest.entries.len(), out.display());
        }
        Command::Train { common, dataset, checkpoints } => {
            let config = common.load()?;
            let outcome = pipeline::train(&config, &dataset, &checkpoints, |row| {
                eprintln!(
                    "step {:>7}  train {:.6e}  valid acc {:.6e}  valid mse_p {:.6e}",
                    row.step, row.train_loss, row.valid_acc_mse, row.valid_mse_p
                )
            })?;
            if let Some(step) = outcome.resumed_from {
                eprintln!("resumed from step {step}");
            }
            println!("checkpoints in {}", checkpoints.display());
        }
        Command::Rollout { common, checkpoint, trajectory, out } => {
            let config = common.load()?;
            match pipeline::rollout_file(&config, &checkpoint, &trajectory, &out)? {
                Some(step) => eprintln!("rollout diverged at step {step}; frames up to it were written"),
                None => println!("wrote {}", out.display()),
            }
        }
        Command::Evaluate { common, checkpoint, dataset, report } => {
            let config = common.load()?;
            let outcome = pipeline::evaluate(&config, &checkpoint, &dataset, &report)?;
            for (name, step) in outcome.divergences() {
                eprintln!("{name}: rollout diverged at step {step}; partial metrics kept");
            }
            let s = outcome.summary;
            println!("mse_p {:.6e}  mse_ekin {:.6e}  sinkhorn_mean {:.6e}", s.mse_p, s.mse_ekin, s.sinkhorn_mean);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

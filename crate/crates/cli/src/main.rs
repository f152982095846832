use anyhow::Result;
use clap::{Parser, Subcommand};
use qmask_cli::config::Config;
use qmask_cli::train::TrainOptions;
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "qmask", about = "MPS classifier experiments with information-theoretic analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a classifier and record per-sweep traces.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Run directory for all artifacts.
        #[arg(long)]
        out: PathBuf,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the sweep count.
        #[arg(long)]
        sweeps: Option<usize>,
        /// Override the maximal bond dimension.
        #[arg(long)]
        chi: Option<usize>,
        /// Continue from the last completed sweep of an interrupted run.
        #[arg(long)]
        resume: bool,
    },
    /// Transfer-entropy and O-information analysis of a completed run.
    Analyze {
        /// Run directory produced by `train`.
        #[arg(long)]
        out: PathBuf,
        /// Override the maximal TE delay.
        #[arg(long)]
        tau_max: Option<usize>,
        /// Override the neighbor count of the estimators.
        #[arg(long)]
        k: Option<usize>,
    },
    /// Render the SVG plots of a run (requires `analyze` first).
    Plot {
        #[arg(long)]
        out: PathBuf,
    },
    /// z-score table between the TE analyses of two runs.
    Compare {
        run_a: PathBuf,
        run_b: PathBuf,
        /// Also write the table to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Train {
            config,
            out,
            seed,
            sweeps,
            chi,
            resume,
        } => {
            let mut cfg = Config::load(&config)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            if let Some(sweeps) = sweeps {
                cfg.sweeps = sweeps;
            }
            if let Some(chi) = chi {
                cfg.chi = chi;
            }
            qmask_cli::cmd_train(&cfg, &out, &TrainOptions { resume, stop_after: None })
        }
        Command::Analyze { out, tau_max, k } => qmask_cli::cmd_analyze(&out, tau_max, k),
        Command::Plot { out } => qmask_cli::cmd_plot(&out),
        Command::Compare { run_a, run_b, out } => {
            let table = qmask_cli::cmd_compare(&run_a, &run_b, out.as_deref())?;
            print!("{table}");
            Ok(())
        }
    }
}

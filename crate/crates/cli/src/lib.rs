//! Command-line front end: experiment config, subcommands and plots.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;
pub mod svg;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};

use commands::{ClassifyArgs, Method, RunContext, SampleArgs, SweepArgs, TrainArgs};

#[derive(Debug, Parser)]
#[command(name = "symmflow", version, about = "Symmetrical flow matching on toy datasets")]
pub struct Cli {
    /// Experiment config (TOML). Defaults to OUT/config.toml if present.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory for all inputs and outputs of the run.
    #[arg(long, global = true, default_value = "runs/default")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the dataset and write train.csv, test.csv and config.toml.
    GenData,
    /// Train the velocity field on train.csv.
    Train {
        /// `symmetric` or `conditional-baseline`.
        #[arg(long)]
        objective: Option<String>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Continue from the existing checkpoint.
        #[arg(long)]
        resume: bool,
    },
    /// Generate points of one class by integrating forward.
    Sample {
        #[arg(long)]
        class: usize,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        steps: Option<usize>,
        /// Also write a scatter plot against the test points.
        #[arg(long)]
        svg: bool,
    },
    /// Classify the points of a CSV file.
    Classify {
        /// Defaults to OUT/test.csv.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "ode")]
        method: Method,
        #[arg(long)]
        steps: Option<usize>,
        /// Reverse trajectories averaged per point.
        #[arg(long)]
        k: Option<usize>,
        /// Monte Carlo draws per class for the Bayes method.
        #[arg(long)]
        n_mc: Option<usize>,
    },
    /// Test accuracy for a list of step counts.
    Sweep {
        /// Comma-separated, e.g. "1,2,5,10,20,50".
        #[arg(long)]
        steps: Option<String>,
        #[arg(long)]
        svg: bool,
    },
    /// Compare analytic and finite-difference gradients.
    Gradcheck {
        #[arg(long, hide = true)]
        corrupt: Option<f64>,
    },
}

pub fn run(cli: Cli) -> Result<()> {
    let ctx = RunContext::resolve(cli.config.as_deref(), cli.seed, &cli.out)?;
    match cli.command {
        Command::GenData => commands::gen_data(&ctx),
        Command::Train { objective, epochs, resume } => {
            commands::train_cmd(&ctx, &TrainArgs { objective, epochs, resume })
        }
        Command::Sample { class, n, steps, svg } => {
            commands::sample_cmd(&ctx, &SampleArgs { class, n, steps, svg })
        }
        Command::Classify { input, method, steps, k, n_mc } => {
            commands::classify_cmd(&ctx, &ClassifyArgs { input, method, steps, k, n_mc })
        }
        Command::Sweep { steps, svg } => commands::sweep_cmd(&ctx, &SweepArgs { steps, svg }).map(|_| ()),
        Command::Gradcheck { corrupt } => commands::gradcheck_cmd(&ctx, corrupt),
    }
}

//! Experiment runner: train a model on synthetic open-set data, evaluate a
//! snapshot on verification trials, verify analytic gradients against finite
//! differences, or measure comparison-count scaling.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Exit code for malformed configs, missing files and unknown names.
const EXIT_USAGE: u8 = 2;
/// Exit code for training divergence.
const EXIT_DIVERGED: u8 = 3;

#[derive(Parser)]
#[command(
    name = "proxyforge",
    version,
    about = "Masked-proxy metric-learning experiment runner"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model from a config file; writes metrics.csv, model.json and
    /// summary.json.
    Train {
        /// Flat JSON experiment config.
        #[arg(long)]
        config: PathBuf,
        /// Output directory (default: the config's out_dir, or ".").
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score verification trials with a saved model; writes scores.csv and
    /// det.csv and prints the EER.
    Eval {
        /// Model snapshot written by `train`.
        #[arg(long)]
        model: PathBuf,
        /// Flat JSON experiment config describing the trial set.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads for trial scoring (deterministic reduction).
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Check analytic gradients against central finite differences.
    Gradcheck {
        /// Loss name, or "all".
        #[arg(long, default_value = "all")]
        loss: String,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Random configurations per loss.
        #[arg(long, default_value_t = 20)]
        trials: usize,
    },
    /// Run comparison-count scaling sweeps; writes scaling.csv.
    Complexity {
        /// JSON grid config.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("PROXYFORGE_LOG", "warn"))
        .init();
    let cli = Cli::parse();
    match cli.command {
        Command::Train { config, out, seed } => commands::train(&config, out.as_deref(), seed),
        Command::Eval {
            model,
            config,
            out,
            seed,
            workers,
        } => commands::eval(&model, &config, out.as_deref(), seed, workers),
        Command::Gradcheck { loss, seed, trials } => commands::gradcheck(&loss, seed, trials),
        Command::Complexity { config, out } => commands::complexity(&config, out.as_deref()),
    }
}

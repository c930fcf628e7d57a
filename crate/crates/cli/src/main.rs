//! `prefir`: dataset generation, network training, tap optimization and
//! evaluation, each step reading and writing one run directory.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{ArgAction, Parser, Subcommand};

use crate::commands::Session;
use crate::config::{resolve_out_dir, ExperimentConfig};
use crate::manifest::RunDir;

#[derive(Parser)]
#[command(name = "prefir", version, about = "Receiver-side FIR taps that steer a frozen device classifier")]
struct Cli {
    /// Experiment config (JSON). Built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Run directory; overrides PREFIR_OUT and the config's output_dir.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Replace the config's master seed.
    #[arg(long, global = true)]
    seed_override: Option<u64>,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the effective config and its hash.
    ShowConfig,
    /// Generate training, test and recording datasets.
    GenDataset,
    /// Train and freeze the classifier.
    TrainNet,
    /// Optimize taps per recording with nonlinear conjugate gradient.
    OptimizeNcg {
        #[arg(long)]
        device: Option<usize>,
    },
    /// Train one filter layer per class against the frozen network.
    TrainFirLayers {
        #[arg(long)]
        class: Option<usize>,
    },
    /// Score recordings with and without taps.
    Evaluate {
        #[arg(long)]
        device: Option<usize>,
    },
    /// Replay each victim's taps on other devices' recordings.
    Adversary {
        /// Victim device.
        #[arg(long)]
        device: Option<usize>,
    },
    /// Packet error rate after compensation across filter strengths.
    CompensateSweep,
    /// Summarize all reports in the run directory.
    Report,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    if let Some(j) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build_global()
            .context("configuring the thread pool")?;
    }

    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed_override {
        cfg.seed = s;
    }
    cfg.validate()?;
    let hash = cfg.hash();

    if let Command::ShowConfig = cli.command {
        println!("{}", serde_json::to_string_pretty(&cfg)?);
        eprintln!("config hash {hash}");
        return Ok(());
    }

    let out = resolve_out_dir(cli.out, &cfg)?;
    let run = RunDir::open(out, hash)?;
    let mut s = Session { cfg: &cfg, run };
    match cli.command {
        Command::ShowConfig => unreachable!(),
        Command::GenDataset => commands::gen_dataset(&mut s),
        Command::TrainNet => commands::train_net(&mut s),
        Command::OptimizeNcg { device } => commands::optimize_ncg(&mut s, device),
        Command::TrainFirLayers { class } => commands::train_fir_layers(&mut s, class),
        Command::Evaluate { device } => commands::evaluate(&mut s, device),
        Command::Adversary { device } => commands::adversary(&mut s, device),
        Command::CompensateSweep => commands::compensate_sweep(&mut s),
        Command::Report => commands::report(&mut s),
    }
}

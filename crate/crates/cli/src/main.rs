//! `stbayes`: ingest connection records, cluster, fit, predict, score and
//! simulate from one TOML configuration.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use stbayes::model::ModelKind;

use config::{Overrides, RunConfig};
use error::CliError;

#[derive(Parser, Debug)]
#[command(name = "stbayes", version, about = "Spatio-temporal Bayesian workload forecasting")]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed for clustering, sampling, prediction and simulation.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    model: Option<ModelKind>,
    #[arg(long, global = true)]
    chains: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, env = "STBAYES_OUT_DIR")]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    records: Option<PathBuf>,
    #[arg(long, global = true)]
    panel: Option<PathBuf>,
    #[arg(long, global = true)]
    predictions: Option<PathBuf>,
    #[arg(long, global = true)]
    observed: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Records to a workload panel (clusters with the configured K).
    Ingest,
    /// Elbow curve and the clustering at the configured K.
    Cluster,
    /// Run the sampler on the training sites of the panel.
    Fit,
    /// Krige held-out or target sites and forecast the fitted sites.
    Predict,
    /// Score predictions against observed cells.
    Score,
    /// Offloading experiment with equal and weighted allocation.
    Simulate,
    /// Synthetic records through every stage.
    Demo,
}

fn run(cli: Cli) -> Result<Vec<PathBuf>, CliError> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    cfg.apply(Overrides {
        seed: cli.seed,
        model: cli.model,
        chains: cli.chains,
        out: cli.out,
        records: cli.records,
        panel: cli.panel,
        predictions: cli.predictions,
        observed: cli.observed,
    });
    cfg.validate()?;
    match cli.command {
        Command::Ingest => commands::ingest_cmd(&cfg),
        Command::Cluster => commands::cluster_cmd(&cfg),
        Command::Fit => commands::fit_cmd(&cfg),
        Command::Predict => commands::predict_cmd(&cfg),
        Command::Score => commands::score_cmd(&cfg),
        Command::Simulate => commands::simulate_cmd(&cfg),
        Command::Demo => commands::demo_cmd(&cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

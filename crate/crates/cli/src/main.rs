mod commands;
mod config;

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use gbmcal_core::calibration::CalibrationMode;
use gbmcal_core::workflow::Preset;

use config::RunConfig;

/// Simulate and calibrate a 1-D go-or-grow glioblastoma model.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the model once and write the final profile and trajectory.
    Simulate,
    /// Choose measurement points and build the synthetic dataset.
    Design,
    /// Sample the posterior of the chosen mode.
    Calibrate,
    /// Summaries, error table, curves and corner data from a chain.
    Analyze,
    /// Posterior predictive band from a chain.
    Predict,
}

#[derive(Args)]
struct Common {
    /// Flat TOML run configuration; flags override its keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_parser = parse_mode)]
    mode: Option<CalibrationMode>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_parser = parse_preset)]
    preset: Option<Preset>,
    /// Worker threads; defaults to the available cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    #[arg(long, global = true)]
    initial: Option<PathBuf>,
    #[arg(long, global = true)]
    synthetic: Option<PathBuf>,
    #[arg(long, global = true)]
    chain: Option<PathBuf>,
    #[arg(long, global = true)]
    n_nodes: Option<usize>,
    #[arg(long, global = true)]
    walkers: Option<usize>,
    #[arg(long, global = true)]
    steps: Option<usize>,
    /// Extend the chain file in the output directory.
    #[arg(long, global = true)]
    resume: bool,
}

fn parse_mode(s: &str) -> Result<CalibrationMode, String> {
    s.parse().map_err(|e: gbmcal_core::Error| e.to_string())
}

fn parse_preset(s: &str) -> Result<Preset, String> {
    s.parse().map_err(|e: gbmcal_core::Error| e.to_string())
}

impl Common {
    fn to_config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        cfg.overlay(&RunConfig {
            mode: self.mode,
            seed: self.seed,
            preset: self.preset,
            out: self.out.clone(),
            data: self.data.clone(),
            initial: self.initial.clone(),
            synthetic: self.synthetic.clone(),
            chain: self.chain.clone(),
            n_nodes: self.n_nodes,
            walkers: self.walkers,
            steps: self.steps,
            resume: self.resume.then_some(true),
            ..Default::default()
        });
        let cfg = cfg.resolved();
        cfg.validate()?;
        Ok(cfg)
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    let cfg = cli.common.to_config()?;
    match cli.command {
        Command::Simulate => commands::simulate(&cfg),
        Command::Design => commands::design(&cfg),
        Command::Calibrate => commands::calibrate_cmd(&cfg),
        Command::Analyze => commands::analyze_cmd(&cfg),
        Command::Predict => commands::predict(&cfg),
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::Parser;
use pricing::{Pipeline, Preset, RunConfig, Stage};

/// Frequency-severity pricing pipeline.
#[derive(Parser, Debug)]
#[command(version, about)]
struct Cli {
    /// Stage to run (same as --stage).
    #[arg(value_enum, conflicts_with = "stage")]
    command: Option<Stage>,
    /// TOML run configuration; a synthetic desk run when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    stage: Option<Stage>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the configured preset.
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// Overrides the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::synthetic(Preset::Desk, 6000, PathBuf::from("pricing-run")),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(p) = cli.preset {
        cfg.preset = p;
    }
    if let Some(o) = cli.out {
        cfg.out = o;
    }
    let stage = cli.command.or(cli.stage).unwrap_or(Stage::All);
    Pipeline::new(cfg)?.run(stage)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

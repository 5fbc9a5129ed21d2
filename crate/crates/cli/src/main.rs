mod commands;
mod stamp;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand, ValueEnum};
use gaitclone::config::{ExperimentConfig, Preset};

#[derive(Parser)]
#[command(
    name = "gaitclone",
    version,
    about = "Clone a prosthesis PD controller into a fixed-point DeltaGRU"
)]
struct Cli {
    /// TOML experiment config; missing keys take the preset's values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the artifact directory.
    #[arg(long, global = true)]
    workdir: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = PresetArg::Desk)]
    preset: PresetArg,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Desk,
    Paper,
}

#[derive(Subcommand)]
enum Command {
    /// Run the closed loop and write run logs, metrics and an RMSE table.
    Simulate(commands::SimulateArgs),
    /// Record PD walks into a train/val/test dataset.
    Collect,
    /// Pretrain a GRU, retrain it as a DeltaGRU, write both models and the loss curve.
    Train,
    /// Convert the trained DeltaGRU to the fixed-point model file.
    Quantize(commands::ThresholdArgs),
    /// Compare engine, float and PD torques on the test walk.
    EvalOffline,
    /// Report operation counts, estimated cycles and wall-clock per step.
    Bench(commands::BenchArgs),
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let preset = match cli.preset {
        PresetArg::Desk => Preset::Desk,
        PresetArg::Paper => Preset::Paper,
    };
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p, preset)?,
        None => ExperimentConfig::preset(preset),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(w) = &cli.workdir {
        cfg.paths.workdir = w.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let cfg = load_config(&cli)?;
    match &cli.command {
        Command::Simulate(a) => commands::simulate(&cfg, a),
        Command::Collect => commands::collect(&cfg),
        Command::Train => commands::train(&cfg),
        Command::Quantize(a) => commands::quantize(&cfg, a),
        Command::EvalOffline => commands::eval_offline(&cfg),
        Command::Bench(a) => commands::bench(&cfg, a),
    }
}

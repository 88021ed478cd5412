//! `ttstack` command line: corpus generation, base-learner training, logit
//! extraction, meta-learner fitting and evaluation, all driven by one
//! config file.

pub mod commands;
pub mod config;
pub mod layout;
pub mod manifest;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use ttstack_core::meta::LogRegOptions;
use ttstack_core::synth::SyntheticSpec;
use ttstack_core::{Error, ErrorKind, Result};

pub use commands::Split;
pub use config::RunConfig;
pub use manifest::RunManifest;

#[derive(Debug, Parser)]
#[command(name = "ttstack", version, about = "Two-tier transformer stacking ensemble")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Run configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides `output_dir`).
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    /// Root seed (overrides `seed`).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a two-class synthetic PGM corpus.
    GenSynthetic {
        #[arg(long, default_value_t = 620)]
        negatives: usize,
        #[arg(long, default_value_t = 125)]
        positives: usize,
        #[arg(long, default_value_t = 32)]
        size: usize,
    },
    /// Train every configured base learner.
    TrainBase,
    /// Write logit CSVs from trained checkpoints.
    ExtractLogits {
        #[arg(long, value_enum, default_value_t = Split::All)]
        split: Split,
    },
    /// Fit the meta-learner from logit CSVs.
    TrainMeta,
    /// Reports and comparison table from logit CSVs and the meta model.
    Evaluate,
    /// train-base, extract-logits, train-meta and evaluate in one go.
    RunAll,
}

pub fn exit_code(kind: ErrorKind) -> i32 {
    match kind {
        ErrorKind::Config => 2,
        ErrorKind::Data => 3,
        ErrorKind::Numerical => 4,
    }
}

fn load_config(common: &CommonArgs) -> Result<Option<RunConfig>> {
    let Some(path) = &common.config else { return Ok(None) };
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = common.seed {
        cfg.reseed(seed);
    }
    if let Some(out) = &common.output {
        cfg.output_dir = out.clone();
    }
    Ok(Some(cfg))
}

fn require_config(cfg: Option<RunConfig>, verb: &str) -> Result<RunConfig> {
    cfg.ok_or_else(|| Error::Config(format!("`{verb}` needs --config")))
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli.common)?;
    match cli.command {
        Command::GenSynthetic { negatives, positives, size } => {
            let out = cli
                .common
                .output
                .clone()
                .or_else(|| cfg.as_ref().map(|c| c.corpus.clone()))
                .ok_or_else(|| Error::Config("`gen-synthetic` needs --output or a config with `corpus`".into()))?;
            let seed = cli.common.seed.or(cfg.as_ref().map(|c| c.seed)).unwrap_or(42);
            let spec = SyntheticSpec { negatives, positives, size, seed, ..SyntheticSpec::default() };
            commands::gen_synthetic(&out, &spec)?;
        }
        Command::TrainBase => {
            commands::train_base(&require_config(cfg, "train-base")?)?;
        }
        Command::ExtractLogits { split } => {
            commands::extract_logits(&require_config(cfg, "extract-logits")?, split)?;
        }
        Command::TrainMeta | Command::Evaluate => {
            let out = cfg
                .as_ref()
                .map(|c| c.output_dir.clone())
                .or(cli.common.output.clone())
                .ok_or_else(|| Error::Config("needs --config or --output".into()))?;
            if matches!(cli.command, Command::TrainMeta) {
                let order = cfg.as_ref().map(RunConfig::learner_ids);
                let opts = cfg.as_ref().map(|c| c.meta.clone()).unwrap_or_else(LogRegOptions::default);
                commands::train_meta_cmd(&out, order.as_deref(), &opts)?;
            } else {
                commands::evaluate_cmd(&out)?;
            }
        }
        Command::RunAll => {
            commands::run_all(&require_config(cfg, "run-all")?)?;
        }
    }
    Ok(())
}

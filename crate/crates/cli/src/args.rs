use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::Overrides;

/// Environment variable naming the parent of per-command output
/// directories when `--out` is absent.
pub const OUT_ENV: &str = "CIZSL_OUT_DIR";
pub const DEFAULT_OUT_ROOT: &str = "cizsl-out";

#[derive(Debug, Parser)]
#[command(
    name = "cizsl",
    version,
    about = "Generative zero-shot learning with creativity objectives"
)]
pub struct Cli {
    /// Output directory [default: $CIZSL_OUT_DIR/<command> or ./cizsl-out/<command>]
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset
    Synth(SynthArgs),
    /// Train a model and write its checkpoint and history
    Train(TrainArgs),
    /// Evaluate a checkpoint: Top-1, seen-unseen curve, harmonic mean, retrieval
    Eval(EvalArgs),
    /// Train every (seed, lambda) cell on a validation split and report winners
    Sweep(SweepArgs),
    /// Train and evaluate each row of a named ablation suite
    Ablate(AblateArgs),
    /// Retrieval precision of unseen test images around generated centers
    Retrieve(RetrieveArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth(_) => "synth",
            Command::Train(_) => "train",
            Command::Eval(_) => "eval",
            Command::Sweep(_) => "sweep",
            Command::Ablate(_) => "ablate",
            Command::Retrieve(_) => "retrieve",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Split {
    Easy,
    Hard,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Metric {
    Euclidean,
    Cosine,
}

/// Unset fields keep the synthetic defaults.
#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub k_seen: Option<usize>,
    #[arg(long)]
    pub k_unseen: Option<usize>,
    #[arg(long)]
    pub visual_dim: Option<usize>,
    #[arg(long)]
    pub semantic_dim: Option<usize>,
    #[arg(long)]
    pub samples_per_class: Option<usize>,
    #[arg(long)]
    pub cluster_spread: Option<f64>,
    #[arg(long)]
    pub semantic_noise: Option<f64>,
    #[arg(long, value_enum)]
    pub split: Option<Split>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Store matrices as CSV instead of binary
    #[arg(long)]
    pub csv: bool,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// TOML file with TrainConfig keys
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one config key, e.g. `loss.entropy_term=false` (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Creativity weight; supersedes the config
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Outer iterations; supersedes the config
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl ConfigArgs {
    pub fn overrides(&self) -> Overrides {
        Overrides {
            set: self.set.clone(),
            lambda: self.lambda,
            steps: self.steps,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Select lambda and step on a seen-class split, then retrain on all seen classes
    #[arg(long)]
    pub cross_validate: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Generated features per class [default: from the checkpoint config]
    #[arg(long)]
    pub n_generate: Option<usize>,
    #[arg(long, value_enum)]
    pub metric: Option<Metric>,
    #[arg(long)]
    pub bias_points: Option<usize>,
    /// [default: the training seed]
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct RetrieveArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.25, 0.5, 1.0])]
    pub fractions: Vec<f64>,
    #[arg(long, default_value_t = 60)]
    pub n_generate: usize,
    /// [default: the training seed]
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// [default: the config's lambda_grid]
    #[arg(long, value_delimiter = ',')]
    pub lambda_grid: Option<Vec<f64>>,
    /// [default: the config seed]
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Worker threads; 0 picks one per core
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// One of cizsl-v1-ablation, hallucination-policies, segc, segc-rf,
    /// hallucinated-categorization, segc-normalization
    #[arg(long)]
    pub suite: String,
    /// [default: the config seed]
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Worker threads; 0 picks one per core
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
}

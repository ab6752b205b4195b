use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lagcl::Variant;

#[derive(Debug, Parser)]
#[command(name = "lagcl", version, about = "Long-tail augmented graph contrastive recommendation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load an interaction log, binarize it and split it.
    Prepare(PrepareArgs),
    /// Generate a synthetic long-tail dataset and split it.
    Synth(SynthArgs),
    /// Train a model and write a checkpoint.
    Train(TrainArgs),
    /// Recall@K / NDCG@K of a checkpoint.
    Evaluate(EvaluateArgs),
    /// Degree-group breakdown or embedding uniformity of a checkpoint.
    Analyze(AnalyzeArgs),
    /// Train and test ablation variants, optionally across degree thresholds.
    Ablate(AblateArgs),
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    pub min_rating: f64,
    #[arg(long, value_delimiter = ',', default_value = "0.7,0.1,0.2")]
    pub split: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 2000)]
    pub users: usize,
    #[arg(long, default_value_t = 1000)]
    pub items: usize,
    #[arg(long, default_value_t = 2.1)]
    pub exponent: f64,
    #[arg(long, default_value_t = 40_000)]
    pub edges: usize,
    /// Latent preference communities.
    #[arg(long)]
    pub blocks: Option<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0.7,0.1,0.2")]
    pub split: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Hyperparameter sources shared by `train` and `ablate`.
#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Flat `key = value` file; defaults apply to missing keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one key, e.g. `--set epochs=5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Target {
    Validation,
    Test,
}

impl From<Target> for lagcl::EvalTarget {
    fn from(t: Target) -> Self {
        match t {
            Target::Validation => lagcl::EvalTarget::Validation,
            Target::Test => lagcl::EvalTarget::Test,
        }
    }
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub k: usize,
    #[arg(long, value_enum, default_value_t = Target::Test)]
    pub target: Target,
    /// Also write the report and a run manifest here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    DegreeGroups,
    Uniformity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Side {
    Users,
    Items,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long, value_enum)]
    pub mode: Mode,
    #[arg(long, default_value_t = 20)]
    pub k: usize,
    #[arg(long, default_value_t = 10)]
    pub groups: usize,
    #[arg(long, value_enum, default_value_t = Target::Test)]
    pub target: Target,
    /// Embedding rows used by `uniformity`.
    #[arg(long, value_enum, default_value_t = Side::Users)]
    pub side: Side,
    #[arg(long, default_value_t = lagcl::trainer::UNIFORMITY_PAIRS)]
    pub pairs: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Comma-separated variants.
    #[arg(long, value_delimiter = ',', default_value = "full")]
    pub variant: Vec<Variant>,
    /// Degree thresholds to sweep, e.g. `5,10,20,40`.
    #[arg(long, value_delimiter = ',')]
    pub k_sweep: Option<Vec<usize>>,
    #[arg(long)]
    pub out: PathBuf,
}

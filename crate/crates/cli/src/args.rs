use std::path::PathBuf;

use ablate_core::corpus::{Split, SplitQuota};
use clap::{Args, Parser, Subcommand};

use crate::data::Condition;

#[derive(Debug, Parser)]
#[command(name = "ablate", version, about = "Leakage-aware ablation harness for apparent-personality regression")]
pub struct Cli {
    /// `key = value` file supplying defaults for any flag.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Partition a clip list into UID-disjoint training/testing/validation splits.
    Split(SplitArgs),
    /// Build condition images (face, background, entire frame) from frames and landmarks.
    Preprocess(PreprocessArgs),
    /// Train the regressor for one condition.
    Train(TrainArgs),
    /// Write per-video predictions for one condition.
    Predict(PredictArgs),
    /// Correlate predictions with ground truth and compare conditions.
    Evaluate(EvaluateArgs),
    /// Pooled pixel standard deviation of a directory of equally sized images.
    Sigma(SigmaArgs),
    /// Compare two stored correlations.
    Compare(CompareArgs),
}

#[derive(Debug, Args, Default)]
pub struct LeakageArgs {
    /// Fail when splits share source videos (the default).
    #[arg(long, conflicts_with = "allow_leakage")]
    pub strict: bool,
    /// Report on leaky splits instead of failing; output is marked CONFOUNDED.
    #[arg(long)]
    pub allow_leakage: bool,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    /// Clip list, one file name per line.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Regex with named groups `uid` and `segment`.
    #[arg(long)]
    pub pattern: Option<String>,
    /// Source-video counts for training,testing,validation.
    #[arg(long)]
    pub quotas: Option<SplitQuota>,
    /// Existing split files to audit for source-video overlap.
    #[arg(long, num_args = 1..)]
    pub legacy_split: Vec<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub leakage: LeakageArgs,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    /// Directory of frames named `<clip_id>.<frame_index>.png`.
    #[arg(long)]
    pub frames: Option<PathBuf>,
    #[arg(long)]
    pub landmarks: Option<PathBuf>,
    /// Only build the images this condition needs (default: all).
    #[arg(long)]
    pub condition: Option<Condition>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct HyperArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub validate_every: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub condition: Option<Condition>,
    /// Ground-truth table `video_id,o,c,e,a,n`.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub hyper: HyperArgs,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub condition: Option<Condition>,
    /// Split to predict (default: testing).
    #[arg(long)]
    pub split: Option<Split>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Bonferroni divisor.
    #[arg(long)]
    pub num_models: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub leakage: LeakageArgs,
}

#[derive(Debug, Args)]
pub struct SigmaArgs {
    pub dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long, allow_negative_numbers = true)]
    pub rho1: f64,
    #[arg(long)]
    pub n1: usize,
    #[arg(long, allow_negative_numbers = true)]
    pub rho2: f64,
    #[arg(long)]
    pub n2: usize,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub num_models: Option<usize>,
}

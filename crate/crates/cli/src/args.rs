use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "keyloom", version, about = "Keyframe motion in-betweening")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert BVH files into .klm clips.
    Convert(ConvertArgs),
    /// Train a model from a JSON run configuration.
    Train(TrainArgs),
    /// Fill in a clip from its keyframes with a trained model.
    Interpolate(InterpolateArgs),
    /// Score a model and the LERP baseline on a dataset.
    Evaluate(EvaluateArgs),
    /// Run the built-in correctness checks.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    /// BVH files or directories containing them.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Output directory for the .klm clips.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Resample to this frame rate; it must divide the source rate.
    #[arg(long)]
    pub fps: Option<u32>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// JSON run configuration.
    #[arg(long, short)]
    pub config: PathBuf,
    /// Continue from a checkpoint; model and training settings come from it.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Total epochs (optimizer steps).
    #[arg(long)]
    pub epochs: Option<u64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub checkpoint_every: Option<u64>,
    /// Replaces the dataset list of the config.
    #[arg(long)]
    pub dataset: Vec<PathBuf>,
    /// Replaces the output directory of the config.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("keys").required(true).args(["every", "frames", "completion"])))]
pub struct InterpolateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Source clip (.klm or .bvh); its frames at the keyframe indices are kept.
    #[arg(long)]
    pub clip: PathBuf,
    /// Keyframe every N frames, plus the last frame.
    #[arg(long)]
    pub every: Option<usize>,
    /// Explicit keyframe indices, comma separated; must include 0 and N-1.
    #[arg(long, value_delimiter = ',')]
    pub frames: Option<Vec<usize>>,
    /// The first C frames plus the last frame.
    #[arg(long)]
    pub completion: Option<usize>,
    #[arg(long, short)]
    pub out: PathBuf,
    /// Also write the prediction as BVH.
    #[arg(long)]
    pub bvh: bool,
    /// Also write the synthesized token sequence as CSV.
    #[arg(long)]
    pub export_latents: bool,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("method").required(true).args(["checkpoint", "baseline_only"])))]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Evaluate LERP only; no checkpoint needed.
    #[arg(long)]
    pub baseline_only: bool,
    /// Clip files or directories.
    #[arg(long, required = true)]
    pub dataset: Vec<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = [5usize, 15, 30])]
    pub intervals: Vec<usize>,
    /// Frames per evaluation window.
    #[arg(long, default_value_t = keyloom_core::eval::EVAL_WINDOW)]
    pub window: usize,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Also write the report to DIR/verify.json.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Corrupt one analytic gradient element; the gradient check must fail.
    #[arg(long, hide = true)]
    pub perturb_gradient: bool,
}

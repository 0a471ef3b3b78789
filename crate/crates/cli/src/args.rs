use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use madnet::model::AblationRow;
use madnet::DType;

#[derive(Parser, Debug, Clone)]
#[command(name = "madnet", version, about = "Multi-scale dual-domain image denoising")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every subcommand.
#[derive(Args, Debug, Clone, Default)]
pub struct GlobalArgs {
    /// Seed for initialization, sampling and synthesized noise.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Key = value file; flags given on the command line take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Element type of the model (f32 or f64).
    #[arg(long, global = true)]
    pub dtype: Option<DType>,
    /// Worker threads for the data-parallel kernels.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
}

#[derive(Subcommand, Debug, Clone)]
pub enum Command {
    /// Train a model and write checkpoints plus a CSV log.
    Train(TrainArgs),
    /// Denoise one image with a trained checkpoint.
    Denoise(DenoiseArgs),
    /// Mean PSNR/SSIM over a directory of clean images at fixed noise levels.
    Eval(EvalArgs),
    /// Compare a clean and a noisy image across pyramid scales.
    AnalyzeScales(AnalyzeArgs),
    /// Swap the low-frequency bands of a clean and a degraded image.
    FreqSwap(FreqSwapArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Blind AWGN training on clean images, step-halved learning rate.
    SyntheticDesk,
    /// Paired noisy/clean training, cosine learning rate.
    RealDesk,
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::SyntheticDesk => "synthetic-desk",
            Preset::RealDesk => "real-desk",
        })
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        <Preset as ValueEnum>::from_str(s, false)
    }
}

#[derive(Args, Debug, Clone, Default)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Clean images (synthetic) or noisy images (real).
    #[arg(long, value_name = "DIR")]
    pub data: Option<PathBuf>,
    /// Ground-truth images matched by file name (real preset).
    #[arg(long, value_name = "DIR")]
    pub gt: Option<PathBuf>,
    /// Output directory for checkpoints, log and resolved config.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Total iterations, counted from zero even when resuming.
    #[arg(long)]
    pub iters: Option<u64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub patch: Option<usize>,
    /// Base learning rate of the preset schedule.
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub sigma_low: Option<f64>,
    #[arg(long)]
    pub sigma_high: Option<f64>,
    /// Checkpoint period in iterations; 0 writes only the final one.
    #[arg(long, value_name = "K")]
    pub checkpoint_every: Option<u64>,
    /// Log every n-th iteration.
    #[arg(long, value_name = "N")]
    pub report_every: Option<u64>,
    /// Ablation row, e.g. no_afeb, no_gffb, full.
    #[arg(long, value_name = "ROW")]
    pub ablation: Option<AblationRow>,
    /// Global gradient-norm bound.
    #[arg(long)]
    pub clip: Option<f64>,
    /// Continue from a checkpoint written by an earlier run.
    #[arg(long, value_name = "FILE")]
    pub resume: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct DenoiseArgs {
    #[arg(long, value_name = "FILE")]
    pub checkpoint: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub input: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub output: PathBuf,
    /// Clean image; PSNR and SSIM of the output are printed against it.
    #[arg(long, value_name = "FILE")]
    pub reference: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct EvalArgs {
    #[arg(long, value_name = "FILE")]
    pub checkpoint: PathBuf,
    /// Directory of clean images.
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    /// Noise levels on the 0–255 scale.
    #[arg(long, value_delimiter = ',')]
    pub sigmas: Option<Vec<f64>>,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct AnalyzeArgs {
    #[arg(long, value_name = "FILE")]
    pub image: PathBuf,
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Pyramid levels, finest included.
    #[arg(long)]
    pub levels: Option<usize>,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct FreqSwapArgs {
    #[arg(long, value_name = "FILE")]
    pub clean: PathBuf,
    /// Degraded image; AWGN at --sigma is synthesized when absent.
    #[arg(long, value_name = "FILE")]
    pub degraded: Option<PathBuf>,
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Swap rectangle half-extent as a fraction of the half image extent.
    #[arg(long)]
    pub ratio: Option<f64>,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

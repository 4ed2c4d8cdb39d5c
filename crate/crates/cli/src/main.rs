//! `derf`: synthesize scenes, train, render, evaluate, plot MGS curves and
//! import LLFF data.

mod commands;
mod provenance;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use derf_core::Error;

#[derive(Debug, Parser)]
#[command(name = "derf", version, about = "Deblurred radiance fields from a few blurry views")]
pub struct Cli {
    /// TOML training config (fields of TrainConfig); flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed; falls back to SPARSEDERF_SEED, then the config value.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads for rendering and gradients (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic blurred scene.
    Synth(SynthArgs),
    /// Train a model on a scene.
    Train(TrainArgs),
    /// Render clean color and depth images from a checkpoint.
    Render(RenderArgs),
    /// Score clean renders of a split; also writes the kernel report when
    /// `blur_truth.json` sits next to the scene.
    Eval(EvalArgs),
    /// Write MGS gradient-factor curves as CSV and PNG.
    PlotMgs(PlotMgsArgs),
    /// Convert an LLFF `poses_bounds.npy` directory into `scene.json`.
    ImportLlff(ImportLlffArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// JSON or TOML scene spec; defaults to the built-in sphere scene.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub views: Option<usize>,
    /// Square image size in pixels.
    #[arg(long)]
    pub size: Option<usize>,
    /// End-of-exposure rotation (radians).
    #[arg(long)]
    pub blur_rotation: Option<f64>,
    /// End-of-exposure translation.
    #[arg(long)]
    pub blur_translation: Option<f64>,
    /// Held-out unseen poses to emit.
    #[arg(long)]
    pub heldout: Option<usize>,
    /// Declare the sharp images as pre-deblurred inputs.
    #[arg(long)]
    pub predeblurred: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KernelArg {
    None,
    Dsk,
    Rbk,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Scene manifest (`scene.json`).
    #[arg(long)]
    pub scene: PathBuf,
    /// Base recipe: tiny, synthetic, full-2, full-4 or full-6.
    #[arg(long, default_value = "synthetic")]
    pub preset: String,
    #[arg(long, value_enum)]
    pub kernel: Option<KernelArg>,
    #[arg(long, overrides_with = "no_ss")]
    pub ss: bool,
    #[arg(long)]
    pub no_ss: bool,
    #[arg(long, overrides_with = "no_mgs")]
    pub mgs: bool,
    #[arg(long)]
    pub no_mgs: bool,
    #[arg(long, overrides_with = "no_pd")]
    pub pd: bool,
    #[arg(long)]
    pub no_pd: bool,
    #[arg(long)]
    pub iterations: Option<u64>,
    /// Keep only the 2-, 4- or 6-view training set of the scene's preset.
    #[arg(long)]
    pub sparse_views: Option<usize>,
    /// Held-out unseen views kept by the sparse protocol.
    #[arg(long, default_value_t = 0)]
    pub heldout: usize,
    /// Resume from a checkpoint; its config wins over presets and flags.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub scene: PathBuf,
    /// View ids to render (default: every view with a pose).
    #[arg(long, value_delimiter = ',')]
    pub views: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
}

#[derive(Debug, Args)]
pub struct PlotMgsArgs {
    /// ρ values, paired with `--eta` by position.
    #[arg(long, value_delimiter = ',', required = true)]
    pub rho: Vec<f64>,
    #[arg(long, value_delimiter = ',', required = true)]
    pub eta: Vec<f64>,
    /// Also emit the naive δ² curve.
    #[arg(long)]
    pub naive: bool,
}

#[derive(Debug, Args)]
pub struct ImportLlffArgs {
    /// Directory with `poses_bounds.npy` and `images/`.
    #[arg(long)]
    pub dir: PathBuf,
    /// Every `hold`-th view becomes a test view.
    #[arg(long, default_value_t = 8)]
    pub hold: usize,
}

/// Exit status for an error: 1 usage/config, 2 data, 3 numeric.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) => 1,
        Error::Io { .. } | Error::Manifest(_) | Error::Geometry(_) | Error::DegenerateGeometry(_) => 2,
        Error::Domain { .. } | Error::Numeric { .. } | Error::Invariant(_) | Error::Diverged { .. } => 3,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

mod commands;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(
    name = "microcount",
    version,
    about = "Synthetic microorganism data, counting backbones, training and evaluation"
)]
pub struct Cli {
    /// Seed threaded through generation, splitting, initialization and
    /// shuffling; overrides any seed in a config file (default 0).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Base directory for relative input paths.
    #[arg(long, global = true, env = "MICROCOUNT_DATA_ROOT", default_value = ".")]
    pub data_root: PathBuf,
    /// Directory receiving run directories.
    #[arg(long, global = true, default_value = "runs")]
    pub out: PathBuf,
    /// Run directory name; defaults to `<command>-<unix time>`.
    #[arg(long, global = true)]
    pub run_name: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Render a synthetic fluorescent bacteria dataset.
    Generate(GenerateArgs),
    /// Convert a public dataset layout into a manifest.
    Adapt(AdaptArgs),
    /// Count and pixel statistics of a manifest.
    Stats(StatsArgs),
    /// Train a backbone on a manifest.
    Train(TrainArgs),
    /// Score a checkpoint on a manifest.
    Eval(EvalArgs),
    /// Parameter and FLOPs table over presets, optionally with evaluation.
    Bench(BenchArgs),
    /// Parameter count and FLOPs of one preset.
    Flops(FlopsArgs),
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    /// Dataset spec as JSON.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Number of images (default 10).
    #[arg(long)]
    pub n_images: Option<usize>,
    /// Image width in pixels (default 3280).
    #[arg(long)]
    pub width: Option<usize>,
    /// Image height in pixels (default 2464).
    #[arg(long)]
    pub height: Option<usize>,
    /// Smallest count drawn per image (default 0).
    #[arg(long)]
    pub min_count: Option<u64>,
    /// Largest count drawn per image (default 1855).
    #[arg(long)]
    pub max_count: Option<u64>,
    /// Print the resolved spec and exit without writing anything.
    #[arg(long)]
    pub dry_run: bool,
}

#[derive(Args, Debug)]
pub struct AdaptArgs {
    /// vgg, fnc, cancer or synthetic.
    pub layout: String,
    /// Source directory.
    pub source: PathBuf,
    /// Split every image into a ROWSxCOLS grid, e.g. 2x2.
    #[arg(long)]
    pub patch_grid: Option<String>,
    /// Add the six flip and rotation variants of every image.
    #[arg(long)]
    pub augment: bool,
    /// Watershed: minimum pixel distance between two instance centres (default 5).
    #[arg(long)]
    pub min_separation: Option<usize>,
    /// Watershed: minimum peak height above the saddle, in pixels (default 1.0).
    #[arg(long)]
    pub min_depth: Option<f64>,
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    /// Manifest file or the directory holding it.
    pub manifest: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Preset name, or toy-<family> for a small test model.
    #[arg(long)]
    pub preset: String,
    /// Training manifest file or directory.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Held-out manifest; otherwise a seeded split of --manifest.
    #[arg(long)]
    pub val_manifest: Option<PathBuf>,
    /// Share of --manifest held out for validation.
    #[arg(long, default_value_t = 0.2)]
    pub val_fraction: f64,
    /// Training config as JSON.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Input resolution override.
    #[arg(long)]
    pub input_size: Option<usize>,
    /// Epoch cap (config max_epochs).
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Mini-batch size; the family default when unset.
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Base learning rate (config base_lr).
    #[arg(long)]
    pub lr: Option<f64>,
    /// Warm-up length in updates (transformer families only).
    #[arg(long)]
    pub warmup_steps: Option<u64>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Checkpoint written by `train`.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Manifest file or directory to score.
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    /// Dataset label in the report; defaults to the manifest's directory name.
    #[arg(long)]
    pub dataset: Option<String>,
    /// Model label in the report; defaults to the checkpoint's file stem.
    #[arg(long)]
    pub model: Option<String>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Comma-separated preset names; all presets by default.
    #[arg(long, value_delimiter = ',')]
    pub presets: Vec<String>,
    /// Evaluate every preset on this manifest.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Input resolution for evaluation runs.
    #[arg(long)]
    pub input_size: Option<usize>,
    /// Train each preset for this many epochs before evaluating.
    #[arg(long, default_value_t = 0)]
    pub train_epochs: usize,
    #[arg(long, default_value_t = 8)]
    pub batch_size: usize,
}

#[derive(Args, Debug)]
pub struct FlopsArgs {
    /// Preset name, or toy-<family>.
    pub preset: String,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // Library errors already embed their cause in the message.
            let mut msg = e.to_string();
            for cause in e.chain().skip(1) {
                let c = cause.to_string();
                if !msg.contains(&c) {
                    msg = format!("{msg}: {c}");
                }
            }
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

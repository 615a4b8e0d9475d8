//! `evsr`: simulate events, build datasets, train, evaluate, infer and
//! check gradients.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod error;
mod kv;
mod manifest;
mod specs;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "EVSR_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "evsr",
    version,
    about = "Event-guided arbitrary-scale video super-resolution"
)]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize events for a directory of frames.
    Simulate(SimulateArgs),
    /// Render synthetic clips and their events from a scene list.
    Dataset(DatasetArgs),
    /// Train a model on a dataset directory.
    Train(TrainArgs),
    /// Score a checkpoint (or the bilinear baseline) on a dataset.
    Eval(EvalArgs),
    /// Super-resolve one frame of a clip.
    Infer(InferArgs),
    /// Finite-difference check of every differentiable op.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
struct SimArgs {
    #[arg(long, default_value_t = 0.15)]
    theta: f64,
    #[arg(long, default_value_t = 1.0 / 255.0)]
    noise_floor: f64,
    #[arg(long, default_value_t = 0)]
    refractory_us: u64,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Clip directory containing `frames/*.ppm` (and optionally `meta.txt`).
    video_dir: PathBuf,
    #[command(flatten)]
    sim: SimArgs,
    /// Output EVT1 file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DatasetArgs {
    /// Scene list, one clip per line.
    #[arg(long)]
    specs: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    sim: SimArgs,
    /// Seed for clips that do not set their own.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// `key=value` file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    crop: Option<usize>,
    #[arg(long)]
    s_min: Option<f64>,
    #[arg(long)]
    s_max: Option<f64>,
    #[arg(long)]
    key_frame: Option<usize>,
    #[arg(long)]
    checkpoint_every: Option<usize>,
    #[arg(long)]
    scales_per_step: Option<usize>,
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    channels: Option<usize>,
    #[arg(long)]
    segments: Option<usize>,
    /// `linear` or `nearest`.
    #[arg(long)]
    interpolation: Option<String>,
    /// `cnn` or `mlp`.
    #[arg(long)]
    decoder: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint; its directory's `model.cfg` is used unless `--config` is given.
    #[arg(long, required_unless_present = "baseline")]
    ckpt: Option<PathBuf>,
    /// Score bilinear upsampling of the key frame instead of a model.
    #[arg(long, conflicts_with = "ckpt")]
    baseline: bool,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated scales; empty for none.
    #[arg(long, default_value = "2,4")]
    scales: String,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Clip directory with frames and events.
    #[arg(long)]
    clip: PathBuf,
    #[arg(long)]
    scale: f64,
    /// Frame to reconstruct; defaults to the middle of the first window.
    #[arg(long)]
    time_index: Option<usize>,
    /// Output PPM.
    #[arg(long)]
    out: PathBuf,
    /// Also write the fused and temporal feature tensors here.
    #[arg(long)]
    dump_features: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    /// Restrict to these ops (repeatable).
    #[arg(long = "op")]
    ops: Vec<String>,
    /// Seeds per op, starting at 0.
    #[arg(long, default_value_t = 1)]
    seeds: u64,
}

fn init_threads() -> error::Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        error::CliError::Usage(format!(
            "{THREADS_ENV} must be a positive integer, got `{raw}`"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| error::CliError::Usage(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> error::Result<()> {
    init_threads()?;
    match cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Dataset(a) => commands::dataset(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Infer(a) => commands::infer(a),
        Command::Gradcheck(a) => commands::gradcheck(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

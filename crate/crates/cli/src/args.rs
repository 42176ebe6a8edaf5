use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

/// Mini-batch Riemannian SGD on SPD matrices: data generation, runs,
/// batch-size sweeps and model fits. Flags override values from `--config`.
#[derive(Debug, Parser)]
#[command(name = "rsgd", version)]
pub struct Cli {
    /// Seed for every random draw.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON file with default values for any flag.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic SPD matrix set.
    Gen(GenArgs),
    /// Region covariance descriptors of a binary PGM image.
    Descriptors(DescriptorArgs),
    /// One RSGD run, one CSV row per step.
    Run(RunArgs),
    /// Steps-to-threshold over schedules, thresholds, batch sizes and seeds.
    Sweep(SweepArgs),
    /// Fit a step-count model to a sweep CSV and locate the critical batch.
    Fit(FitArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Number of matrices [default: 256].
    #[arg(long = "n")]
    pub count: Option<usize>,
    /// Matrix dimension [default: 5].
    #[arg(long = "d")]
    pub dim: Option<usize>,
    /// Standard deviation of the tangent perturbations [default: 0.5].
    #[arg(long)]
    pub spread: Option<f64>,
    /// identity, scalar:<c> or diag:<a,b,...> [default: identity].
    #[arg(long)]
    pub center: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DescriptorArgs {
    /// Input image (P5, maxval 255).
    #[arg(long)]
    pub pgm: Option<PathBuf>,
    /// Cell edge in pixels [default: 4].
    #[arg(long)]
    pub grid: Option<usize>,
    /// Ridge added to every descriptor [default: 1e-6 × mean feature variance].
    #[arg(long)]
    pub reg: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Flags shared by `run` and `sweep`.
#[derive(Debug, Args)]
pub struct ScheduleArgs {
    /// Step size of the constant and staircase schedules [default: 5e-4].
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Staircase decay factor [default: 0.5].
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Staircase period: a step count or `epoch` (⌈N/b⌉) [default: epoch].
    #[arg(long = "T")]
    pub period: Option<String>,
    /// Maximum number of staircase decays [default: 10].
    #[arg(long = "n")]
    pub decays: Option<u32>,
    /// Comma-separated thresholds [default: 0.5,0.25].
    #[arg(long)]
    pub epsilons: Option<String>,
    /// `absolute` (f < ε) or `relative` (f − f* < ε (f(x₀) − f*)) [default: absolute].
    #[arg(long)]
    pub thresholds: Option<String>,
    /// Starting point: identity, scalar:<c> or diag:<a,b,...> [default: identity].
    #[arg(long)]
    pub init: Option<String>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Matrix-set file.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// constant, inverse-sqrt or staircase [default: constant].
    #[arg(long)]
    pub schedule: Option<String>,
    #[command(flatten)]
    pub schedule_args: ScheduleArgs,
    /// Batch size [default: 16].
    #[arg(long)]
    pub batch: Option<usize>,
    /// Number of optimizer steps [default: 1000].
    #[arg(long)]
    pub steps: Option<usize>,
    /// Evaluate the full gradient every this many steps [default: 1].
    #[arg(long)]
    pub eval_stride: Option<usize>,
    /// Stop as soon as every threshold has been reached.
    #[arg(long)]
    pub early_stop: bool,
    /// Output CSV [default: standard output].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Comma-separated schedules [default: constant].
    #[arg(long)]
    pub schedules: Option<String>,
    #[command(flatten)]
    pub schedule_args: ScheduleArgs,
    /// Batch sizes, e.g. `2^4..2^9` or `4,8,16` [default: 2^4..2^9].
    #[arg(long)]
    pub batches: Option<String>,
    /// Run seeds, e.g. `1..5` [default: five seeds starting at --seed].
    #[arg(long)]
    pub seeds: Option<String>,
    /// Step budget per run [default: 10000].
    #[arg(long)]
    pub steps: Option<usize>,
    /// Worker threads [default: all cores].
    #[arg(long)]
    pub threads: Option<usize>,
    /// Leave the wall_ms column empty so output is byte-reproducible.
    #[arg(long)]
    pub no_wall_time: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Sweep CSV produced by `rsgd sweep`.
    #[arg(long)]
    pub sweep: Option<PathBuf>,
    #[arg(long)]
    pub schedule: Option<String>,
    /// Threshold to fit; required when the CSV holds several.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Gradient variance estimate.
    #[arg(long)]
    pub sigma2: Option<f64>,
    /// Gradient norm bound.
    #[arg(long = "G", alias = "g")]
    pub g: Option<f64>,
    /// [default: 5e-4]
    #[arg(long)]
    pub alpha: Option<f64>,
    /// [default: 0.5]
    #[arg(long)]
    pub gamma: Option<f64>,
    /// [default: 10]
    #[arg(long = "n")]
    pub decays: Option<u32>,
    /// Search range for the critical batch, e.g. `2^4..2^9` [default: observed batch sizes].
    #[arg(long)]
    pub b_range: Option<String>,
    /// Also write the fit as CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

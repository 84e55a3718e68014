//! `hetero-hawkes`: simulate, fit and test Hawkes models with fluctuating backgrounds.
//!
//! Files store seconds; flags and console output use milliseconds and spikes/sec.
//! With `--config`, command-line flags take precedence over the config file. The seed
//! comes from `--seed`, then `HAWKES_HETERO_SEED`, then the config, then 0.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hetero_hawkes::io::SpikeFormat;

#[derive(Debug, Parser)]
#[command(
    name = "hetero-hawkes",
    version,
    about = "Hawkes processes with heterogeneous background"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a network by thinning and write a spike file.
    Simulate(SimulateArgs),
    /// Fit one source -> target impact.
    Fit(FitArgs),
    /// Jitter cross-correlogram with Monte-Carlo bands.
    Ccg(CcgArgs),
    /// Closed-form bias and variance curves for the linear-Cox pair.
    Theory(TheoryArgs),
    /// Replicated simulation study.
    Experiment(ExperimentArgs),
    /// Time-rescaling goodness-of-fit test of a fitted model.
    Gof(FitArgs),
    /// Pairwise fits and Wald-thresholded network edges.
    Network(NetworkArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Output directory; a manifest.json is always written.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, env = "HAWKES_HETERO_SEED")]
    pub seed: Option<u64>,
    /// JSON run config.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Spike file (JSON lines or CSV).
    pub data: PathBuf,
    #[arg(long, default_value = "auto")]
    pub format: SpikeFormat,
    /// Trial length in seconds when the file has no header.
    #[arg(long)]
    pub horizon: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Named scenario; overrides the config scenario.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Trial length in seconds.
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long, default_value = "jsonl")]
    pub format: SpikeFormat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Modified,
    Standard,
    Spline,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, value_enum, default_value = "modified")]
    pub method: Method,
    #[arg(long)]
    pub source: Option<String>,
    #[arg(long)]
    pub target: Option<String>,
    /// Square impact width (ms).
    #[arg(long, default_value_t = 30.0)]
    pub sigma_h: f64,
    /// Candidate smoothing widths (ms, comma separated).
    #[arg(long, value_delimiter = ',', conflicts_with = "sigma_w")]
    pub sigma_w_grid: Option<Vec<f64>>,
    /// Fixed smoothing width (ms).
    #[arg(long)]
    pub sigma_w: Option<f64>,
    /// Refine the selected width between grid points.
    #[arg(long)]
    pub refine: bool,
    /// Spline support (ms).
    #[arg(long, default_value_t = 50.0)]
    pub lag_window: f64,
    /// Number of equally spaced spline knots.
    #[arg(long, default_value_t = 9)]
    pub knots: usize,
    #[arg(long, default_value_t = 0.95)]
    pub confidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum JitterSide {
    Source,
    Target,
    Both,
}

#[derive(Debug, Args)]
pub struct CcgArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long)]
    pub source: String,
    #[arg(long)]
    pub target: String,
    /// Bin width (ms).
    #[arg(long)]
    pub bin: Option<f64>,
    /// Largest lag (ms).
    #[arg(long)]
    pub max_lag: Option<f64>,
    /// Jitter window (ms).
    #[arg(long)]
    pub jitter: Option<f64>,
    #[arg(long)]
    pub n_mc: Option<usize>,
    #[arg(long, value_enum)]
    pub jitter_target: Option<JitterSide>,
    #[arg(long)]
    pub confidence: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TheoryArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Bump rate (events/s).
    #[arg(long)]
    pub rho: Option<f64>,
    /// Bump width (ms).
    #[arg(long)]
    pub sigma_i: Option<f64>,
    #[arg(long)]
    pub alpha_i: Option<f64>,
    #[arg(long)]
    pub alpha_j: Option<f64>,
    /// Square impact width (ms).
    #[arg(long)]
    pub sigma_h: Option<f64>,
    #[arg(long)]
    pub alpha_ij: Option<f64>,
    /// Total observed time (s).
    #[arg(long, default_value_t = 1000.0)]
    pub horizon: f64,
    /// Grid range (ms) and size.
    #[arg(long, default_value_t = 5.0)]
    pub grid_lo: f64,
    #[arg(long, default_value_t = 500.0)]
    pub grid_hi: f64,
    #[arg(long, default_value_t = 25)]
    pub points: usize,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// sinusoid_bias, sigma_w_sweep, full_connection, multivariate6, pvalue_uniformity or roc.
    pub name: String,
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long, default_value_t = 1000)]
    pub n_mc: usize,
    /// Candidate smoothing widths (ms, comma separated).
    #[arg(long, value_delimiter = ',')]
    pub sigma_w_grid: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Basis {
    Square,
    Spline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Nuisance {
    None,
    Source,
    AllOthers,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CorrectionKind {
    None,
    Bonferroni,
}

#[derive(Debug, Args)]
pub struct NetworkArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, value_enum, default_value = "square")]
    pub basis: Basis,
    #[arg(long, default_value_t = 30.0)]
    pub sigma_h: f64,
    #[arg(long, default_value_t = 50.0)]
    pub lag_window: f64,
    #[arg(long, default_value_t = 9)]
    pub knots: usize,
    #[arg(long, value_delimiter = ',', conflicts_with = "sigma_w")]
    pub sigma_w_grid: Option<Vec<f64>>,
    #[arg(long)]
    pub sigma_w: Option<f64>,
    #[arg(long, value_enum, default_value = "source")]
    pub nuisance: Nuisance,
    #[arg(long, value_enum, default_value = "bonferroni")]
    pub correction: CorrectionKind,
    #[arg(long, default_value_t = 0.05)]
    pub level: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

//! Command-line arguments.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(
    name = "drift-ar",
    version,
    about = "AR estimation under an unknown dynamic drift"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Generate a synthetic series with a known background.
    Simulate(SimulateArgs),
    /// Fit at a fixed budget.
    Fit(FitArgs),
    /// Select the budget by maximizing a portmanteau p-value.
    Tune(TuneCmdArgs),
    /// Bootstrap confidence intervals for the AR coefficients.
    Bootstrap(BootstrapArgs),
    /// Replace missing values and gross outliers by the median.
    Preprocess(PreprocessArgs),
    /// Run a scaled-down simulation study.
    Experiment(ExperimentArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Fit(_) => "fit",
            Command::Tune(_) => "tune",
            Command::Bootstrap(_) => "bootstrap",
            Command::Preprocess(_) => "preprocess",
            Command::Experiment(_) => "experiment",
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DriftArg {
    None,
    Rw,
    Pwc,
    Pwl,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseArg {
    Gaussian,
    Uniform,
    Rademacher,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    /// AR order; must match the number of coefficients when given.
    #[arg(long = "p")]
    pub p: Option<usize>,
    /// AR coefficients, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 1.., required = true, allow_negative_numbers = true)]
    pub alpha: Vec<f64>,
    #[arg(long, value_enum, default_value = "pwc")]
    pub drift: DriftArg,
    /// Number of changes (pwc) or slope segments (pwl).
    #[arg(long, default_value_t = 1)]
    pub s: usize,
    /// Bound on one-step background changes.
    #[arg(long, default_value_t = 0.1)]
    pub delta0: f64,
    /// Innovation variance.
    #[arg(long, default_value_t = 0.1)]
    pub sigma0sq: f64,
    /// Number of observations.
    #[arg(long = "T")]
    pub t: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "gaussian")]
    pub noise: NoiseArg,
    /// Pre-sample values x_{-p+1}..x_0, oldest first; zeros by default.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub history: Option<Vec<f64>>,
    /// Also evaluate the recoverability condition at this accuracy.
    #[arg(long, requires = "vol_s")]
    pub epsilon: Option<f64>,
    /// Budget used in the recoverability condition.
    #[arg(long = "recover-delta", default_value_t = 0.0)]
    pub recover_delta: f64,
    /// Volume term of the recoverability condition.
    #[arg(long, requires = "epsilon")]
    pub vol_s: Option<f64>,
    /// Constant of the recoverability condition.
    #[arg(long, default_value_t = 1.0)]
    pub c1: f64,
    /// Output prefix: writes <out>.csv, <out>.json and <out>.manifest.json.
    #[arg(long)]
    pub out: PathBuf,
}

/// Input series options shared by the estimation commands.
#[derive(Debug, Args, Serialize)]
pub struct SeriesArgs {
    /// CSV file with one numeric column and an optional header.
    pub input: PathBuf,
    /// AR order.
    #[arg(long = "p")]
    pub p: usize,
    /// Explicit pre-sample values, oldest first; otherwise the first p
    /// values of the file are used.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub history: Option<Vec<f64>>,
    /// Column to read when the file has a header.
    #[arg(long)]
    pub column: Option<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodArg {
    Profile,
    Accelerated,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum VariantArg {
    /// Budget on the sum of absolute differences.
    Tv,
    /// Budget on the sum of squared differences.
    L2,
}

#[derive(Debug, Args, Serialize)]
pub struct SolverArgs {
    /// Radius of the ball on (alpha, mu); unbounded by default.
    #[arg(long)]
    pub delta_s: Option<f64>,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 20_000)]
    pub max_iters: usize,
    /// Optimization algorithm.
    #[arg(long = "solver", value_enum, default_value = "profile")]
    pub solver: MethodArg,
    #[arg(long, value_enum, default_value = "tv")]
    pub variant: VariantArg,
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    #[command(flatten)]
    pub series: SeriesArgs,
    /// Budget on the background variation.
    #[arg(long, default_value_t = 0.0)]
    pub delta: f64,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Output prefix.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SearchArg {
    Grid,
    Golden,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestArg {
    Lb,
    Dw,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransformArg {
    None,
    Log,
}

#[derive(Debug, Args, Serialize)]
pub struct TuneArgs {
    #[arg(long, default_value_t = 0.0)]
    pub delta_lo: f64,
    #[arg(long, default_value_t = 60.0)]
    pub delta_hi: f64,
    /// Grid spacing, or the final bracket width of golden-section search.
    #[arg(long, default_value_t = 0.04)]
    pub epsilon: f64,
    #[arg(long = "method", value_enum, default_value = "grid")]
    pub method: SearchArg,
    #[arg(long, value_enum, default_value = "lb")]
    pub test: TestArg,
    /// Ljung-Box lag; defaults to the AR order.
    #[arg(long)]
    pub lags: Option<usize>,
    /// Transform applied to the residuals before testing.
    #[arg(long, value_enum, default_value = "none")]
    pub transform: TransformArg,
}

#[derive(Debug, Args, Serialize)]
pub struct TuneCmdArgs {
    #[command(flatten)]
    pub series: SeriesArgs,
    #[command(flatten)]
    pub tune: TuneArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeArg {
    Wild,
    Block,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MultiplierArg {
    Normal,
    Rademacher,
}

#[derive(Debug, Args, Serialize)]
pub struct BootstrapArgs {
    #[command(flatten)]
    pub series: SeriesArgs,
    #[command(flatten)]
    pub tune: TuneArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, value_enum, default_value = "wild")]
    pub scheme: SchemeArg,
    #[arg(long, default_value_t = 100)]
    pub replicates: usize,
    /// Block length of the local block bootstrap.
    #[arg(long, default_value_t = 20)]
    pub block_size: usize,
    /// Half-width of the window of block start positions.
    #[arg(long, default_value_t = 50)]
    pub neighborhood: usize,
    /// Confidence levels, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0.9,0.95")]
    pub levels: Vec<f64>,
    #[arg(long, value_enum, default_value = "normal")]
    pub multiplier: MultiplierArg,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct PreprocessArgs {
    pub input: PathBuf,
    #[arg(long)]
    pub column: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentName {
    Exp1,
    Exp2,
    Exp3,
    Exp4,
}

#[derive(Debug, Args, Serialize)]
pub struct ExperimentArgs {
    #[arg(long, value_enum)]
    pub name: ExperimentName,
    /// Size relative to the full study; 0.4 gives series of length 2000.
    #[arg(long, default_value_t = 0.4)]
    pub scale: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Override the number of (outer) replications.
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

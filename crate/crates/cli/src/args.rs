//! Command-line definitions and `--config` file merging.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "mombayes", version, about = "Median-of-means robust Bayesian inference")]
#[command(args_override_self = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// MAP estimate, posterior sampling and summary for a data file.
    Fit(FitArgs),
    /// Posterior draws and histograms only.
    Sample(FitArgs),
    /// Simulate a data set from a model.
    Simulate(SimulateArgs),
    /// Run one of the built-in experiments.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelName {
    GaussianLocation,
    LaplaceLocation,
    PoissonRate,
    LinearRegression,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PriorName {
    Uniform,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExperimentName {
    Example1,
    Example2,
    Wine,
    Deviation,
    Normality,
}

/// Loss, blocking and sampler settings shared by every subcommand.
#[derive(Debug, Clone, Args)]
pub struct EngineArgs {
    /// Loss used to aggregate block averages.
    #[arg(long, default_value = "huber", value_parser = ["absolute", "huber", "smoothed-huber"])]
    pub rho: String,
    /// Number of blocks.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value = "shuffled", value_parser = ["contiguous", "shuffled"])]
    pub partition: String,
    /// Fixed Δ_n constant c (calibrated from the data when omitted).
    #[arg(long)]
    pub delta_c: Option<f64>,
    #[arg(long, default_value_t = 0.25)]
    pub delta_exponent: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "rwm", value_parser = ["rwm", "hmc"])]
    pub sampler: String,
    #[arg(long, default_value_t = 4)]
    pub chains: usize,
    #[arg(long, default_value_t = 5000)]
    pub draws: usize,
    #[arg(long, default_value_t = 2000)]
    pub warmup: usize,
    /// Target acceptance rate (0.234 for rwm, 0.8 for hmc by default).
    #[arg(long)]
    pub target_accept: Option<f64>,
    /// HMC leapfrog steps per iteration.
    #[arg(long, default_value_t = 32)]
    pub leapfrog_steps: usize,
    /// Extra prior-drawn starting points for the MAP search.
    #[arg(long, default_value_t = 4)]
    pub restarts: usize,
    /// Credible level is 1 − alpha.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// File of `key = value` lines using the flag names; flags win.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    #[arg(long, value_enum, default_value = "gaussian-location")]
    pub model: ModelName,
    /// Known model constants, e.g. `sigma=1` or `b=2`.
    #[arg(long = "model-arg", value_name = "KEY=VALUE")]
    pub model_arg: Vec<String>,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Input CSV file with a header row.
    #[arg(long, required = true)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value = "y")]
    pub response: String,
    /// Regressor columns (comma separated) for linear-regression.
    #[arg(long, value_delimiter = ',')]
    pub features: Vec<String>,
    /// Keep regression data on its original scale.
    #[arg(long)]
    pub no_standardize: bool,
    #[arg(long, value_enum, default_value = "uniform")]
    pub prior: PriorName,
    /// Gaussian prior means (one value, or one per coefficient).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub prior_mean: Vec<f64>,
    /// Gaussian prior standard deviations (one value, or one per coefficient).
    #[arg(long, value_delimiter = ',')]
    pub prior_sd: Vec<f64>,
    /// Reference point θ′ (comma separated).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub theta_prime: Vec<f64>,
    /// Replace this many responses with outliers before fitting.
    #[arg(long, default_value_t = 0)]
    pub contaminate: usize,
    #[arg(long, default_value_t = 1e4, allow_hyphen_values = true)]
    pub outlier_mean: f64,
    #[arg(long, default_value_t = 1.0)]
    pub outlier_sd: f64,
    #[command(flatten)]
    pub engine: EngineArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// True parameter (comma separated; regression: coefficients then σ).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    pub theta: Vec<f64>,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub contaminate: usize,
    #[arg(long, default_value_t = 1e4, allow_hyphen_values = true)]
    pub outlier_mean: f64,
    #[arg(long, default_value_t = 1.0)]
    pub outlier_sd: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output CSV path.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ExperimentArgs {
    #[arg(value_enum)]
    pub name: ExperimentName,
    /// Wine-quality CSV (wine experiment only).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Outliers injected by example2 (default 40) or wine (default 0).
    #[arg(long)]
    pub outliers: Option<usize>,
    /// Monte-Carlo replications (deviation, normality).
    #[arg(long)]
    pub replications: Option<usize>,
    /// Sample size (example1, example2, deviation, normality).
    #[arg(long)]
    pub n: Option<usize>,
    #[command(flatten)]
    pub engine: EngineArgs,
}

/// Expands `--config FILE` into flags placed right after the subcommand
/// tokens, so explicit flags (which come later) take precedence.
pub fn expand_config(argv: Vec<String>) -> anyhow::Result<Vec<String>> {
    let Some(pos) = argv.iter().position(|a| a == "--config" || a.starts_with("--config=")) else {
        return Ok(argv);
    };
    let path = match argv[pos].strip_prefix("--config=") {
        Some(p) => p.to_string(),
        None => argv.get(pos + 1).cloned().context("--config needs a file path")?,
    };
    let injected = config_flags(Path::new(&path))?;
    // argv[0] is the program, argv[1] the subcommand; `experiment` takes a
    // positional name right after it.
    let mut at = 2.min(argv.len());
    if argv.get(1).map(String::as_str) == Some("experiment") && argv.get(2).is_some_and(|a| !a.starts_with('-')) {
        at = 3;
    }
    let mut out = argv[..at].to_vec();
    out.extend(injected);
    out.extend_from_slice(&argv[at..]);
    Ok(out)
}

fn config_flags(path: &Path) -> anyhow::Result<Vec<String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config file {}", path.display()))?;
    let mut flags = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("{}:{}: expected `key = value`", path.display(), i + 1);
        };
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        if key == "config" {
            bail!("{}:{}: nested config files are not supported", path.display(), i + 1);
        }
        match value {
            "true" => flags.push(format!("--{key}")),
            "false" => {}
            v => flags.push(format!("--{key}={v}")),
        }
    }
    Ok(flags)
}

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "jdevar", version, about = "EVaR portfolio tools for jump-diffusion return models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit model parameters to price or return data by extended least squares.
    Fit(FitArgs),
    /// EVaR of a fixed portfolio under a parameter file.
    Evar(EvarArgs),
    /// Sweep target returns and solve the EVaR and minimum-variance problems.
    Frontier(FrontierArgs),
    /// KKT residuals of a candidate (weights, s) point.
    KktCheck(KktArgs),
    /// Draw returns from a parameter file.
    Simulate(SimulateArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Fit(_) => "fit",
            Command::Evar(_) => "evar",
            Command::Frontier(_) => "frontier",
            Command::KktCheck(_) => "kkt-check",
            Command::Simulate(_) => "simulate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RiskArg {
    Evar,
    Stdev,
    Both,
}

#[derive(Debug, Args)]
pub struct ParamsInput {
    /// Parameter JSON file.
    #[arg(long, value_name = "FILE")]
    pub params: PathBuf,
    /// Expected model; rejected if the parameter file holds the other one.
    #[arg(long)]
    pub model: Option<ModelArg>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub model: ModelArg,
    /// Closing-price CSV; repeat for one file per asset.
    #[arg(long, value_name = "FILE", conflicts_with = "returns")]
    pub prices: Vec<PathBuf>,
    /// Return CSV as written by `simulate`.
    #[arg(long, value_name = "FILE")]
    pub returns: Option<PathBuf>,
    #[arg(long, default_value_t = 16)]
    pub starts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvarArgs {
    #[command(flatten)]
    pub input: ParamsInput,
    /// Portfolio weights, comma separated.
    #[arg(long, value_name = "W1,W2,...")]
    pub weights: String,
    /// Confidence level; the EVaR level is 1 - confidence.
    #[arg(long, default_value_t = 0.95)]
    pub alpha: f64,
    /// Poisson tail mass left out of the density mixture.
    #[arg(long)]
    pub tail_mass: Option<f64>,
    /// Cap on mixture terms per Poisson count.
    #[arg(long)]
    pub max_terms: Option<usize>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FrontierArgs {
    #[command(flatten)]
    pub input: ParamsInput,
    /// Target grid `min:max:count`; defaults to the attainable range with 10 points.
    #[arg(long, value_name = "MIN:MAX:COUNT", allow_hyphen_values = true)]
    pub targets: Option<String>,
    #[arg(long, default_value_t = 0.95)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value_t = RiskArg::Both)]
    pub risk: RiskArg,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct KktArgs {
    #[command(flatten)]
    pub input: ParamsInput,
    #[arg(long, value_name = "W1,W2,...")]
    pub weights: String,
    /// Value of the auxiliary variable `s`.
    #[arg(long, allow_hyphen_values = true)]
    pub s: f64,
    /// Target return; defaults to the expected return of the weights.
    #[arg(long, allow_hyphen_values = true)]
    pub target: Option<f64>,
    /// Multipliers as JSON `{"nu": [...], "eta": [e1, e2]}`; recovered by least squares if omitted.
    #[arg(long, value_name = "FILE")]
    pub multipliers: Option<PathBuf>,
    #[arg(long, default_value_t = 0.95)]
    pub alpha: f64,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub input: ParamsInput,
    #[arg(long)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

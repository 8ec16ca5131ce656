//! Command-line surface. Every parameter has a default shown in `--help`, and
//! the parsed values are echoed to `config.json` when an output directory is set.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use lrscale::scaling::{JointLaw, PowerLaw};

#[derive(Debug, Parser, Serialize)]
#[command(
    name = "lrscale",
    version,
    about = "Learning-rate scaling laws across token horizons"
)]
pub struct Cli {
    /// Output format on stdout.
    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Json)]
    pub format: OutputFormat,

    /// Also write results, plot data and a config echo into this directory.
    #[arg(long, global = true, env = "LRSCALE_OUT_DIR")]
    pub out_dir: Option<PathBuf>,

    /// Worker threads for bootstrap resamples and joint-fit starts. Results do
    /// not depend on this.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Json,
    Text,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordFormat {
    Jsonl,
    Csv,
}

impl From<RecordFormat> for lrscale::InputFormat {
    fn from(f: RecordFormat) -> Self {
        match f {
            RecordFormat::Jsonl => lrscale::InputFormat::Jsonl,
            RecordFormat::Csv => lrscale::InputFormat::Csv,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct Input {
    /// Sweep records; standard input when omitted or `-`.
    pub input: Option<PathBuf>,

    /// Record format. Defaults to csv for `.csv` files and jsonl otherwise.
    #[arg(long, value_enum)]
    pub input_format: Option<RecordFormat>,

    /// Skip malformed rows and report them instead of failing.
    #[arg(long)]
    pub lenient: bool,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Validate records and report accepted, diverged and rejected rows.
    Ingest(Input),
    /// Fit loss against log10 LR in every sweep cell.
    FitLoss(FitLossArgs),
    /// Fit the horizon power law for every model family.
    FitLaw(FitLawArgs),
    /// Fit the joint model-size and horizon law.
    FitJoint(FitJointArgs),
    /// Resample the runs and summarize the spread of fitted quantities.
    Bootstrap(BootstrapArgs),
    /// Predict the optimal LR from a law.
    Predict(PredictArgs),
    /// Fit on some horizons and compare predictions with measured optima.
    TransferEval(TransferEvalArgs),
    /// Compare a learning rate that was used with a law's prediction.
    Audit(AuditArgs),
    /// Suggest learning rates to probe next around each fitted optimum.
    SuggestLrs(SuggestArgs),
    /// Generate a synthetic sweep from a planted joint law.
    Synth(SynthArgs),
    /// Run the whole pipeline and write a report.
    Report(ReportArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct FitLossArgs {
    #[command(flatten)]
    pub input: Input,
    /// Fit every run as its own point instead of averaging seeds at equal LR.
    #[arg(long)]
    pub no_average: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct FitLawArgs {
    #[command(flatten)]
    pub input: Input,
    /// Read measured optima from this JSON file instead of fitting records.
    #[arg(long, conflicts_with = "input")]
    pub optima: Option<PathBuf>,
    /// Reference horizon in tokens.
    #[arg(long, default_value_t = 1e9)]
    pub d_ref: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct JointOptionsArgs {
    /// Huber threshold on log10 residuals.
    #[arg(long, default_value_t = 1e-3)]
    pub huber_delta: f64,
    /// Gradient-norm tolerance per start.
    #[arg(long, default_value_t = 1e-10)]
    pub grad_tol: f64,
    /// Iteration cap per start.
    #[arg(long, default_value_t = 500)]
    pub max_iterations: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct FitJointArgs {
    #[command(flatten)]
    pub input: Input,
    /// Hold out cells with these model sizes for validation.
    #[arg(long, value_delimiter = ',')]
    pub holdout_n: Vec<f64>,
    #[command(flatten)]
    pub joint: JointOptionsArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetArg {
    LrStar,
    PowerLaw,
    JointLaw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScopeArg {
    PerCell,
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StdArg {
    Population,
    Sample,
}

#[derive(Debug, Args, Serialize)]
pub struct BootstrapArgs {
    #[command(flatten)]
    pub input: Input,
    #[arg(long, value_enum, default_value_t = TargetArg::LrStar)]
    pub target: TargetArg,
    /// Fraction of runs kept per resample.
    #[arg(long, default_value_t = 0.8)]
    pub keep: f64,
    #[arg(long, default_value_t = 1000)]
    pub resamples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Draw with replacement; duplicated runs count as separate points.
    #[arg(long)]
    pub with_replacement: bool,
    #[arg(long, value_enum, default_value_t = ScopeArg::PerCell)]
    pub scope: ScopeArg,
    #[arg(long, value_enum, default_value_t = StdArg::Population)]
    pub std: StdArg,
    #[command(flatten)]
    pub joint: JointOptionsArgs,
}

#[derive(Debug, Args, Serialize)]
#[group(required = true, multiple = false)]
pub struct LawArgs {
    /// Horizon law, e.g. `B=1.2e-3,beta=0.32`.
    #[arg(long)]
    #[serde(serialize_with = "display")]
    pub law: Option<PowerLaw>,
    /// Joint law, e.g. `C=1.55e-3,alpha=0.23,beta=0.32`.
    #[arg(long)]
    #[serde(serialize_with = "display")]
    pub joint: Option<JointLaw>,
}

fn display_plain<T: std::fmt::Display, S: serde::Serializer>(value: &T, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(value)
}

fn display<T: std::fmt::Display, S: serde::Serializer>(value: &Option<T>, s: S) -> Result<S::Ok, S::Error> {
    match value {
        Some(v) => s.collect_str(v),
        None => s.serialize_none(),
    }
}

#[derive(Debug, Args, Serialize)]
pub struct PredictArgs {
    #[command(flatten)]
    pub law: LawArgs,
    /// Token horizon.
    #[arg(long)]
    pub d: f64,
    /// Parameter count; required with `--joint`.
    #[arg(long)]
    pub n: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct TransferEvalArgs {
    /// Measured optima JSON file.
    #[arg(long)]
    pub optima: PathBuf,
    /// Horizons used for the fit; every other horizon is held out.
    #[arg(long, value_delimiter = ',', required = true)]
    pub fit_horizons: Vec<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct AuditArgs {
    #[command(flatten)]
    pub law: LawArgs,
    /// Learning rate that was used.
    #[arg(long)]
    pub used_lr: f64,
    #[arg(long)]
    pub d: f64,
    #[arg(long)]
    pub n: Option<f64>,
    /// Ratio beyond which the LR is flagged, in either direction.
    #[arg(long, default_value_t = lrscale::transfer::DEFAULT_AUDIT_THRESHOLD)]
    pub threshold: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct SuggestArgs {
    #[command(flatten)]
    pub input: Input,
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    /// Planted joint law.
    #[arg(long, default_value = "C=1.55e-3,alpha=0.23,beta=0.32")]
    #[serde(serialize_with = "display_plain")]
    pub law: JointLaw,
    /// Loss per squared decade of LR around the optimum.
    #[arg(long, default_value_t = 0.05)]
    pub curvature: f64,
    /// Curvature scales as (D / 1e9)^-gamma.
    #[arg(long, default_value_t = 0.0)]
    pub gamma: f64,
    #[arg(long, default_value_t = 2.5)]
    pub floor_loss: f64,
    /// Standard deviation of Gaussian loss noise.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    /// Runs at or above this multiple of the optimum diverge.
    #[arg(long)]
    pub diverge_at: Option<f64>,
    /// Exponent of the (BS / 524288)^kappa batch-size factor.
    #[arg(long, default_value_t = 0.0)]
    pub kappa: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_delimiter = ',', default_value = "0.76e9,1.3e9,2.7e9")]
    pub n_params: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "25e9,50e9,100e9,200e9")]
    pub horizons: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0.25,0.5,1,2,4")]
    pub multipliers: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "524288")]
    pub batch_sizes: Vec<f64>,
    /// Seed replicates per learning rate.
    #[arg(long, default_value_t = 1)]
    pub replicates: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct ReportArgs {
    #[command(flatten)]
    pub input: Input,
    /// Hold out cells with these model sizes in the joint fit.
    #[arg(long, value_delimiter = ',')]
    pub holdout_n: Vec<f64>,
    #[command(flatten)]
    pub joint: JointOptionsArgs,
}

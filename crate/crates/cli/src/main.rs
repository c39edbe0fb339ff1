//! `geoloc`: scenario generation, localization, evaluation, ground-truth
//! interpolation, s_max calibration and ablation runs.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 configuration error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use config::FileConfig;

#[derive(Debug, Parser)]
#[command(name = "geoloc", version, about = "Map-based geo-localization on a dynamically weighted factor graph")]
struct Cli {
    /// TOML file with default values for the numeric flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic map, sensor sequence and ground truth.
    Simulate(SimulateArgs),
    /// Run the online engine over a sequence.
    Localize(LocalizeArgs),
    /// Compare an estimated trajectory with ground truth.
    Evaluate(EvaluateArgs),
    /// Build a ground-truth trajectory from odometry and trusted keyframes.
    GtInterpolate(GtInterpolateArgs),
    /// Report the maximum information score of a sequence.
    CalibrateSmax(CalibrateArgs),
    /// Run the four {phi a, phi b} x {+e, -e} configurations concurrently.
    Ablate(AblateArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum OnOff {
    On,
    Off,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// corner-rich, corner-rich-dropout, corridor-ambiguous, mixed, mixed-dropout or clean.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Inclusive frame range with no detections, e.g. 150:350. Repeatable.
    #[arg(long)]
    dropout: Vec<String>,
    /// Also write keyframes.txt with every N-th ground-truth pose.
    #[arg(long)]
    keyframe_every: Option<u64>,
    #[arg(long)]
    resample_step: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

/// Flags shared by every command that runs the engine.
#[derive(Debug, Args, Default)]
struct EngineArgs {
    #[arg(long)]
    s_max: Option<f64>,
    #[arg(long)]
    lambda_a: Option<f64>,
    #[arg(long)]
    lambda_b: Option<f64>,
    #[arg(long)]
    h: Option<f64>,
    /// Sigmoid input variant: a or b.
    #[arg(long)]
    phi: Option<String>,
    #[arg(long, value_enum)]
    bias_estimation: Option<OnOff>,
    /// Unweighted baseline: every factor weight set to this value.
    #[arg(long)]
    fixed_weights: Option<f64>,
    #[arg(long)]
    conventional_odometry: bool,
    #[arg(long)]
    association_threshold: Option<f64>,
    #[arg(long)]
    crop_radius: Option<f64>,
    #[arg(long)]
    resample_step: Option<f64>,
    #[arg(long)]
    heading_baseline: Option<f64>,
    /// lm or gn.
    #[arg(long)]
    solver: Option<String>,
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long)]
    window_frames: Option<usize>,
    #[arg(long)]
    error_window: Option<usize>,
}

impl EngineArgs {
    fn to_file_config(&self) -> FileConfig {
        FileConfig {
            s_max: self.s_max,
            lambda_a: self.lambda_a,
            lambda_b: self.lambda_b,
            h: self.h,
            phi: self.phi.clone(),
            bias_estimation: self.bias_estimation.map(|b| matches!(b, OnOff::On)),
            fixed_weights: self.fixed_weights,
            conventional_odometry: self.conventional_odometry.then_some(true),
            association_threshold: self.association_threshold,
            crop_radius: self.crop_radius,
            resample_step: self.resample_step,
            heading_baseline: self.heading_baseline,
            solver: self.solver.clone(),
            max_iterations: self.max_iterations,
            window_frames: self.window_frames,
            error_window: self.error_window,
            ..FileConfig::default()
        }
    }
}

#[derive(Debug, Args)]
struct LocalizeArgs {
    #[arg(long)]
    map: PathBuf,
    #[arg(long)]
    sequence: PathBuf,
    /// Ground truth; enables the error columns and ATE in the report.
    #[arg(long)]
    gt: Option<PathBuf>,
    /// calibration.toml written by `simulate`; supplies s_max.
    #[arg(long)]
    calibration: Option<PathBuf>,
    /// Aggregate ATE as the mean instead of the RMS.
    #[arg(long)]
    ate_mean: bool,
    #[command(flatten)]
    engine: EngineArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Trajectory CSV written by `localize`.
    #[arg(long)]
    estimate: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    /// weights.csv written by `localize`, for the s and weight columns.
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long)]
    ate_mean: bool,
    /// Directory for metrics.txt and frames.csv.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GtInterpolateArgs {
    /// Sequence whose odometry links the keyframes.
    #[arg(long)]
    sequence: PathBuf,
    #[arg(long)]
    keyframes: PathBuf,
    #[arg(long)]
    solver: Option<String>,
    #[arg(long)]
    max_iterations: Option<usize>,
    /// Output ground-truth file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    #[arg(long)]
    map: PathBuf,
    #[arg(long)]
    sequence: PathBuf,
    /// Ground truth for the oracle score; without it the engine's own scores are used.
    #[arg(long)]
    gt: Option<PathBuf>,
    #[arg(long)]
    association_threshold: Option<f64>,
    #[arg(long)]
    resample_step: Option<f64>,
    /// Write a calibration.toml here.
    #[arg(long)]
    write: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AblateArgs {
    #[arg(long)]
    map: PathBuf,
    #[arg(long)]
    sequence: PathBuf,
    #[arg(long)]
    gt: Option<PathBuf>,
    #[arg(long)]
    calibration: Option<PathBuf>,
    #[arg(long)]
    ate_mean: bool,
    #[command(flatten)]
    engine: EngineArgs,
    #[arg(long)]
    out: PathBuf,
}

/// A failure and the exit code it maps to.
#[derive(Debug)]
pub enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<geoloc::io::IoError> for Failure {
    fn from(e: geoloc::io::IoError) -> Self {
        Failure::Runtime(e.into())
    }
}

pub trait ConfigContext<T> {
    fn config_err(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> ConfigContext<T> for Result<T, E> {
    fn config_err(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Config(e.into()))
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path).config_err()?,
        None => FileConfig::default(),
    };
    match cli.command {
        Command::Simulate(a) => {
            let cfg = file.overlay(FileConfig {
                preset: a.preset,
                seed: a.seed,
                dropout: (!a.dropout.is_empty()).then_some(a.dropout),
                keyframe_every: a.keyframe_every,
                resample_step: a.resample_step,
                ..FileConfig::default()
            });
            commands::simulate(&cfg, &a.out)
        }
        Command::Localize(a) => {
            let mut over = a.engine.to_file_config();
            over.ate_mean = a.ate_mean.then_some(true);
            let cfg = file.overlay(over);
            commands::localize(&cfg, &a.map, &a.sequence, a.gt.as_deref(), a.calibration.as_deref(), &a.out)
        }
        Command::Evaluate(a) => {
            let cfg = file.overlay(FileConfig { ate_mean: a.ate_mean.then_some(true), ..FileConfig::default() });
            commands::evaluate(&cfg, &a.estimate, &a.gt, a.weights.as_deref(), a.out.as_deref())
        }
        Command::GtInterpolate(a) => {
            let cfg = file.overlay(FileConfig {
                solver: a.solver,
                max_iterations: a.max_iterations,
                ..FileConfig::default()
            });
            commands::gt_interpolate(&cfg, &a.sequence, &a.keyframes, &a.out)
        }
        Command::CalibrateSmax(a) => {
            let cfg = file.overlay(FileConfig {
                association_threshold: a.association_threshold,
                resample_step: a.resample_step,
                ..FileConfig::default()
            });
            commands::calibrate(&cfg, &a.map, &a.sequence, a.gt.as_deref(), a.write.as_deref())
        }
        Command::Ablate(a) => {
            if a.engine.phi.is_some() || a.engine.bias_estimation.is_some() || a.engine.fixed_weights.is_some() {
                return Err(Failure::Config(anyhow::anyhow!(
                    "ablate sets --phi and --bias-estimation itself and does not take --fixed-weights"
                )));
            }
            let mut over = a.engine.to_file_config();
            over.ate_mean = a.ate_mean.then_some(true);
            let cfg = file.overlay(over);
            commands::ablate(&cfg, &a.map, &a.sequence, a.gt.as_deref(), a.calibration.as_deref(), &a.out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("geoloc: configuration error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("geoloc: error: {e:#}");
            ExitCode::from(1)
        }
    }
}

//! `ssgp` command-line tool.
//!
//! Exit codes: 0 on success, 2 for input or validation errors, 3 for
//! numerical or optimization failures.

mod commands;
mod spec_file;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ssgp::engine::Engine;
use ssgp::kalman::PredictMode;
use ssgp::quad::FlightShape;
use ssgp::residual::FeatureSet;
use ssgp::ssm::{ApproxOrder, DEFAULT_PERIODIC_HARMONICS, DEFAULT_RBF_ORDER};

#[derive(Parser, Debug)]
#[command(name = "ssgp", version, about = "State-space Gaussian process regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Convert a kernel spec into a state-space model file.
    Convert(ConvertArgs),
    /// Fit hyperparameters by maximizing the log marginal likelihood.
    Train(TrainArgs),
    /// Posterior predictions for a regression dataset or a flight log.
    Fit(FitArgs),
    /// Per-point inference timing table.
    Bench(BenchArgs),
    /// Generate a synthetic flight log with ground-truth residuals.
    Synth(SynthArgs),
}

#[derive(Args, Debug, Clone, Copy)]
struct OrderArgs {
    /// Taylor order m of the RBF approximation.
    #[arg(long, default_value_t = DEFAULT_RBF_ORDER)]
    order: usize,
    /// Number of harmonics J of the periodic approximation.
    #[arg(long, default_value_t = DEFAULT_PERIODIC_HARMONICS)]
    blocks: usize,
}

impl OrderArgs {
    fn approx(self) -> ApproxOrder {
        ApproxOrder { rbf: self.order, periodic_harmonics: self.blocks }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    Filter,
    Smooth,
}

impl From<Mode> for PredictMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Filter => PredictMode::FilterOnly,
            Mode::Smooth => PredictMode::Smoothed,
        }
    }
}

#[derive(Args, Debug)]
struct ConvertArgs {
    /// Kernel spec JSON.
    #[arg(long)]
    kernel: PathBuf,
    #[command(flatten)]
    order: OrderArgs,
    /// Output directory; the model is written to `model.json`.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    kernel: PathBuf,
    /// Regression CSV with columns x (or x0, x1, ...) and y.
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    order: OrderArgs,
    /// Maximum number of objective evaluations.
    #[arg(long, default_value_t = 200)]
    budget: usize,
    /// Writes `spec.json` and `trace.csv`.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[arg(long)]
    kernel: PathBuf,
    /// Regression CSV (x/y columns) or a flight log CSV.
    #[arg(long)]
    data: PathBuf,
    /// Held-out points to predict at (same format as --data); defaults to
    /// the training inputs.
    #[arg(long)]
    queries: Option<PathBuf>,
    /// Vehicle constants for flight logs; defaults to `vehicle.json` next to
    /// the data file.
    #[arg(long)]
    vehicle: Option<PathBuf>,
    #[command(flatten)]
    order: OrderArgs,
    #[arg(long, value_enum, default_value = "smooth")]
    mode: Mode,
    #[arg(long, default_value = "ssgp")]
    engine: Engine,
    /// Flight logs only: input features of the per-axis models.
    #[arg(long, default_value = "siso")]
    features: FeatureSet,
    /// Flight logs only: hyperparameter evaluations per axis.
    #[arg(long, default_value_t = 100)]
    budget: usize,
    /// Flight logs only: keep every k-th step for training.
    #[arg(long, default_value_t = 1)]
    stride: usize,
    /// Writes `predictions.csv` and `metrics.json`.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Kernel spec JSON; defaults to an RBF with unit length scale.
    #[arg(long)]
    kernel: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = ssgp::timing::DEFAULT_SIZES)]
    sizes: Vec<usize>,
    /// Input dimensions (1 = SISO).
    #[arg(long, value_delimiter = ',', default_values_t = [1])]
    dims: Vec<usize>,
    /// Restrict to one engine; both by default.
    #[arg(long)]
    engine: Option<Engine>,
    #[arg(long, value_enum, default_value = "smooth")]
    mode: Mode,
    #[command(flatten)]
    order: OrderArgs,
    #[arg(long, default_value_t = 3)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Writes `timing.csv`.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, default_value = "circle")]
    shape: FlightShape,
    /// Number of samples.
    #[arg(long, default_value_t = 1000)]
    n: usize,
    /// Sample period, seconds.
    #[arg(long, default_value_t = 0.01)]
    dt: f64,
    /// Linear drag coefficient.
    #[arg(long, default_value_t = 0.3)]
    drag: f64,
    /// Relative thrust-map error.
    #[arg(long, default_value_t = 0.1)]
    thrust_error: f64,
    /// Standard deviation of body-velocity measurement noise.
    #[arg(long, default_value_t = 0.002)]
    noise: f64,
    /// Vehicle constants; defaults to a 1 kg vehicle.
    #[arg(long)]
    vehicle: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Writes `flight.csv` and `vehicle.json`.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Convert(a) => commands::convert(a),
        Command::Train(a) => commands::train(a),
        Command::Fit(a) => commands::fit(a),
        Command::Bench(a) => commands::bench(a),
        Command::Synth(a) => commands::synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { 2 } else { 3 })
        }
    }
}

//! `npts`: batch forecasting, backtesting and diagnostics for line-delimited
//! JSON panels.
//!
//! Exit codes: 0 on success, 1 on runtime failure, 2 on usage errors
//! (bad flags, unknown model names, missing input files).

mod commands;

use std::io::IsTerminal;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use npts_core::deepnpts::{InputScaling, LossScaling, Normalization, TrainingConfig};
use npts_core::evaluation::ModelFamily;
use npts_core::synth::SynthKind;
use npts_core::Frequency;
use tracing::Level;

#[derive(Parser, Debug)]
#[command(
    name = "npts",
    version,
    about = "Non-parametric probabilistic forecasting"
)]
struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Forecast the next prediction-length steps of every series.
    Forecast(ForecastArgs),
    /// Tune, refit and score models on rolling windows at the end of every series.
    Backtest(BacktestArgs),
    /// Score every candidate of a model's grid on the training region.
    Tune(ModelRun),
    /// Train a DeepNPTS network on the full dataset and save it.
    Train(TrainArgs),
    /// Histogram of the pooled training values.
    Histogram(HistogramArgs),
    /// Per-index sampling probabilities of the first forecast step of one series.
    Probe(ProbeArgs),
    /// Write a synthetic dataset.
    Synth(SynthArgs),
}

#[derive(Args, Debug, Clone)]
struct DataArgs {
    /// Line-delimited JSON series file.
    #[arg(long)]
    data: PathBuf,
    /// Sampling frequency, e.g. 30min, H, D, W, M.
    #[arg(long)]
    freq: Frequency,
    #[arg(long)]
    prediction_length: usize,
    #[arg(long, default_value_t = 1)]
    num_windows: usize,
    /// Require exactly this many dynamic covariate rows per series.
    #[arg(long)]
    num_covariates: Option<usize>,
}

#[derive(Args, Debug, Clone)]
struct RunArgs {
    /// Sample paths per forecast.
    #[arg(long, default_value_t = npts_core::DEFAULT_SAMPLES)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "npts-out")]
    out_dir: PathBuf,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum NormalizationArg {
    Softmax,
    SumNormalize,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum InputScalingArg {
    None,
    Standardization,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum LossScalingArg {
    None,
    MinMax,
}

#[derive(Args, Debug, Clone)]
struct DeepArgs {
    /// DeepNPTS context length as a multiple of the prediction length.
    #[arg(long, default_value_t = TrainingConfig::DEFAULT_CONTEXT_MULTIPLIER)]
    context_multiplier: usize,
    /// DeepNPTS context length; overrides --context-multiplier.
    #[arg(long)]
    context_length: Option<usize>,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 0.0)]
    dropout: f64,
    #[arg(long, value_enum, default_value_t = NormalizationArg::Softmax)]
    normalization: NormalizationArg,
    #[arg(long, value_enum, default_value_t = InputScalingArg::Standardization)]
    input_scaling: InputScalingArg,
    #[arg(long, value_enum, default_value_t = LossScalingArg::None)]
    loss_scaling: LossScalingArg,
    /// Add the static per-series feature.
    #[arg(long)]
    static_feature: bool,
    #[arg(long, default_value_t = 1e-3)]
    learning_rate: f64,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    /// Search the full DeepNPTS grid instead of the single configuration above.
    #[arg(long)]
    full_grid: bool,
}

impl DeepArgs {
    fn config(&self, prediction_length: usize, seed: u64) -> TrainingConfig {
        let context = self
            .context_length
            .unwrap_or(self.context_multiplier * prediction_length);
        TrainingConfig {
            epochs: self.epochs,
            dropout: self.dropout,
            normalization: match self.normalization {
                NormalizationArg::Softmax => Normalization::Softmax,
                NormalizationArg::SumNormalize => Normalization::SumNormalize,
            },
            input_scaling: match self.input_scaling {
                InputScalingArg::None => InputScaling::None,
                InputScalingArg::Standardization => InputScaling::Standardization,
            },
            loss_scaling: match self.loss_scaling {
                LossScalingArg::None => LossScaling::None,
                LossScalingArg::MinMax => LossScaling::MinMax,
            },
            static_feature: self.static_feature,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            seed,
            ..TrainingConfig::new(prediction_length, context)
        }
    }
}

#[derive(Args, Debug, Clone)]
struct ModelArgs {
    /// npts-uniform, npts-exp, seasonal-npts-uniform, seasonal-npts-exp,
    /// deepnpts or seasonal-naive.
    #[arg(long)]
    model: ModelFamily,
    /// Fix the kernel rate of exponential kernels instead of searching the grid.
    #[arg(long)]
    lambda: Option<f64>,
    /// Cap the history used by the kernel forecasters.
    #[arg(long)]
    max_context: Option<usize>,
    #[command(flatten)]
    deep: DeepArgs,
}

#[derive(Args, Debug, Clone)]
struct ModelRun {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args, Debug, Clone)]
struct ForecastArgs {
    #[command(flatten)]
    inner: ModelRun,
    /// Use a saved DeepNPTS network instead of training one.
    #[arg(long)]
    model_file: Option<PathBuf>,
    /// Also write the raw sample paths.
    #[arg(long)]
    include_samples: bool,
}

#[derive(Args, Debug, Clone)]
struct BacktestArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Models to evaluate; repeat the flag for several.
    #[arg(long = "model", required = true)]
    models: Vec<ModelFamily>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    max_context: Option<usize>,
    #[command(flatten)]
    deep: DeepArgs,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args, Debug, Clone)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    deep: DeepArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "npts-out")]
    out_dir: PathBuf,
    /// Where to write the network (default: <out-dir>/model.bin).
    #[arg(long)]
    model_file: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct HistogramArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 50)]
    bins: usize,
    #[arg(long, default_value = "npts-out")]
    out_dir: PathBuf,
}

#[derive(Args, Debug, Clone)]
struct ProbeArgs {
    #[command(flatten)]
    inner: ModelRun,
    /// Series to probe (default: the first one).
    #[arg(long)]
    series: Option<String>,
    #[arg(long)]
    model_file: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct SynthArgs {
    #[arg(long)]
    kind: SynthKind,
    #[arg(long, default_value_t = 10)]
    num_series: usize,
    #[arg(long, default_value_t = 500)]
    length: usize,
    #[arg(long, default_value = "H")]
    freq: Frequency,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10.0)]
    level: f64,
    #[arg(long, default_value_t = 1.0)]
    noise: f64,
    #[arg(long, default_value_t = 24)]
    period: usize,
    #[arg(long, default_value_t = 5.0)]
    amplitude: f64,
    #[arg(long, default_value_t = 0.7)]
    zero_prob: f64,
    /// Output file.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_max_level(if cli.verbose {
            Level::INFO
        } else {
            Level::WARN
        })
        .with_target(false)
        .with_ansi(std::io::stderr().is_terminal())
        .init();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(commands::Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(commands::Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

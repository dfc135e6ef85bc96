use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use rayon::prelude::*;
use tracing::info;

use npts_core::deepnpts::{read_model, train, write_model};
use npts_core::evaluation::{
    rolling_backtest, tune, BacktestOptions, BacktestPlan, FittedModel, ModelConfig, ModelFamily,
};
use npts_core::io::{
    fmt6, histogram, load_dataset, probe, write_calibration_csv, write_forecasts,
    write_histogram_csv, write_metrics_csv, write_per_series_csv, write_probe_csv,
    write_series_jsonl, write_training_log_csv, write_tuning_csv, DatasetManifest, ForecastRecord,
};
use npts_core::seed::derive_seed;
use npts_core::synth::{generate, SynthSpec};
use npts_core::{default_levels, forecast_paths, ForecastOptions, TimeSeries};

use super::{
    BacktestArgs, Command, DataArgs, DeepArgs, ForecastArgs, HistogramArgs, ModelArgs, ModelRun,
    ProbeArgs, SynthArgs, TrainArgs,
};

pub enum Failure {
    /// Bad flags or missing inputs; exit code 2.
    Usage(String),
    /// Everything else; exit code 1.
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<npts_core::Error> for Failure {
    fn from(e: npts_core::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

type CmdResult<T = ()> = Result<T, Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

pub fn run(command: Command) -> CmdResult {
    match command {
        Command::Forecast(a) => forecast(a),
        Command::Backtest(a) => backtest(a),
        Command::Tune(a) => tune_cmd(a),
        Command::Train(a) => train_cmd(a),
        Command::Histogram(a) => histogram_cmd(a),
        Command::Probe(a) => probe_cmd(a),
        Command::Synth(a) => synth(a),
    }
}

fn require_file(path: &Path, what: &str) -> CmdResult {
    if path.is_file() {
        Ok(())
    } else {
        Err(usage(format!("{what} '{}' not found", path.display())))
    }
}

fn manifest(data: &DataArgs) -> CmdResult<DatasetManifest> {
    require_file(&data.data, "data file")?;
    if data.prediction_length == 0 || data.num_windows == 0 {
        return Err(usage(
            "--prediction-length and --num-windows must be positive",
        ));
    }
    Ok(DatasetManifest {
        num_covariates: data.num_covariates,
        ..DatasetManifest::new(
            &data.data,
            data.freq,
            data.prediction_length,
            data.num_windows,
        )
    })
}

fn load(data: &DataArgs) -> CmdResult<(DatasetManifest, Vec<TimeSeries>)> {
    let m = manifest(data)?;
    let panel = load_dataset(&m).with_context(|| format!("loading {}", m.path.display()))?;
    info!(series = panel.len(), "loaded {}", m.path.display());
    Ok((m, panel))
}

fn create(dir: &Path, name: &str) -> CmdResult<(PathBuf, BufWriter<File>)> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok((path, BufWriter::new(file)))
}

/// The candidate grid for one model family.
fn candidates(
    family: ModelFamily,
    lambda: Option<f64>,
    max_context: Option<usize>,
    deep: &DeepArgs,
    prediction_length: usize,
    seed: u64,
) -> CmdResult<Vec<ModelConfig>> {
    let grid = family.grid(
        max_context,
        &deep.config(prediction_length, seed),
        deep.full_grid,
    );
    match (lambda, grid.first()) {
        (None, _) => Ok(grid),
        (Some(l), Some(ModelConfig::Kernel { kind, .. })) if grid.len() > 1 => {
            if !(l.is_finite() && l > 0.0) {
                return Err(usage(format!("--lambda must be positive, got {l}")));
            }
            Ok(vec![ModelConfig::Kernel {
                kind: *kind,
                lambda: l,
                max_context,
            }])
        }
        (Some(_), _) => Err(usage(format!("--lambda does not apply to {family}"))),
    }
}

/// A single configuration: exponential kernels default to the first rate of
/// the grid.
fn single(model: &ModelArgs, prediction_length: usize, seed: u64) -> CmdResult<ModelConfig> {
    if model.deep.full_grid {
        return Err(usage("--full-grid only applies to backtest and tune"));
    }
    let grid = candidates(
        model.model,
        model.lambda,
        model.max_context,
        &model.deep,
        prediction_length,
        seed,
    )?;
    Ok(grid.into_iter().next().expect("grids are never empty"))
}

fn fitted(
    model: &ModelArgs,
    model_file: Option<&Path>,
    panel: &[TimeSeries],
    prediction_length: usize,
    seed: u64,
) -> CmdResult<FittedModel> {
    if let Some(path) = model_file {
        if model.model != ModelFamily::DeepNpts {
            return Err(usage("--model-file requires --model deepnpts"));
        }
        require_file(path, "model file")?;
        let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        let m = read_model(BufReader::new(file))
            .with_context(|| format!("reading {}", path.display()))?;
        return Ok(FittedModel::DeepNpts(Box::new(m)));
    }
    let config = single(model, prediction_length, seed)?;
    let (fitted, _) = config
        .fit(panel)
        .with_context(|| format!("fitting {}", config.label()))?;
    Ok(fitted)
}

fn forecast(a: ForecastArgs) -> CmdResult {
    let ModelRun { data, model, run } = &a.inner;
    let (m, panel) = load(data)?;
    let fitted = fitted(
        model,
        a.model_file.as_deref(),
        &panel,
        m.prediction_length,
        run.seed,
    )?;
    let source = fitted.source();
    let mut records = panel
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let opts = ForecastOptions {
                samples: run.samples,
                seed: derive_seed(run.seed, i as u64),
                levels: default_levels(),
            };
            forecast_paths(s, source, m.prediction_length, &opts)
                .map(|r| ForecastRecord::from_result(&r, a.include_samples))
        })
        .collect::<npts_core::Result<Vec<_>>>()?;
    records.sort_by(|x, y| x.series_id.cmp(&y.series_id));
    let (path, mut w) = create(&run.out_dir, "forecasts.jsonl")?;
    write_forecasts(&records, &mut w)?;
    w.flush()?;
    println!("wrote {} forecasts to {}", records.len(), path.display());
    Ok(())
}

fn backtest(a: BacktestArgs) -> CmdResult {
    for (i, m) in a.models.iter().enumerate() {
        if a.models[..i].contains(m) {
            return Err(usage(format!("model {m} given twice")));
        }
    }
    let (m, panel) = load(&a.data)?;
    let plan = BacktestPlan::new(m.prediction_length, m.num_windows);
    let opts = BacktestOptions {
        samples: a.run.samples,
        seed: a.run.seed,
    };
    let mut grids = Vec::with_capacity(a.models.len());
    for &family in &a.models {
        let grid = candidates(
            family,
            a.lambda,
            a.max_context,
            &a.deep,
            m.prediction_length,
            a.run.seed,
        )?;
        grids.push((family, grid));
    }
    let mut reports = Vec::with_capacity(grids.len());
    for (family, grid) in grids {
        let report = rolling_backtest(family.name(), &m.name(), &grid, &panel, &plan, &opts)
            .with_context(|| format!("backtesting {family}"))?;
        info!(model = %family, seconds = report.wall_clock.as_secs_f64(), "backtest finished");
        let name = family.name();
        let (_, mut w) = create(&a.run.out_dir, &format!("calibration_{name}.csv"))?;
        write_calibration_csv(&report, &mut w)?;
        let (_, mut w) = create(&a.run.out_dir, &format!("per_series_{name}.csv"))?;
        write_per_series_csv(&report, &mut w)?;
        if !report.tuning.is_empty() {
            let selected = report
                .tuning
                .iter()
                .position(|s| s.label == report.selected);
            let (_, mut w) = create(&a.run.out_dir, &format!("tuning_{name}.csv"))?;
            write_tuning_csv(&report.tuning, selected, &mut w)?;
        }
        println!(
            "{name}\t{}\tmean_quantile_loss={}",
            report.selected,
            fmt6(report.mean_quantile_loss.value)
        );
        reports.push(report);
    }
    let (path, mut w) = create(&a.run.out_dir, "metrics.csv")?;
    write_metrics_csv(&reports, &mut w)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn train_region(panel: &[TimeSeries], tau: usize) -> CmdResult<Vec<TimeSeries>> {
    panel
        .iter()
        .map(|s| {
            if s.len() <= tau {
                return Err(anyhow!(
                    "series '{}' has {} values, at least {} are needed",
                    s.id(),
                    s.len(),
                    tau + 1
                )
                .into());
            }
            Ok(s.truncated(s.len() - tau)?)
        })
        .collect()
}

fn tune_cmd(a: ModelRun) -> CmdResult {
    let (m, panel) = load(&a.data)?;
    let plan = BacktestPlan::new(m.prediction_length, m.num_windows);
    let grid = candidates(
        a.model.model,
        a.model.lambda,
        a.model.max_context,
        &a.model.deep,
        m.prediction_length,
        a.run.seed,
    )?;
    let region = train_region(&panel, plan.test_length())?;
    let opts = BacktestOptions {
        samples: a.run.samples,
        seed: a.run.seed,
    };
    let result = tune(&grid, &region, &plan, &opts)?;
    let (path, mut w) = create(&a.run.out_dir, "tuning.csv")?;
    write_tuning_csv(&result.scores, Some(result.best_index), &mut w)?;
    println!("selected {}", result.best.label());
    println!("wrote {}", path.display());
    Ok(())
}

fn train_cmd(a: TrainArgs) -> CmdResult {
    if a.deep.full_grid {
        return Err(usage("--full-grid only applies to backtest and tune"));
    }
    let (m, panel) = load(&a.data)?;
    let config = a.deep.config(m.prediction_length, a.seed);
    let (model, log) = train(&panel, &config)?;
    let path = a
        .model_file
        .clone()
        .unwrap_or_else(|| a.out_dir.join("model.bin"));
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut w = BufWriter::new(
        File::create(&path).with_context(|| format!("creating {}", path.display()))?,
    );
    write_model(&model, &mut w)?;
    w.flush()?;
    let (_, mut lw) = create(&a.out_dir, "training_log.csv")?;
    write_training_log_csv(&log, &mut lw)?;
    println!(
        "trained on {} instances, final loss {}; wrote {}",
        log.num_instances,
        fmt6(log.epoch_losses.last().copied().unwrap_or(f64::NAN)),
        path.display()
    );
    Ok(())
}

fn histogram_cmd(a: HistogramArgs) -> CmdResult {
    if a.bins == 0 {
        return Err(usage("--bins must be positive"));
    }
    let (m, panel) = load(&a.data)?;
    let region = train_region(&panel, m.prediction_length * m.num_windows)?;
    let pooled: Vec<f64> = region
        .iter()
        .flat_map(|s| s.values().iter().copied())
        .collect();
    let bins = histogram(&pooled, a.bins)?;
    let (path, mut w) = create(&a.out_dir, "histogram.csv")?;
    write_histogram_csv(&bins, &mut w)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn probe_cmd(a: ProbeArgs) -> CmdResult {
    let ModelRun { data, model, run } = &a.inner;
    let (m, panel) = load(data)?;
    let series = match &a.series {
        None => &panel[0],
        Some(id) => panel
            .iter()
            .find(|s| s.id() == id)
            .ok_or_else(|| anyhow!("no series with id '{id}'"))?,
    };
    let fitted = fitted(
        model,
        a.model_file.as_deref(),
        &panel,
        m.prediction_length,
        run.seed,
    )?;
    let rows = probe(series, fitted.source())?;
    let (path, mut w) = create(&run.out_dir, "probe.csv")?;
    write_probe_csv(&rows, &mut w)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn synth(a: SynthArgs) -> CmdResult {
    let spec = SynthSpec {
        freq: a.freq,
        seed: a.seed,
        level: a.level,
        noise: a.noise,
        period: a.period,
        amplitude: a.amplitude,
        zero_prob: a.zero_prob,
        ..SynthSpec::new(a.kind, a.num_series, a.length)
    };
    let panel = generate(&spec).map_err(|e| usage(e.to_string()))?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut w = BufWriter::new(
        File::create(&a.out).with_context(|| format!("creating {}", a.out.display()))?,
    );
    write_series_jsonl(&panel, &mut w)?;
    w.flush()?;
    println!("wrote {} series to {}", panel.len(), a.out.display());
    Ok(())
}

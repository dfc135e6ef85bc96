use std::time::{Duration, Instant};

use rayon::prelude::*;
use tracing::{info, warn};

use super::metrics::{coverage_table, mean_quantile_loss, MeanQuantileLoss, SeriesForecast};
use super::models::ModelConfig;
use crate::error::{Error, Result};
use crate::forecaster::{
    default_levels, forecast_paths, DistributionSource, ForecastOptions, DEFAULT_SAMPLES,
};
use crate::seed::derive_seed;
use crate::timeseries::TimeSeries;

/// Rolling evaluation layout: `num_windows` consecutive windows of
/// `prediction_length` steps at the end of every series.
#[derive(Debug, Clone, PartialEq)]
pub struct BacktestPlan {
    pub prediction_length: usize,
    pub num_windows: usize,
    pub levels: Vec<f64>,
}

impl BacktestPlan {
    pub fn new(prediction_length: usize, num_windows: usize) -> Self {
        Self {
            prediction_length,
            num_windows,
            levels: default_levels(),
        }
    }

    /// Evaluated steps per series.
    pub fn test_length(&self) -> usize {
        self.prediction_length * self.num_windows
    }

    fn validate(&self) -> Result<()> {
        if self.prediction_length == 0 || self.num_windows == 0 {
            return Err(Error::InvalidParameter(
                "prediction length and number of windows must be positive".into(),
            ));
        }
        if self.levels.is_empty() {
            return Err(Error::InvalidParameter("no quantile levels".into()));
        }
        Ok(())
    }
}

/// Sample count and base seed for every forecast in a backtest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BacktestOptions {
    pub samples: usize,
    pub seed: u64,
}

impl Default for BacktestOptions {
    fn default() -> Self {
        Self {
            samples: DEFAULT_SAMPLES,
            seed: 0,
        }
    }
}

fn check_lengths(dataset: &[TimeSeries], needed: usize) -> Result<()> {
    if dataset.is_empty() {
        return Err(Error::InvalidParameter("empty dataset".into()));
    }
    for s in dataset {
        if s.len() < needed {
            return Err(Error::InsufficientLength {
                id: s.id().to_owned(),
                reason: format!("{} values, the backtest needs at least {needed}", s.len()),
            });
        }
    }
    Ok(())
}

/// Fit `config` on all but the last `plan.test_length()` steps of every
/// series, then forecast the held-out windows one after another, revealing
/// the true values of each window before forecasting the next.
pub fn evaluate_holdout(
    config: &ModelConfig,
    dataset: &[TimeSeries],
    plan: &BacktestPlan,
    opts: &BacktestOptions,
) -> Result<Vec<SeriesForecast>> {
    plan.validate()?;
    let tau = plan.test_length();
    check_lengths(dataset, tau + 1)?;
    let train_set = dataset
        .iter()
        .map(|s| s.truncated(s.len() - tau))
        .collect::<Result<Vec<_>>>()?;
    let (fitted, log) = config.fit(&train_set)?;
    if let Some(log) = log {
        info!(
            model = %config.label(),
            instances = log.num_instances,
            final_loss = log.epoch_losses.last().copied().unwrap_or(f64::NAN),
            "trained"
        );
    }
    forecast_holdout(fitted.source(), dataset, plan, opts)
}

/// Forecast the held-out windows of every series with an already fitted
/// `source`. Window `w` of series `i` is forecast from the history ending
/// at `L − τ + w·P` with seed `derive_seed(derive_seed(seed, i), w)`.
pub fn forecast_holdout<S: DistributionSource + ?Sized>(
    source: &S,
    dataset: &[TimeSeries],
    plan: &BacktestPlan,
    opts: &BacktestOptions,
) -> Result<Vec<SeriesForecast>> {
    plan.validate()?;
    let tau = plan.test_length();
    check_lengths(dataset, tau + 1)?;
    dataset
        .par_iter()
        .enumerate()
        .map(|(i, series)| {
            let split = series.len() - tau;
            let mut quantiles = vec![Vec::with_capacity(tau); plan.levels.len()];
            for w in 0..plan.num_windows {
                let origin = split + w * plan.prediction_length;
                let history = series.truncated(origin)?;
                let fopts = ForecastOptions {
                    samples: opts.samples,
                    seed: derive_seed(derive_seed(opts.seed, i as u64), w as u64),
                    levels: plan.levels.clone(),
                };
                let f = forecast_paths(&history, source, plan.prediction_length, &fopts)?;
                for (acc, curve) in quantiles.iter_mut().zip(f.quantiles) {
                    acc.extend(curve);
                }
            }
            Ok(SeriesForecast {
                id: series.id().to_owned(),
                actuals: series.values()[split..].to_vec(),
                quantiles,
            })
        })
        .collect()
}

/// Score of one tuning candidate; `score` is `None` when it failed.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateScore {
    pub label: String,
    pub score: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneResult {
    pub best: ModelConfig,
    pub best_index: usize,
    pub scores: Vec<CandidateScore>,
}

/// Evaluate every candidate on the last `plan.test_length()` steps of
/// `dataset` and keep the lowest mean quantile loss. Ties go to the earlier
/// candidate; failing candidates are recorded and skipped.
pub fn tune(
    candidates: &[ModelConfig],
    dataset: &[TimeSeries],
    plan: &BacktestPlan,
    opts: &BacktestOptions,
) -> Result<TuneResult> {
    if candidates.is_empty() {
        return Err(Error::InvalidParameter("empty tuning grid".into()));
    }
    let mut scores = Vec::with_capacity(candidates.len());
    let mut best: Option<(usize, f64)> = None;
    for (i, candidate) in candidates.iter().enumerate() {
        let outcome = evaluate_holdout(candidate, dataset, plan, opts)
            .and_then(|f| mean_quantile_loss(&f, &plan.levels))
            .and_then(|m| {
                if m.value.is_finite() {
                    Ok(m.value)
                } else {
                    Err(Error::InvalidParameter("non-finite score".into()))
                }
            });
        match outcome {
            Ok(score) => {
                if best.is_none_or(|(_, s)| score < s) {
                    best = Some((i, score));
                }
                scores.push(CandidateScore {
                    label: candidate.label(),
                    score: Some(score),
                    error: None,
                });
            }
            Err(e) => {
                warn!(candidate = %candidate.label(), error = %e, "tuning candidate failed");
                scores.push(CandidateScore {
                    label: candidate.label(),
                    score: None,
                    error: Some(e.to_string()),
                });
            }
        }
    }
    let (best_index, _) = best.ok_or(Error::AllCandidatesFailed)?;
    Ok(TuneResult {
        best: candidates[best_index].clone(),
        best_index,
        scores,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestReport {
    pub model: String,
    pub dataset: String,
    /// Label of the configuration evaluated on the test windows.
    pub selected: String,
    pub levels: Vec<f64>,
    /// Pooled over every (series, step) pair.
    pub mean_quantile_loss: MeanQuantileLoss,
    pub per_series: Vec<(String, MeanQuantileLoss)>,
    pub coverage: Vec<f64>,
    pub calibration_error: Vec<f64>,
    /// Empty when there was a single candidate.
    pub tuning: Vec<CandidateScore>,
    pub forecasts: Vec<SeriesForecast>,
    pub wall_clock: Duration,
}

/// Tune on the training region, refit on it, and score the held-out windows.
///
/// With `τ = P·W`, every series of length `L` is split into a training
/// region of `L − τ` steps and `τ` test steps. Candidates are compared on
/// the last `τ` steps of the training region (fit on the first `L − 2τ`).
/// A single candidate skips that validation pass.
pub fn rolling_backtest(
    model: &str,
    dataset_name: &str,
    candidates: &[ModelConfig],
    dataset: &[TimeSeries],
    plan: &BacktestPlan,
    opts: &BacktestOptions,
) -> Result<BacktestReport> {
    let started = Instant::now();
    plan.validate()?;
    let tau = plan.test_length();
    let (selected, tuning) = match candidates {
        [] => return Err(Error::InvalidParameter("empty tuning grid".into())),
        [only] => (only.clone(), Vec::new()),
        _ => {
            check_lengths(dataset, 2 * tau + 1)?;
            let train_region = dataset
                .iter()
                .map(|s| s.truncated(s.len() - tau))
                .collect::<Result<Vec<_>>>()?;
            let t = tune(candidates, &train_region, plan, opts)?;
            (t.best, t.scores)
        }
    };
    let forecasts = evaluate_holdout(&selected, dataset, plan, opts)?;
    let mean = mean_quantile_loss(&forecasts, &plan.levels)?;
    let per_series = forecasts
        .iter()
        .map(|f| {
            Ok((
                f.id.clone(),
                mean_quantile_loss(std::slice::from_ref(f), &plan.levels)?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let coverage = coverage_table(&forecasts, &plan.levels)?;
    let calibration_error = coverage
        .iter()
        .zip(&plan.levels)
        .map(|(c, a)| (c - a).abs())
        .collect();
    Ok(BacktestReport {
        model: model.to_owned(),
        dataset: dataset_name.to_owned(),
        selected: selected.label(),
        levels: plan.levels.clone(),
        mean_quantile_loss: mean,
        per_series,
        coverage,
        calibration_error,
        tuning,
        forecasts,
        wall_clock: started.elapsed(),
    })
}

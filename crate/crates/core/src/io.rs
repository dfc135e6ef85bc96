//! Dataset ingestion and report/artifact writers.
//!
//! Every number written by this module is rounded to 6 significant digits.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;

use chrono::{NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::deepnpts::TrainingLog;
use crate::error::{Error, Result};
use crate::evaluation::{BacktestReport, CandidateScore};
use crate::forecaster::{DistributionSource, ForecastResult, StepContext};
use crate::timeseries::{Frequency, TimeSeries};

const TIMESTAMP_FORMAT: &str = "%Y-%m-%d %H:%M:%S";
const MAX_REPORTED_ERRORS: usize = 20;

/// Round to 6 significant digits.
pub fn round6(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.5e}").parse().unwrap_or(x)
}

/// Render with 6 significant digits and no trailing zeros.
pub fn fmt6(x: f64) -> String {
    format!("{}", round6(x))
}

pub fn format_timestamp(ts: NaiveDateTime) -> String {
    ts.format(TIMESTAMP_FORMAT).to_string()
}

/// Parse an ISO-8601 timestamp with at most minute precision. A bare date
/// means midnight.
pub fn parse_timestamp(s: &str) -> Result<NaiveDateTime> {
    let s = s.trim();
    for fmt in [
        "%Y-%m-%d %H:%M:%S",
        "%Y-%m-%dT%H:%M:%S",
        "%Y-%m-%d %H:%M",
        "%Y-%m-%dT%H:%M",
    ] {
        if let Ok(ts) = NaiveDateTime::parse_from_str(s, fmt) {
            if ts.and_utc().timestamp() % 60 != 0 {
                return Err(Error::Dataset(format!(
                    "timestamp '{s}' has sub-minute precision"
                )));
            }
            return Ok(ts);
        }
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .ok_or_else(|| Error::Dataset(format!("unparseable timestamp '{s}'")))
}

/// Where a dataset lives and how it is evaluated.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub path: PathBuf,
    pub freq: Frequency,
    pub prediction_length: usize,
    pub num_windows: usize,
    /// Required number of dynamic covariate rows, if declared.
    pub num_covariates: Option<usize>,
}

impl DatasetManifest {
    pub fn new(
        path: impl Into<PathBuf>,
        freq: Frequency,
        prediction_length: usize,
        num_windows: usize,
    ) -> Self {
        Self {
            path: path.into(),
            freq,
            prediction_length,
            num_windows,
            num_covariates: None,
        }
    }

    /// File stem, used as the dataset name in reports.
    pub fn name(&self) -> String {
        self.path
            .file_stem()
            .map_or_else(|| "dataset".into(), |s| s.to_string_lossy().into_owned())
    }
}

#[derive(Deserialize)]
struct RawSeries {
    #[serde(alias = "item_id")]
    id: String,
    start: String,
    target: Vec<Option<f64>>,
    #[serde(default)]
    feat_dynamic_real: Option<Vec<Vec<Option<f64>>>>,
}

fn parse_line(line: &str, manifest: &DatasetManifest) -> Result<TimeSeries> {
    let raw: RawSeries = serde_json::from_str(line).map_err(|e| Error::Dataset(e.to_string()))?;
    let start = parse_timestamp(&raw.start)?;
    let values = raw
        .target
        .iter()
        .enumerate()
        .map(|(i, v)| {
            v.filter(|x| x.is_finite()).ok_or_else(|| {
                Error::Dataset(format!(
                    "series '{}': non-finite target at index {i}",
                    raw.id
                ))
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    let series = TimeSeries::new(raw.id.clone(), start, manifest.freq, values)?;
    let rows = raw.feat_dynamic_real.unwrap_or_default();
    if let Some(expected) = manifest.num_covariates {
        if rows.len() != expected {
            return Err(Error::Dataset(format!(
                "series '{}': {} covariate rows, expected {expected}",
                raw.id,
                rows.len()
            )));
        }
    }
    let needed = series.len() + manifest.prediction_length;
    let rows = rows
        .into_iter()
        .enumerate()
        .map(|(r, row)| {
            if row.len() != needed {
                return Err(Error::Dataset(format!(
                    "series '{}': covariate row {r} has length {}, expected {needed} (target length + prediction length)",
                    raw.id,
                    row.len()
                )));
            }
            row.into_iter()
                .map(|v| {
                    v.filter(|x| x.is_finite())
                        .ok_or_else(|| Error::Dataset(format!("series '{}': non-finite covariate in row {r}", raw.id)))
                })
                .collect()
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    series.with_covariates(rows)
}

/// Load a line-delimited JSON panel. Blank lines are ignored; every
/// malformed line is reported with its 1-based line number.
pub fn load_dataset(manifest: &DatasetManifest) -> Result<Vec<TimeSeries>> {
    if manifest.prediction_length == 0 || manifest.num_windows == 0 {
        return Err(Error::InvalidParameter(
            "prediction length and number of windows must be positive".into(),
        ));
    }
    let reader = BufReader::new(File::open(&manifest.path)?);
    let mut panel = Vec::new();
    let mut errors = Vec::new();
    let mut seen = HashSet::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_line(&line, manifest) {
            Ok(s) if !seen.insert(s.id().to_owned()) => {
                errors.push(format!("line {}: duplicate series id '{}'", n + 1, s.id()));
            }
            Ok(s) => panel.push(s),
            Err(e) => errors.push(format!("line {}: {e}", n + 1)),
        }
    }
    if !errors.is_empty() {
        let total = errors.len();
        errors.truncate(MAX_REPORTED_ERRORS);
        let mut msg = format!("{total} malformed line(s)\n  {}", errors.join("\n  "));
        if total > MAX_REPORTED_ERRORS {
            msg.push_str(&format!("\n  ... and {} more", total - MAX_REPORTED_ERRORS));
        }
        return Err(Error::Dataset(msg));
    }
    if panel.is_empty() {
        return Err(Error::Dataset("no series".into()));
    }
    Ok(panel)
}

#[derive(Serialize)]
struct SeriesLine<'a> {
    id: &'a str,
    start: String,
    target: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    feat_dynamic_real: Option<Vec<Vec<f64>>>,
}

/// Write a panel in the format read by [`load_dataset`].
pub fn write_series_jsonl<W: Write>(panel: &[TimeSeries], mut w: W) -> Result<()> {
    for s in panel {
        let line = SeriesLine {
            id: s.id(),
            start: format_timestamp(s.start()),
            target: s.values().iter().copied().map(round6).collect(),
            feat_dynamic_real: s.covariates().map(|rows| {
                rows.iter()
                    .map(|r| r.iter().copied().map(round6).collect())
                    .collect()
            }),
        };
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// One forecast as written to disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRecord {
    pub series_id: String,
    pub forecast_start: String,
    /// Keyed by the level rendered with [`fmt6`].
    pub quantiles: BTreeMap<String, Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<Vec<Vec<f64>>>,
}

impl ForecastRecord {
    pub fn from_result(result: &ForecastResult, include_samples: bool) -> Self {
        let round = |v: &[f64]| v.iter().copied().map(round6).collect::<Vec<_>>();
        Self {
            series_id: result.series_id.clone(),
            forecast_start: format_timestamp(result.forecast_start),
            quantiles: result
                .levels
                .iter()
                .zip(&result.quantiles)
                .map(|(&l, q)| (fmt6(l), round(q)))
                .collect(),
            samples: include_samples.then(|| result.samples.iter().map(|p| round(p)).collect()),
        }
    }

    pub fn horizon(&self) -> Option<usize> {
        let mut lens = self.quantiles.values().map(Vec::len);
        let first = lens.next()?;
        lens.all(|l| l == first).then_some(first)
    }
}

pub fn write_forecasts<W: Write>(records: &[ForecastRecord], mut w: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_forecasts<R: BufRead>(r: R) -> Result<Vec<ForecastRecord>> {
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::Dataset(format!("line {}: {e}", n + 1)))?,
        );
    }
    Ok(out)
}

fn check_levels(reports: &[BacktestReport]) -> Result<&[f64]> {
    let levels = reports.first().map_or(&[][..], |r| &r.levels[..]);
    if reports.iter().any(|r| r.levels != levels) {
        return Err(Error::InvalidParameter(
            "reports use different quantile levels".into(),
        ));
    }
    Ok(levels)
}

/// One row per report: model, dataset, mean quantile loss, then coverage at
/// every level.
pub fn write_metrics_csv<W: Write>(reports: &[BacktestReport], w: W) -> Result<()> {
    let levels = check_levels(reports)?;
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec![
        "model".to_owned(),
        "dataset".into(),
        "mean_quantile_loss".into(),
    ];
    header.extend(levels.iter().map(|&l| format!("coverage_{}", fmt6(l))));
    out.write_record(&header)?;
    for r in reports {
        let mut row = vec![
            r.model.clone(),
            r.dataset.clone(),
            fmt6(r.mean_quantile_loss.value),
        ];
        row.extend(r.coverage.iter().map(|&c| fmt6(c)));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_calibration_csv<W: Write>(report: &BacktestReport, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["level", "coverage", "abs_error"])?;
    for ((&l, &c), &e) in report
        .levels
        .iter()
        .zip(&report.coverage)
        .zip(&report.calibration_error)
    {
        out.write_record([fmt6(l), fmt6(c), fmt6(e)])?;
    }
    out.flush()?;
    Ok(())
}

/// Per-series mean quantile loss, sorted by series id.
pub fn write_per_series_csv<W: Write>(report: &BacktestReport, w: W) -> Result<()> {
    let mut rows: Vec<_> = report.per_series.iter().collect();
    rows.sort_by(|a, b| a.0.cmp(&b.0));
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["series_id", "mean_quantile_loss", "normalized"])?;
    for (id, m) in rows {
        out.write_record([id.clone(), fmt6(m.value), m.normalized.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// Candidate scores in grid order; failed candidates have an empty score.
pub fn write_tuning_csv<W: Write>(
    scores: &[CandidateScore],
    selected: Option<usize>,
    w: W,
) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["candidate", "mean_quantile_loss", "selected", "error"])?;
    for (i, s) in scores.iter().enumerate() {
        out.write_record([
            s.label.clone(),
            s.score.map(fmt6).unwrap_or_default(),
            (selected == Some(i)).to_string(),
            s.error.clone().unwrap_or_default(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_training_log_csv<W: Write>(log: &TrainingLog, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["epoch", "loss"])?;
    for (e, &l) in log.epoch_losses.iter().enumerate() {
        out.write_record([(e + 1).to_string(), fmt6(l)])?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistogramBin {
    pub left: f64,
    pub right: f64,
    pub count: usize,
}

/// Equal-width histogram over `[min, max]`; the last bin is closed.
pub fn histogram(values: &[f64], bins: usize) -> Result<Vec<HistogramBin>> {
    if bins == 0 {
        return Err(Error::InvalidParameter(
            "at least one bin is required".into(),
        ));
    }
    if values.is_empty() {
        return Err(Error::InvalidParameter("no values".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("histogram input"));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo {
        (hi - lo) / bins as f64
    } else {
        1.0
    };
    let mut counts = vec![0usize; bins];
    for &v in values {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(b, count)| HistogramBin {
            left: lo + b as f64 * width,
            right: if b + 1 == bins && hi > lo {
                hi
            } else {
                lo + (b + 1) as f64 * width
            },
            count,
        })
        .collect())
}

pub fn write_histogram_csv<W: Write>(bins: &[HistogramBin], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["bin_left", "bin_right", "count"])?;
    for b in bins {
        out.write_record([fmt6(b.left), fmt6(b.right), b.count.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeRow {
    pub timestamp: NaiveDateTime,
    pub value: f64,
    pub probability: f64,
}

/// The sampling probability of every context index for the first
/// prediction step after the end of `series`.
pub fn probe<S: DistributionSource + ?Sized>(
    series: &TimeSeries,
    source: &S,
) -> Result<Vec<ProbeRow>> {
    let len = series.len();
    let context = source.context_length(series)?;
    if context == 0 || context > len {
        return Err(Error::InvalidParameter(format!(
            "context length {context} unusable for series '{}' of length {len}",
            series.id()
        )));
    }
    let start = len - context;
    let ctx = StepContext {
        series,
        window: &series.values()[start..],
        window_start: start,
    };
    let dist = source.distribution(&ctx)?;
    if dist.len() != context {
        return Err(Error::DimensionMismatch {
            expected: context,
            got: dist.len(),
        });
    }
    ctx.window_timestamps()?
        .into_iter()
        .zip(ctx.window)
        .zip(dist.probabilities())
        .map(|((timestamp, &value), &probability)| {
            Ok(ProbeRow {
                timestamp,
                value,
                probability,
            })
        })
        .collect()
}

/// Probabilities are written at full precision so the column sums to one.
pub fn write_probe_csv<W: Write>(rows: &[ProbeRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["timestamp", "value", "probability"])?;
    for r in rows {
        out.write_record([
            format_timestamp(r.timestamp),
            fmt6(r.value),
            format!("{:e}", r.probability),
        ])?;
    }
    out.flush()?;
    Ok(())
}

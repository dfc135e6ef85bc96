//! Monte Carlo sample paths and exact one-step predictive distributions.
//!
//! Every forecaster in this crate predicts by sampling an index of its
//! context window and copying the value stored there, so forecasts never
//! leave the range of observed values.

use chrono::NaiveDateTime;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::{kernel_weights, KernelSpec, SamplingDistribution};
use crate::timeseries::TimeSeries;

/// Default number of sample paths.
pub const DEFAULT_SAMPLES: usize = 100;

/// Quantile levels 0.05, 0.10, ..., 0.95.
pub fn default_levels() -> Vec<f64> {
    (1..=19).map(|k| f64::from(k) * 0.05).collect()
}

/// Exact discrete predictive distribution of one sampled step.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveDistribution {
    pub support: Vec<f64>,
    pub pmf: Vec<f64>,
    pub cdf: Vec<f64>,
}

/// Aggregate index probabilities by value: the mass of `v` is the summed
/// probability of every index holding `v`. The support is sorted ascending.
pub fn one_step_distribution(
    context_values: &[f64],
    dist: &SamplingDistribution,
) -> Result<PredictiveDistribution> {
    if context_values.len() != dist.len() {
        return Err(Error::DimensionMismatch {
            expected: dist.len(),
            got: context_values.len(),
        });
    }
    let mut pairs: Vec<(f64, f64)> = context_values
        .iter()
        .copied()
        .zip(dist.probabilities().iter().copied())
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut support: Vec<f64> = Vec::new();
    let mut pmf: Vec<f64> = Vec::new();
    for (v, p) in pairs {
        match support.last() {
            Some(&last) if last == v => *pmf.last_mut().unwrap() += p,
            _ => {
                support.push(v);
                pmf.push(p);
            }
        }
    }
    let cdf = pmf
        .iter()
        .scan(0.0, |acc, p| {
            *acc += p;
            Some(*acc)
        })
        .collect();
    Ok(PredictiveDistribution { support, pmf, cdf })
}

/// Linear interpolation between order statistics at zero-based rank
/// `level * (K - 1)`. `sorted` must be ascending.
pub fn empirical_quantile(sorted: &[f64], level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidLevel(level));
    }
    if sorted.is_empty() {
        return Err(Error::InvalidParameter("no samples".into()));
    }
    let rank = level * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = rank - lo as f64;
    Ok(sorted[lo] + frac * (sorted[hi] - sorted[lo]))
}

/// What a distribution provider sees at one step of one path.
#[derive(Debug, Clone, Copy)]
pub struct StepContext<'a> {
    pub series: &'a TimeSeries,
    /// The most recent `T` values: observations followed by this path's
    /// earlier predictions.
    pub window: &'a [f64],
    /// Absolute index of `window[0]`; the step predicts index
    /// `window_start + window.len()`.
    pub window_start: usize,
}

impl StepContext<'_> {
    pub fn target_index(&self) -> usize {
        self.window_start + self.window.len()
    }

    pub fn window_timestamps(&self) -> Result<Vec<NaiveDateTime>> {
        (self.window_start..self.target_index())
            .map(|i| self.series.timestamp_at(i))
            .collect()
    }
}

/// Supplies the per-step sampling distribution for a forecaster.
pub trait DistributionSource: Sync {
    /// Context window length `T` used for `series`.
    fn context_length(&self, series: &TimeSeries) -> Result<usize>;

    fn distribution(&self, ctx: &StepContext<'_>) -> Result<SamplingDistribution>;

    /// Whether the distribution depends on window values. When it does not,
    /// one distribution per step is shared by all paths.
    fn uses_values(&self) -> bool {
        true
    }
}

/// Local kernel forecaster over the full (optionally capped) history.
#[derive(Debug, Clone, Copy)]
pub struct KernelSource {
    pub spec: KernelSpec,
    pub max_context: Option<usize>,
}

impl DistributionSource for KernelSource {
    fn context_length(&self, series: &TimeSeries) -> Result<usize> {
        Ok(self
            .max_context
            .map_or(series.len(), |cap| cap.min(series.len()))
            .max(1))
    }

    fn distribution(&self, ctx: &StepContext<'_>) -> Result<SamplingDistribution> {
        let target = ctx.series.timestamp_at(ctx.target_index())?;
        let spec = KernelSpec {
            freq: ctx.series.freq(),
            ..self.spec
        };
        kernel_weights(&spec, &ctx.window_timestamps()?, target)
    }

    fn uses_values(&self) -> bool {
        false
    }
}

/// Seasonal naive: a point mass one season back, or on the last value when
/// the history is shorter than a season.
#[derive(Debug, Clone, Copy)]
pub struct SeasonalNaiveSource;

impl DistributionSource for SeasonalNaiveSource {
    fn context_length(&self, series: &TimeSeries) -> Result<usize> {
        Ok(series.freq().season_length().min(series.len()))
    }

    fn distribution(&self, ctx: &StepContext<'_>) -> Result<SamplingDistribution> {
        let len = ctx.window.len();
        let season = ctx.series.freq().season_length();
        let index = if len >= season { len - season } else { len - 1 };
        SamplingDistribution::point_mass(len, index)
    }

    fn uses_values(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastOptions {
    pub samples: usize,
    pub seed: u64,
    pub levels: Vec<f64>,
}

impl Default for ForecastOptions {
    fn default() -> Self {
        Self {
            samples: DEFAULT_SAMPLES,
            seed: 0,
            levels: default_levels(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastResult {
    pub series_id: String,
    /// Absolute index of the first forecast step.
    pub start_index: usize,
    pub forecast_start: NaiveDateTime,
    /// `K x H` sample paths.
    pub samples: Vec<Vec<f64>>,
    pub levels: Vec<f64>,
    /// One `H`-vector per entry of `levels`.
    pub quantiles: Vec<Vec<f64>>,
}

impl ForecastResult {
    pub fn horizon(&self) -> usize {
        self.quantiles.first().map_or(0, Vec::len)
    }

    pub fn quantile(&self, level: f64) -> Option<&[f64]> {
        self.levels
            .iter()
            .position(|&l| (l - level).abs() < 1e-12)
            .map(|i| self.quantiles[i].as_slice())
    }
}

/// Generate `opts.samples` autoregressive paths of length `horizon`.
///
/// Path `k` uses its own generator seeded with `opts.seed + k`, so results do
/// not depend on how paths are scheduled across threads.
pub fn forecast_paths<S: DistributionSource + ?Sized>(
    series: &TimeSeries,
    source: &S,
    horizon: usize,
    opts: &ForecastOptions,
) -> Result<ForecastResult> {
    if horizon == 0 || opts.samples == 0 {
        return Err(Error::InvalidParameter(
            "horizon and sample count must be positive".into(),
        ));
    }
    if let Some(&bad) = opts.levels.iter().find(|&&l| !(l > 0.0 && l < 1.0)) {
        return Err(Error::InvalidLevel(bad));
    }
    let len = series.len();
    let context = source.context_length(series)?;
    if context == 0 || context > len {
        return Err(Error::InvalidParameter(format!(
            "context length {context} unusable for series '{}' of length {len}",
            series.id()
        )));
    }
    let first_start = len - context;
    let wrap = |path: usize, step: usize, e: Error| Error::Forecast {
        series: series.id().to_owned(),
        path,
        step,
        source: Box::new(e),
    };

    let shared: Option<Vec<SamplingDistribution>> = if source.uses_values() {
        None
    } else {
        // Window values are ignored by value-independent sources.
        let mut buffer = series.values()[first_start..].to_vec();
        let last = buffer[buffer.len() - 1];
        buffer.resize(context + horizon, last);
        let dists = (0..horizon)
            .map(|h| {
                let ctx = StepContext {
                    series,
                    window: &buffer[h..h + context],
                    window_start: first_start + h,
                };
                source.distribution(&ctx).map_err(|e| wrap(0, h, e))
            })
            .collect::<Result<Vec<_>>>()?;
        Some(dists)
    };

    let samples = (0..opts.samples)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(k as u64));
            let mut buffer = Vec::with_capacity(context + horizon);
            buffer.extend_from_slice(&series.values()[first_start..]);
            for h in 0..horizon {
                let index = match &shared {
                    Some(dists) => dists[h].sample_index(&mut rng),
                    None => {
                        let ctx = StepContext {
                            series,
                            window: &buffer[h..h + context],
                            window_start: first_start + h,
                        };
                        let dist = source.distribution(&ctx).map_err(|e| wrap(k, h, e))?;
                        if dist.len() != context {
                            return Err(wrap(
                                k,
                                h,
                                Error::DimensionMismatch {
                                    expected: context,
                                    got: dist.len(),
                                },
                            ));
                        }
                        dist.sample_index(&mut rng)
                    }
                };
                let value = buffer[h + index];
                buffer.push(value);
            }
            Ok(buffer.split_off(context))
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;

    let mut quantiles = vec![Vec::with_capacity(horizon); opts.levels.len()];
    let mut column = Vec::with_capacity(opts.samples);
    for h in 0..horizon {
        column.clear();
        column.extend(samples.iter().map(|path| path[h]));
        column.sort_by(f64::total_cmp);
        for (curve, &level) in quantiles.iter_mut().zip(&opts.levels) {
            curve.push(empirical_quantile(&column, level)?);
        }
    }

    Ok(ForecastResult {
        series_id: series.id().to_owned(),
        start_index: len,
        forecast_start: series.timestamp_at(len)?,
        samples,
        levels: opts.levels.clone(),
        quantiles,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timeseries::Frequency;
    use chrono::NaiveDate;
    use proptest::prelude::*;

    fn start() -> NaiveDateTime {
        NaiveDate::from_ymd_opt(2020, 3, 1)
            .unwrap()
            .and_hms_opt(0, 0, 0)
            .unwrap()
    }

    fn series(values: Vec<f64>) -> TimeSeries {
        TimeSeries::new("s", start(), Frequency::hourly(), values).unwrap()
    }

    fn uniform() -> KernelSource {
        KernelSource {
            spec: KernelSpec::uniform(),
            max_context: None,
        }
    }

    /// Point mass on the most recent index.
    struct LastValue;

    impl DistributionSource for LastValue {
        fn context_length(&self, series: &TimeSeries) -> Result<usize> {
            Ok(series.len())
        }
        fn distribution(&self, ctx: &StepContext<'_>) -> Result<SamplingDistribution> {
            SamplingDistribution::point_mass(ctx.window.len(), ctx.window.len() - 1)
        }
    }

    struct Failing;

    impl DistributionSource for Failing {
        fn context_length(&self, _: &TimeSeries) -> Result<usize> {
            Ok(1)
        }
        fn distribution(&self, ctx: &StepContext<'_>) -> Result<SamplingDistribution> {
            if ctx.target_index() > 3 {
                Err(Error::InvalidParameter("boom".into()))
            } else {
                SamplingDistribution::uniform(1)
            }
        }
    }

    #[test]
    fn one_step_examples() {
        let d = one_step_distribution(&[5.0], &SamplingDistribution::uniform(1).unwrap()).unwrap();
        assert_eq!((d.support, d.pmf, d.cdf), (vec![5.0], vec![1.0], vec![1.0]));

        let q = SamplingDistribution::new(vec![0.2, 0.5, 0.3]).unwrap();
        let d = one_step_distribution(&[1.0, 2.0, 1.0], &q).unwrap();
        assert_eq!(d.support, vec![1.0, 2.0]);
        assert!((d.pmf[0] - 0.5).abs() < 1e-15 && (d.pmf[1] - 0.5).abs() < 1e-15);
        assert!((d.cdf[1] - 1.0).abs() < 1e-15);

        let d = one_step_distribution(&[3.0; 3], &q).unwrap();
        assert_eq!(d.support, vec![3.0]);
        assert!((d.pmf[0] - 1.0).abs() < 1e-15);

        assert!(matches!(
            one_step_distribution(&[1.0, 2.0], &q),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn quantile_examples() {
        assert_eq!(
            empirical_quantile(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.5).unwrap(),
            3.0
        );
        assert_eq!(empirical_quantile(&[1.0, 2.0], 0.25).unwrap(), 1.25);
        assert_eq!(empirical_quantile(&[7.0; 9], 0.9).unwrap(), 7.0);
        assert!(matches!(
            empirical_quantile(&[1.0], 0.0),
            Err(Error::InvalidLevel(_))
        ));
        assert!(matches!(
            empirical_quantile(&[1.0], 1.0),
            Err(Error::InvalidLevel(_))
        ));
    }

    #[test]
    fn constant_series_forecasts_constant() {
        let s = series(vec![4.5; 30]);
        let sources: Vec<Box<dyn DistributionSource>> = vec![
            Box::new(uniform()),
            Box::new(KernelSource {
                spec: KernelSpec::exponential(0.5),
                max_context: None,
            }),
            Box::new(KernelSource {
                spec: KernelSpec::seasonal_uniform(Frequency::hourly()),
                max_context: Some(10),
            }),
            Box::new(SeasonalNaiveSource),
        ];
        for source in &sources {
            let f = forecast_paths(&s, source.as_ref(), 5, &ForecastOptions::default()).unwrap();
            assert!(f.samples.iter().flatten().all(|&v| v == 4.5));
            assert!(f.quantiles.iter().flatten().all(|&v| v == 4.5));
        }
    }

    #[test]
    fn uniform_two_point_median() {
        let s = series(vec![1.0, 2.0]);
        let opts = ForecastOptions {
            samples: 100_000,
            seed: 9,
            levels: vec![0.5],
        };
        let f = forecast_paths(&s, &uniform(), 1, &opts).unwrap();
        let ones = f.samples.iter().filter(|p| p[0] == 1.0).count();
        assert!((ones as f64 / 1e5 - 0.5).abs() < 0.01);
        // The sample median of two atoms is 1.5 only on an exact tie; it
        // interpolates between the middle order statistics otherwise.
        let expected = match ones.cmp(&50_000) {
            std::cmp::Ordering::Greater => 1.0,
            std::cmp::Ordering::Less => 2.0,
            std::cmp::Ordering::Equal => 1.5,
        };
        assert_eq!(f.quantile(0.5).unwrap()[0], expected);
        let exact =
            one_step_distribution(&[1.0, 2.0], &SamplingDistribution::uniform(2).unwrap()).unwrap();
        assert_eq!(exact.pmf, vec![0.5, 0.5]);
    }

    #[test]
    fn last_value_kernel_is_naive() {
        let s = series(vec![3.0, 1.0, 8.0]);
        let f = forecast_paths(&s, &LastValue, 2, &ForecastOptions::default()).unwrap();
        assert!(f.samples.iter().all(|p| p == &vec![8.0, 8.0]));
    }

    #[test]
    fn seasonal_naive_repeats_last_season() {
        let values: Vec<f64> = (0..50).map(|i| f64::from(i % 24)).collect();
        let s = series(values);
        let f = forecast_paths(&s, &SeasonalNaiveSource, 30, &ForecastOptions::default()).unwrap();
        let expected: Vec<f64> = (50..80).map(|i| f64::from(i % 24)).collect();
        assert_eq!(f.samples[0], expected);
    }

    #[test]
    fn provider_failure_carries_position() {
        let s = series(vec![1.0, 2.0]);
        let err = forecast_paths(&s, &Failing, 4, &ForecastOptions::default()).unwrap_err();
        match err {
            Error::Forecast { step, .. } => assert_eq!(step, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn invalid_arguments() {
        let s = series(vec![1.0]);
        assert!(forecast_paths(&s, &uniform(), 0, &ForecastOptions::default()).is_err());
        let opts = ForecastOptions {
            samples: 0,
            ..Default::default()
        };
        assert!(forecast_paths(&s, &uniform(), 1, &opts).is_err());
        let opts = ForecastOptions {
            levels: vec![1.5],
            ..Default::default()
        };
        assert!(forecast_paths(&s, &uniform(), 1, &opts).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn closure_monotone_quantiles_and_reproducible(
            values in prop::collection::vec(-100.0f64..100.0, 1..40),
            lambda in 0.05f64..2.0,
            seed in any::<u64>(),
            kind in 0usize..4,
        ) {
            let s = series(values.clone());
            let spec = match kind {
                0 => KernelSpec::uniform(),
                1 => KernelSpec::exponential(lambda),
                2 => KernelSpec::seasonal_uniform(Frequency::hourly()),
                _ => KernelSpec::seasonal_exponential(lambda, Frequency::hourly()),
            };
            let source = KernelSource { spec, max_context: None };
            let opts = ForecastOptions { samples: 50, seed, levels: default_levels() };
            let f = forecast_paths(&s, &source, 6, &opts).unwrap();
            let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(f.samples.iter().flatten().all(|&v| lo <= v && v <= hi));
            for pair in f.quantiles.windows(2) {
                prop_assert!(pair[0].iter().zip(&pair[1]).all(|(a, b)| a <= b));
            }
            let g = forecast_paths(&s, &source, 6, &opts).unwrap();
            prop_assert_eq!(f, g);
        }
    }
}

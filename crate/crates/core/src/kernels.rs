//! Sampling distributions over context indices for the local forecasters.

use chrono::NaiveDateTime;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timeseries::{feature_distance, seasonal_positions, Frequency};

/// The grid of kernel rates searched when tuning exponential kernels.
pub const LAMBDA_GRID: [f64; 5] = [1.0, 0.75, 0.5, 0.25, 0.1];

const NORMALIZATION_TOL: f64 = 1e-9;

/// Categorical distribution over the indices `0..T` of a context window.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingDistribution {
    probabilities: Vec<f64>,
    cumulative: Vec<f64>,
}

impl SamplingDistribution {
    /// Validate an already normalized probability vector.
    pub fn new(probabilities: Vec<f64>) -> Result<Self> {
        if probabilities.is_empty() {
            return Err(Error::EmptyContext);
        }
        if probabilities.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidParameter(
                "probabilities must be finite and non-negative".into(),
            ));
        }
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidParameter(format!(
                "probabilities sum to {total}"
            )));
        }
        Ok(Self::with_cumulative(probabilities))
    }

    /// Normalize non-negative weights. Fails if they are all zero.
    pub fn from_weights(mut weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::EmptyContext);
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidParameter(
                "weights must be finite and non-negative".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidParameter("weights sum to zero".into()));
        }
        weights.iter_mut().for_each(|w| *w /= total);
        Ok(Self::with_cumulative(weights))
    }

    pub fn uniform(len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::EmptyContext);
        }
        Ok(Self::with_cumulative(vec![1.0 / len as f64; len]))
    }

    pub fn point_mass(len: usize, index: usize) -> Result<Self> {
        if index >= len {
            return Err(Error::InvalidParameter(format!(
                "index {index} outside 0..{len}"
            )));
        }
        let mut p = vec![0.0; len];
        p[index] = 1.0;
        Ok(Self::with_cumulative(p))
    }

    fn with_cumulative(probabilities: Vec<f64>) -> Self {
        let cumulative = probabilities
            .iter()
            .scan(0.0, |acc, p| {
                *acc += p;
                Some(*acc)
            })
            .collect();
        Self {
            probabilities,
            cumulative,
        }
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }

    /// Draw one index by inverse CDF using a single uniform variate.
    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative.last().expect("non-empty distribution");
        let u = rng.gen::<f64>() * total;
        self.cumulative
            .partition_point(|&c| c <= u)
            .min(self.len() - 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelKind {
    Uniform,
    Exponential,
    SeasonalUniform,
    SeasonalExponential,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub kind: KernelKind,
    /// Kernel rate; ignored by the uniform kinds.
    pub lambda: f64,
    /// Calendar of the series; only read by the seasonal kinds.
    pub freq: Frequency,
}

impl KernelSpec {
    pub fn uniform() -> Self {
        Self {
            kind: KernelKind::Uniform,
            lambda: 0.0,
            freq: Frequency::daily(),
        }
    }

    pub fn exponential(lambda: f64) -> Self {
        Self {
            kind: KernelKind::Exponential,
            lambda,
            freq: Frequency::daily(),
        }
    }

    pub fn seasonal_uniform(freq: Frequency) -> Self {
        Self {
            kind: KernelKind::SeasonalUniform,
            lambda: 0.0,
            freq,
        }
    }

    pub fn seasonal_exponential(lambda: f64, freq: Frequency) -> Self {
        Self {
            kind: KernelKind::SeasonalExponential,
            lambda,
            freq,
        }
    }

    fn checked_lambda(&self) -> Result<f64> {
        if !self.lambda.is_finite() || self.lambda <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "kernel rate must be finite and positive, got {}",
                self.lambda
            )));
        }
        Ok(self.lambda)
    }
}

/// Sampling distribution over `context_timestamps` for a forecast at
/// `target_timestamp`.
///
/// The exponential kernel measures distance in index offsets: context index
/// `t` of `T` sits `T - t` steps before the target. The seasonal kernels use
/// the L1 distance between raw within-season calendar positions
/// (see [`seasonal_positions`]). Exponential weights are shifted so the
/// largest is `exp(0)` before normalizing.
pub fn kernel_weights(
    spec: &KernelSpec,
    context_timestamps: &[NaiveDateTime],
    target_timestamp: NaiveDateTime,
) -> Result<SamplingDistribution> {
    let len = context_timestamps.len();
    if len == 0 {
        return Err(Error::EmptyContext);
    }
    if context_timestamps.iter().any(|t| *t >= target_timestamp) {
        return Err(Error::InvalidParameter(
            "target timestamp must follow every context timestamp".into(),
        ));
    }
    match spec.kind {
        KernelKind::Uniform => SamplingDistribution::uniform(len),
        KernelKind::Exponential => {
            let lambda = spec.checked_lambda()?;
            // offset(t) = len - t, the most recent index has offset 1.
            let weights = (0..len)
                .map(|t| (-lambda * (len - 1 - t) as f64).exp())
                .collect();
            SamplingDistribution::from_weights(weights)
        }
        KernelKind::SeasonalUniform | KernelKind::SeasonalExponential => {
            let target = seasonal_positions(spec.freq, target_timestamp);
            let distances = context_timestamps
                .iter()
                .map(|&t| feature_distance(&target, &seasonal_positions(spec.freq, t)))
                .collect::<Result<Vec<_>>>()?;
            let min = distances.iter().copied().fold(f64::INFINITY, f64::min);
            let weights = if spec.kind == KernelKind::SeasonalUniform {
                let tol = 1e-9 * (1.0 + min.abs());
                distances
                    .iter()
                    .map(|&d| if d - min <= tol { 1.0 } else { 0.0 })
                    .collect()
            } else {
                let lambda = spec.checked_lambda()?;
                distances
                    .iter()
                    .map(|&d| (-lambda * (d - min)).exp())
                    .collect()
            };
            SamplingDistribution::from_weights(weights)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{Duration, NaiveDate};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn hourly_window(len: usize, target: NaiveDateTime) -> Vec<NaiveDateTime> {
        (0..len)
            .map(|i| target - Duration::hours((len - i) as i64))
            .collect()
    }

    fn noon() -> NaiveDateTime {
        NaiveDate::from_ymd_opt(2015, 1, 5)
            .unwrap()
            .and_hms_opt(12, 0, 0)
            .unwrap()
    }

    fn assert_close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn uniform_kernel() {
        let d = kernel_weights(&KernelSpec::uniform(), &hourly_window(4, noon()), noon()).unwrap();
        assert_eq!(d.probabilities(), &[0.25; 4]);
    }

    #[test]
    fn exponential_kernel_closed_form() {
        let spec = KernelSpec::exponential(std::f64::consts::LN_2);
        let d = kernel_weights(&spec, &hourly_window(2, noon()), noon()).unwrap();
        assert_close(d.probabilities(), &[1.0 / 3.0, 2.0 / 3.0], 1e-12);
        let spec = KernelSpec::exponential(1e-15);
        let d = kernel_weights(&spec, &hourly_window(3, noon()), noon()).unwrap();
        assert_close(d.probabilities(), &[1.0 / 3.0; 3], 1e-12);
    }

    #[test]
    fn exponential_kernel_large_rate_does_not_underflow() {
        let spec = KernelSpec::exponential(1e4);
        let d = kernel_weights(&spec, &hourly_window(500, noon()), noon()).unwrap();
        assert_eq!(d.probabilities()[499], 1.0);
    }

    #[test]
    fn seasonal_exponential_concentrates_on_same_hour() {
        let spec = KernelSpec::seasonal_exponential(50.0, Frequency::hourly());
        let d = kernel_weights(&spec, &hourly_window(48, noon()), noon()).unwrap();
        let p = d.probabilities();
        // indices 0 and 24 are 48 and 24 steps back.
        assert!(
            (p[0] - 0.5).abs() < 1e-9 && (p[24] - 0.5).abs() < 1e-9,
            "{p:?}"
        );
    }

    #[test]
    fn seasonal_uniform_spreads_over_past_seasons() {
        let spec = KernelSpec::seasonal_uniform(Frequency::hourly());
        let d = kernel_weights(&spec, &hourly_window(72, noon()), noon()).unwrap();
        let p = d.probabilities();
        for (i, &pi) in p.iter().enumerate() {
            let expected = if i % 24 == 0 { 1.0 / 3.0 } else { 0.0 };
            assert!((pi - expected).abs() < 1e-12);
        }
        // no index shares the target hour, the nearest hour takes all mass.
        let d = kernel_weights(&spec, &hourly_window(3, noon()), noon()).unwrap();
        assert_eq!(d.probabilities()[2], 1.0);
        let day = Frequency::daily();
        let spec = KernelSpec::seasonal_uniform(day);
        let start = noon() - Duration::days(3);
        let ctx: Vec<_> = (0..3).map(|i| start + Duration::days(i)).collect();
        let d = kernel_weights(&spec, &ctx, noon()).unwrap();
        // Fri, Sat, Sun before a Monday. Positions do not wrap, so Friday (4)
        // is the closest to Monday (0).
        assert_eq!(d.probabilities(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn kernel_errors() {
        assert!(matches!(
            kernel_weights(&KernelSpec::uniform(), &[], noon()),
            Err(Error::EmptyContext)
        ));
        let ctx = hourly_window(3, noon());
        assert!(kernel_weights(&KernelSpec::exponential(f64::NAN), &ctx, noon()).is_err());
        assert!(kernel_weights(&KernelSpec::exponential(f64::INFINITY), &ctx, noon()).is_err());
        assert!(kernel_weights(&KernelSpec::uniform(), &ctx, ctx[1]).is_err());
    }

    #[test]
    fn sampling_point_mass_and_determinism() {
        let d = SamplingDistribution::new(vec![0.0, 1.0, 0.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!((0..1000).all(|_| d.sample_index(&mut rng) == 1));
        let d = SamplingDistribution::new(vec![0.2, 0.3, 0.5]).unwrap();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..100)
                .map(|_| d.sample_index(&mut rng))
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(11), draw(11));
        assert_ne!(draw(11), draw(12));
    }

    #[test]
    fn sampling_frequency_concentrates() {
        let d = SamplingDistribution::new(vec![0.5, 0.5]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 1_000_000;
        let zeros = (0..n).filter(|_| d.sample_index(&mut rng) == 0).count();
        let freq = zeros as f64 / n as f64;
        assert!((0.498..=0.502).contains(&freq), "{freq}");
    }

    #[test]
    fn distribution_validation() {
        assert!(SamplingDistribution::new(vec![0.5, 0.6]).is_err());
        assert!(SamplingDistribution::new(vec![-0.5, 1.5]).is_err());
        assert!(SamplingDistribution::from_weights(vec![0.0, 0.0]).is_err());
        assert!(SamplingDistribution::uniform(0).is_err());
    }

    proptest! {
        #[test]
        fn kernels_produce_valid_monotone_distributions(
            len in 1usize..200,
            lambda in 1e-6f64..20.0,
            kind in 0usize..4,
        ) {
            let spec = match kind {
                0 => KernelSpec::uniform(),
                1 => KernelSpec::exponential(lambda),
                2 => KernelSpec::seasonal_uniform(Frequency::hourly()),
                _ => KernelSpec::seasonal_exponential(lambda, Frequency::hourly()),
            };
            let d = kernel_weights(&spec, &hourly_window(len, noon()), noon()).unwrap();
            let p = d.probabilities();
            prop_assert_eq!(p.len(), len);
            prop_assert!(p.iter().all(|&x| x >= 0.0));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            if kind == 1 {
                prop_assert!(p.windows(2).all(|w| w[0] <= w[1]));
            }
        }

        #[test]
        fn exponential_shift_invariance(len in 1usize..50, lambda in 1e-3f64..5.0, shift in 1i64..100) {
            // Moving the whole window further into the past keeps the same
            // index offsets, so the distribution must not change.
            let spec = KernelSpec::exponential(lambda);
            let a = kernel_weights(&spec, &hourly_window(len, noon()), noon()).unwrap();
            let earlier: Vec<_> = hourly_window(len, noon())
                .into_iter()
                .map(|t| t - Duration::hours(shift))
                .collect();
            let b = kernel_weights(&spec, &earlier, noon() - Duration::hours(shift)).unwrap();
            prop_assert_eq!(a.probabilities(), b.probabilities());
            // factoring exp(-lambda * c) out of explicit weights
            let raw: Vec<f64> = (0..len)
                .map(|t| (-lambda * ((len - t) as f64 + shift as f64)).exp())
                .collect();
            let total: f64 = raw.iter().sum();
            if total > 0.0 {
                for (x, y) in a.probabilities().iter().zip(raw.iter().map(|w| w / total)) {
                    prop_assert!((x - y).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn uniform_is_exponential_limit(len in 1usize..300) {
            let ctx = hourly_window(len, noon());
            let u = kernel_weights(&KernelSpec::uniform(), &ctx, noon()).unwrap();
            let e = kernel_weights(&KernelSpec::exponential(1e-12), &ctx, noon()).unwrap();
            for (a, b) in u.probabilities().iter().zip(e.probabilities()) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn strictly_increasing_for_positive_rate(len in 2usize..40, lambda in 0.01f64..5.0) {
            let d = kernel_weights(&KernelSpec::exponential(lambda), &hourly_window(len, noon()), noon()).unwrap();
            prop_assert!(d.probabilities().windows(2).all(|w| w[0] < w[1]));
        }
    }
}

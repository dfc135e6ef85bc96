use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timeseries::{time_features, Frequency, TimeSeries};

const SCALE_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InputScaling {
    None,
    Standardization,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LossScaling {
    None,
    MinMax,
}

/// Window statistics used for input and loss scaling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleStats {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl ScaleStats {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self {
            mean,
            std: var.sqrt(),
            min,
            max,
        }
    }

    /// Divisor applied to the instance loss.
    pub fn loss_scale(&self, mode: LossScaling) -> f64 {
        match mode {
            LossScaling::None => 1.0,
            LossScaling::MinMax => {
                let range = self.max - self.min;
                if range < SCALE_FLOOR {
                    1.0
                } else {
                    range
                }
            }
        }
    }
}

/// Scale a context window for use as network input.
pub fn scale_inputs(values: &[f64], mode: InputScaling) -> (Vec<f64>, ScaleStats) {
    let stats = ScaleStats::of(values);
    let scaled = match mode {
        InputScaling::None => values.to_vec(),
        InputScaling::Standardization => {
            let std = if stats.std < SCALE_FLOOR {
                1.0
            } else {
                stats.std
            };
            values.iter().map(|v| (v - stats.mean) / std).collect()
        }
    };
    (scaled, stats)
}

/// Which covariate rows accompany every window: calendar features for the
/// frequency, the series' dynamic covariates, and optionally one static
/// per-series value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureLayout {
    pub freq: Frequency,
    pub num_dynamic: usize,
    pub static_feature: bool,
}

impl FeatureLayout {
    pub fn num_covariates(&self) -> usize {
        self.freq.num_time_features() + self.num_dynamic + usize::from(self.static_feature)
    }

    /// Network input size for a context of `context_length` values.
    pub fn input_dim(&self, context_length: usize) -> usize {
        context_length + self.num_covariates() * (context_length + 1)
    }

    pub fn check(&self, series: &TimeSeries) -> Result<()> {
        if series.freq() != self.freq || series.num_covariates() != self.num_dynamic {
            return Err(Error::InvalidSeries {
                id: series.id().to_owned(),
                reason: format!(
                    "expected frequency {} with {} covariates, found {} with {}",
                    self.freq,
                    self.num_dynamic,
                    series.freq(),
                    series.num_covariates()
                ),
            });
        }
        Ok(())
    }

    /// Covariates for absolute indices `start..=start + context_length`,
    /// one row per feature, flattened row-major.
    pub fn window_covariates(
        &self,
        series: &TimeSeries,
        start: usize,
        context_length: usize,
    ) -> Result<Vec<f64>> {
        let cols = context_length + 1;
        let n_time = self.freq.num_time_features();
        let mut out = vec![0.0; self.num_covariates() * cols];
        for c in 0..cols {
            let index = start + c;
            let f = time_features(self.freq, series.timestamp_at(index)?);
            for (r, v) in f.as_slice().iter().enumerate() {
                out[r * cols + c] = *v;
            }
            for d in 0..self.num_dynamic {
                out[(n_time + d) * cols + c] =
                    series
                        .covariate(d, index)
                        .ok_or_else(|| Error::InvalidSeries {
                            id: series.id().to_owned(),
                            reason: format!("covariate {d} missing at index {index}"),
                        })?;
            }
        }
        if self.static_feature {
            let v = static_value(series.id());
            let row = n_time + self.num_dynamic;
            out[row * cols..].iter_mut().for_each(|x| *x = v);
        }
        Ok(out)
    }
}

/// Stable per-series value in `[-0.5, 0.5)` derived from the series id
/// (FNV-1a), so it does not depend on the order of series in a panel.
pub fn static_value(id: &str) -> f64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in id.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    (h >> 11) as f64 / (1u64 << 53) as f64 - 0.5
}

/// One training example: a context window and the observation after it.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingInstance {
    pub series_id: String,
    /// Absolute index of the first context value.
    pub window_start: usize,
    pub context_values: Vec<f64>,
    /// `D x (T + 1)` row-major.
    pub context_covariates: Vec<f64>,
    pub target: f64,
    pub scale_stats: ScaleStats,
}

impl TrainingInstance {
    pub fn input(&self, scaling: InputScaling) -> Vec<f64> {
        let (mut x, _) = scale_inputs(&self.context_values, scaling);
        x.extend_from_slice(&self.context_covariates);
        x
    }
}

#[derive(Debug, Clone, Default)]
pub struct Augmentation {
    pub instances: Vec<TrainingInstance>,
    pub warning: Option<String>,
}

/// Sliding windows ending at the last `prediction_length` available targets,
/// oldest first. Series shorter than `context_length + 1` yield no
/// instances and a warning.
pub fn augment(
    series: &TimeSeries,
    layout: &FeatureLayout,
    context_length: usize,
    prediction_length: usize,
) -> Result<Augmentation> {
    layout.check(series)?;
    let len = series.len();
    if context_length == 0 {
        return Err(Error::InvalidParameter(
            "context length must be positive".into(),
        ));
    }
    if len < context_length + 1 {
        return Ok(Augmentation {
            instances: Vec::new(),
            warning: Some(format!(
                "series '{}' has {len} values, needs at least {} for context length {context_length}",
                series.id(),
                context_length + 1
            )),
        });
    }
    let count = prediction_length.min(len - context_length);
    let instances = (len - count..len)
        .map(|target| {
            let start = target - context_length;
            let values = series.values()[start..target].to_vec();
            Ok(TrainingInstance {
                series_id: series.id().to_owned(),
                window_start: start,
                scale_stats: ScaleStats::of(&values),
                context_covariates: layout.window_covariates(series, start, context_length)?,
                context_values: values,
                target: series.values()[target],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Augmentation {
        instances,
        warning: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn daily(len: usize) -> TimeSeries {
        let start = NaiveDate::from_ymd_opt(2021, 2, 1)
            .unwrap()
            .and_hms_opt(0, 0, 0)
            .unwrap();
        TimeSeries::new(
            "feb",
            start,
            Frequency::daily(),
            (0..len).map(|i| i as f64).collect(),
        )
        .unwrap()
    }

    fn layout() -> FeatureLayout {
        FeatureLayout {
            freq: Frequency::daily(),
            num_dynamic: 0,
            static_feature: false,
        }
    }

    #[test]
    fn scaling_examples() {
        let (x, stats) = scale_inputs(&[2.0, 2.0, 2.0], InputScaling::Standardization);
        assert_eq!(x, vec![0.0; 3]);
        assert_eq!(stats.std, 0.0);
        assert_eq!(stats.loss_scale(LossScaling::MinMax), 1.0);
        let (x, _) = scale_inputs(&[0.0, 10.0], InputScaling::Standardization);
        assert_eq!(x, vec![-1.0, 1.0]);
        let (x, stats) = scale_inputs(&[3.0, -1.0], InputScaling::None);
        assert_eq!(x, vec![3.0, -1.0]);
        assert_eq!(stats.loss_scale(LossScaling::MinMax), 4.0);
        assert_eq!(stats.loss_scale(LossScaling::None), 1.0);
    }

    #[test]
    fn sliding_windows() {
        let aug = augment(&daily(21), &layout(), 14, 7).unwrap();
        assert!(aug.warning.is_none());
        assert_eq!(aug.instances.len(), 7);
        for (k, inst) in aug.instances.iter().enumerate() {
            let expected: Vec<f64> = (k..k + 14).map(|i| i as f64).collect();
            assert_eq!(inst.context_values, expected);
            assert_eq!(inst.target, (14 + k) as f64);
            assert_eq!(inst.context_covariates.len(), 3 * 15);
        }
        assert_eq!(
            augment(&daily(15), &layout(), 14, 7)
                .unwrap()
                .instances
                .len(),
            1
        );
        let short = augment(&daily(14), &layout(), 14, 7).unwrap();
        assert!(short.instances.is_empty() && short.warning.is_some());
    }

    #[test]
    fn covariate_rows() {
        let start = NaiveDate::from_ymd_opt(2021, 2, 1)
            .unwrap()
            .and_hms_opt(0, 0, 0)
            .unwrap();
        let s = TimeSeries::new("x", start, Frequency::daily(), vec![1.0; 4])
            .unwrap()
            .with_covariates(vec![vec![10.0, 11.0, 12.0, 13.0, 14.0]])
            .unwrap();
        let l = FeatureLayout {
            freq: Frequency::daily(),
            num_dynamic: 1,
            static_feature: true,
        };
        let cov = l.window_covariates(&s, 2, 2).unwrap();
        assert_eq!(cov.len(), 5 * 3);
        // 2021-02-03 is a Wednesday.
        assert!((cov[0] - (2.0 / 7.0 - 0.5)).abs() < 1e-15);
        assert_eq!(&cov[9..12], &[12.0, 13.0, 14.0]);
        assert!(cov[12..].iter().all(|&v| v == static_value("x")));
        assert!(l.window_covariates(&s, 3, 2).is_err());
        assert!(l.check(&daily(5)).is_err());
    }

    #[test]
    fn static_value_is_bounded_and_stable() {
        for id in ["", "a", "series-17", "ünïcode"] {
            let v = static_value(id);
            assert!((-0.5..0.5).contains(&v));
            assert_eq!(v, static_value(id));
        }
        assert_ne!(static_value("a"), static_value("b"));
    }
}

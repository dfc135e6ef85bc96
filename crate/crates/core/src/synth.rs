//! Seeded synthetic panels for tests, demos and the acceptance suite.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use chrono::{NaiveDate, NaiveDateTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::seed::derive_seed;
use crate::timeseries::{Frequency, TimeSeries};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthKind {
    /// `level + i` for series `i`.
    Constant,
    /// Gaussian random walk starting at `level` with step size `noise`.
    RandomWalk,
    /// `level_i + amplitude·sin(2π(t + phase_i)/period) + N(0, noise²)`.
    Sinusoid,
    /// Zero with probability `zero_prob`, otherwise an integer in `1..=level`.
    Intermittent,
    /// Independent `N(level, noise²)` draws.
    Iid,
}

impl SynthKind {
    pub const ALL: [SynthKind; 5] = [
        SynthKind::Constant,
        SynthKind::RandomWalk,
        SynthKind::Sinusoid,
        SynthKind::Intermittent,
        SynthKind::Iid,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SynthKind::Constant => "constant",
            SynthKind::RandomWalk => "random-walk",
            SynthKind::Sinusoid => "sinusoid",
            SynthKind::Intermittent => "intermittent",
            SynthKind::Iid => "iid",
        }
    }
}

impl fmt::Display for SynthKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SynthKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SynthKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown synthetic kind '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub kind: SynthKind,
    pub num_series: usize,
    pub length: usize,
    pub freq: Frequency,
    pub start: NaiveDateTime,
    pub seed: u64,
    pub level: f64,
    pub noise: f64,
    pub period: usize,
    pub amplitude: f64,
    pub zero_prob: f64,
}

impl SynthSpec {
    /// Hourly series starting on a Monday at midnight.
    pub fn new(kind: SynthKind, num_series: usize, length: usize) -> Self {
        Self {
            kind,
            num_series,
            length,
            freq: Frequency::hourly(),
            start: NaiveDate::from_ymd_opt(2021, 1, 4)
                .unwrap()
                .and_hms_opt(0, 0, 0)
                .unwrap(),
            seed: 0,
            level: 10.0,
            noise: 1.0,
            period: 24,
            amplitude: 5.0,
            zero_prob: 0.7,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.num_series == 0 || self.length == 0 {
            return Err(Error::InvalidParameter(
                "number of series and length must be positive".into(),
            ));
        }
        if self.period == 0 {
            return Err(Error::InvalidParameter("period must be positive".into()));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "invalid noise {}",
                self.noise
            )));
        }
        if !(0.0..=1.0).contains(&self.zero_prob) {
            return Err(Error::InvalidParameter(format!(
                "invalid zero probability {}",
                self.zero_prob
            )));
        }
        if !self.level.is_finite() || !self.amplitude.is_finite() {
            return Err(Error::InvalidParameter(
                "level and amplitude must be finite".into(),
            ));
        }
        Ok(())
    }
}

/// Generate the panel described by `spec`. Series `i` draws from its own
/// stream, so adding series does not change the earlier ones.
pub fn generate(spec: &SynthSpec) -> Result<Vec<TimeSeries>> {
    spec.validate()?;
    let noise = Normal::new(0.0, spec.noise).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    (0..spec.num_series)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, i as u64));
            let values: Vec<f64> = match spec.kind {
                SynthKind::Constant => vec![spec.level + i as f64; spec.length],
                SynthKind::RandomWalk => {
                    let mut x = spec.level;
                    (0..spec.length)
                        .map(|_| {
                            x += noise.sample(&mut rng);
                            x
                        })
                        .collect()
                }
                SynthKind::Sinusoid => {
                    let phase = rng.gen_range(0..spec.period) as f64;
                    let level = spec.level * (1.0 + rng.gen::<f64>());
                    (0..spec.length)
                        .map(|t| {
                            let angle = TAU * (t as f64 + phase) / spec.period as f64;
                            level + spec.amplitude * angle.sin() + noise.sample(&mut rng)
                        })
                        .collect()
                }
                SynthKind::Intermittent => {
                    let top = spec.level.max(1.0) as u64;
                    (0..spec.length)
                        .map(|_| {
                            if rng.gen::<f64>() < spec.zero_prob {
                                0.0
                            } else {
                                rng.gen_range(1..=top) as f64
                            }
                        })
                        .collect()
                }
                SynthKind::Iid => (0..spec.length)
                    .map(|_| spec.level + noise.sample(&mut rng))
                    .collect(),
            };
            TimeSeries::new(format!("{}-{i}", spec.kind), spec.start, spec.freq, values)
        })
        .collect()
}

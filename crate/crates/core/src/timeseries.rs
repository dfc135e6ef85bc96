//! Univariate series, calendar arithmetic and calendar time features.
//!
//! Timestamps are timezone-naive. Each frequency maps to a fixed list of
//! normalized cyclic features (`position / cycle - 0.5`):
//!
//! | frequency      | features                                                        |
//! |----------------|-----------------------------------------------------------------|
//! | minute-multiple| minute-of-hour, hour-of-day, day-of-week, day-of-month, day-of-year |
//! | hourly         | hour-of-day, day-of-week, day-of-month, day-of-year            |
//! | daily          | day-of-week, day-of-month, day-of-year                         |
//! | weekly         | week-of-year (ISO weeks)                                        |
//! | monthly        | month-of-year                                                   |

use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, Duration, Months, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FreqUnit {
    Minute,
    Hour,
    Day,
    Week,
    Month,
}

/// Sampling frequency of a series: a unit and a positive multiple of it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Frequency {
    unit: FreqUnit,
    multiple: u32,
}

impl Frequency {
    pub fn new(unit: FreqUnit, multiple: u32) -> Result<Self> {
        if multiple == 0 {
            return Err(Error::InvalidFrequency(format!("{unit:?} x 0")));
        }
        Ok(Self { unit, multiple })
    }

    pub fn minutes(multiple: u32) -> Result<Self> {
        Self::new(FreqUnit::Minute, multiple)
    }

    pub fn hourly() -> Self {
        Self {
            unit: FreqUnit::Hour,
            multiple: 1,
        }
    }

    pub fn daily() -> Self {
        Self {
            unit: FreqUnit::Day,
            multiple: 1,
        }
    }

    pub fn weekly() -> Self {
        Self {
            unit: FreqUnit::Week,
            multiple: 1,
        }
    }

    pub fn monthly() -> Self {
        Self {
            unit: FreqUnit::Month,
            multiple: 1,
        }
    }

    pub fn unit(&self) -> FreqUnit {
        self.unit
    }

    pub fn multiple(&self) -> u32 {
        self.multiple
    }

    /// Advance `start` by `steps` observation steps.
    pub fn advance(&self, start: NaiveDateTime, steps: usize) -> Option<NaiveDateTime> {
        let n = i64::try_from(steps)
            .ok()?
            .checked_mul(i64::from(self.multiple))?;
        match self.unit {
            FreqUnit::Minute => start.checked_add_signed(Duration::try_minutes(n)?),
            FreqUnit::Hour => start.checked_add_signed(Duration::try_hours(n)?),
            FreqUnit::Day => start.checked_add_signed(Duration::try_days(n)?),
            FreqUnit::Week => start.checked_add_signed(Duration::try_weeks(n)?),
            FreqUnit::Month => start.checked_add_months(Months::new(u32::try_from(n).ok()?)),
        }
    }

    /// Number of calendar features produced by [`time_features`].
    pub fn num_time_features(&self) -> usize {
        match self.unit {
            FreqUnit::Minute => 5,
            FreqUnit::Hour => 4,
            FreqUnit::Day => 3,
            FreqUnit::Week | FreqUnit::Month => 1,
        }
    }

    /// Steps per natural seasonal cycle (day for sub-daily data, week for
    /// daily, year otherwise). Falls back to 1 when the step does not divide
    /// the cycle.
    pub fn season_length(&self) -> usize {
        let (cycle, step) = match self.unit {
            FreqUnit::Minute => (24 * 60, self.multiple),
            FreqUnit::Hour => (24, self.multiple),
            FreqUnit::Day => (7, self.multiple),
            FreqUnit::Week => (52, self.multiple),
            FreqUnit::Month => (12, self.multiple),
        };
        if cycle % step == 0 {
            (cycle / step) as usize
        } else {
            1
        }
    }
}

impl fmt::Display for Frequency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let suffix = match self.unit {
            FreqUnit::Minute => "min",
            FreqUnit::Hour => "H",
            FreqUnit::Day => "D",
            FreqUnit::Week => "W",
            FreqUnit::Month => "M",
        };
        if self.multiple == 1 && self.unit != FreqUnit::Minute {
            write!(f, "{suffix}")
        } else {
            write!(f, "{}{suffix}", self.multiple)
        }
    }
}

impl FromStr for Frequency {
    type Err = Error;

    /// Accepts pandas-style aliases: `30min`, `30T`, `H`, `2H`, `D`, `W`, `M`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let split = s.find(|c: char| !c.is_ascii_digit()).unwrap_or(s.len());
        let (digits, unit) = s.split_at(split);
        let multiple = if digits.is_empty() {
            1
        } else {
            digits
                .parse::<u32>()
                .map_err(|_| Error::InvalidFrequency(s.to_owned()))?
        };
        let unit = match unit {
            "min" | "T" | "m" => FreqUnit::Minute,
            "H" | "h" => FreqUnit::Hour,
            "D" | "d" => FreqUnit::Day,
            "W" | "w" => FreqUnit::Week,
            "M" | "MS" => FreqUnit::Month,
            _ => return Err(Error::InvalidFrequency(s.to_owned())),
        };
        Frequency::new(unit, multiple).map_err(|_| Error::InvalidFrequency(s.to_owned()))
    }
}

/// Calendar features `f(t)`, every component in `[-0.5, 0.5)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeFeatureVector(pub Vec<f64>);

impl TimeFeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

fn cyclic(position: u32, cycle: u32) -> f64 {
    f64::from(position % cycle) / f64::from(cycle) - 0.5
}

/// Normalized calendar features for `timestamp` at frequency `freq`.
///
/// Day-of-year uses a 365-day cycle; the 366th day of leap years wraps to
/// the cycle start. Week-of-year is the ISO week over a 53-week cycle.
pub fn time_features(freq: Frequency, timestamp: NaiveDateTime) -> TimeFeatureVector {
    let minute = || cyclic(timestamp.minute(), 60);
    let hour = || cyclic(timestamp.hour(), 24);
    let dow = || cyclic(timestamp.weekday().num_days_from_monday(), 7);
    let dom = || cyclic(timestamp.day0(), 31);
    let doy = || cyclic(timestamp.ordinal0(), 365);
    let v = match freq.unit() {
        FreqUnit::Minute => vec![minute(), hour(), dow(), dom(), doy()],
        FreqUnit::Hour => vec![hour(), dow(), dom(), doy()],
        FreqUnit::Day => vec![dow(), dom(), doy()],
        FreqUnit::Week => vec![cyclic(timestamp.iso_week().week0(), 53)],
        FreqUnit::Month => vec![cyclic(timestamp.month0(), 12)],
    };
    TimeFeatureVector(v)
}

/// Raw calendar positions of the within-season features used by the
/// seasonal kernels: time of day for sub-daily data, day of week for daily,
/// week of year for weekly and month of year for monthly data.
pub fn seasonal_positions(freq: Frequency, timestamp: NaiveDateTime) -> Vec<f64> {
    match freq.unit() {
        FreqUnit::Minute => vec![f64::from(timestamp.minute()), f64::from(timestamp.hour())],
        FreqUnit::Hour => vec![f64::from(timestamp.hour())],
        FreqUnit::Day => vec![f64::from(timestamp.weekday().num_days_from_monday())],
        FreqUnit::Week => vec![f64::from(timestamp.iso_week().week0())],
        FreqUnit::Month => vec![f64::from(timestamp.month0())],
    }
}

/// L1 distance between two feature vectors.
pub fn feature_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum())
}

/// One univariate series with optional dynamic covariates.
///
/// Covariate rows may extend past the observed values so that covariates for
/// future steps are available when forecasting.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    id: String,
    start: NaiveDateTime,
    freq: Frequency,
    values: Vec<f64>,
    covariates: Option<Vec<Vec<f64>>>,
}

impl TimeSeries {
    pub fn new(
        id: impl Into<String>,
        start: NaiveDateTime,
        freq: Frequency,
        values: Vec<f64>,
    ) -> Result<Self> {
        let id = id.into();
        if values.is_empty() {
            return Err(Error::InvalidSeries {
                id,
                reason: "no values".into(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidSeries {
                id,
                reason: format!("non-finite value at index {i}"),
            });
        }
        Ok(Self {
            id,
            start,
            freq,
            values,
            covariates: None,
        })
    }

    /// Attach covariate rows; each row must cover at least the observed range.
    pub fn with_covariates(mut self, rows: Vec<Vec<f64>>) -> Result<Self> {
        for (r, row) in rows.iter().enumerate() {
            if row.len() < self.values.len() {
                return Err(Error::InvalidSeries {
                    id: self.id.clone(),
                    reason: format!(
                        "covariate row {r} has {} entries, fewer than the {} values",
                        row.len(),
                        self.values.len()
                    ),
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidSeries {
                    id: self.id.clone(),
                    reason: format!("non-finite covariate in row {r}"),
                });
            }
        }
        self.covariates = if rows.is_empty() { None } else { Some(rows) };
        Ok(self)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn start(&self) -> NaiveDateTime {
        self.start
    }

    pub fn freq(&self) -> Frequency {
        self.freq
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn covariates(&self) -> Option<&[Vec<f64>]> {
        self.covariates.as_deref()
    }

    pub fn num_covariates(&self) -> usize {
        self.covariates.as_ref().map_or(0, Vec::len)
    }

    /// Covariate row `row` at absolute index `index`, if available.
    pub fn covariate(&self, row: usize, index: usize) -> Option<f64> {
        self.covariates.as_ref()?.get(row)?.get(index).copied()
    }

    pub fn timestamp_at(&self, index: usize) -> Result<NaiveDateTime> {
        self.freq
            .advance(self.start, index)
            .ok_or(Error::CalendarOverflow(index))
    }

    /// The first `len` observations; covariates are kept whole.
    pub fn truncated(&self, len: usize) -> Result<Self> {
        if len == 0 || len > self.values.len() {
            return Err(Error::InvalidParameter(format!(
                "cannot truncate series '{}' of length {} to {len}",
                self.id,
                self.values.len()
            )));
        }
        Ok(Self {
            id: self.id.clone(),
            start: self.start,
            freq: self.freq,
            values: self.values[..len].to_vec(),
            covariates: self.covariates.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;
    use proptest::prelude::*;

    fn ts(y: i32, m: u32, d: u32, h: u32, min: u32) -> NaiveDateTime {
        NaiveDate::from_ymd_opt(y, m, d)
            .unwrap()
            .and_hms_opt(h, min, 0)
            .unwrap()
    }

    fn series(start: NaiveDateTime, freq: Frequency) -> TimeSeries {
        TimeSeries::new("s", start, freq, vec![0.0]).unwrap()
    }

    #[test]
    fn timestamp_arithmetic() {
        let s = series(ts(2015, 1, 1, 0, 0), Frequency::hourly());
        assert_eq!(s.timestamp_at(0).unwrap(), ts(2015, 1, 1, 0, 0));
        assert_eq!(s.timestamp_at(25).unwrap(), ts(2015, 1, 2, 1, 0));
        let d = series(ts(2015, 1, 31, 0, 0), Frequency::daily());
        assert_eq!(d.timestamp_at(1).unwrap(), ts(2015, 2, 1, 0, 0));
        let m = series(ts(2015, 1, 31, 0, 0), Frequency::monthly());
        assert_eq!(m.timestamp_at(1).unwrap(), ts(2015, 2, 28, 0, 0));
        assert_eq!(m.timestamp_at(2).unwrap(), ts(2015, 3, 31, 0, 0));
        let half = series(ts(2015, 1, 1, 23, 30), Frequency::minutes(30).unwrap());
        assert_eq!(half.timestamp_at(1).unwrap(), ts(2015, 1, 2, 0, 0));
    }

    #[test]
    fn timestamp_overflow_is_an_error() {
        let s = series(ts(2015, 1, 1, 0, 0), Frequency::weekly());
        assert!(matches!(
            s.timestamp_at(usize::MAX / 2),
            Err(Error::CalendarOverflow(_))
        ));
    }

    #[test]
    fn frequency_parsing() {
        assert_eq!("H".parse::<Frequency>().unwrap(), Frequency::hourly());
        assert_eq!("1H".parse::<Frequency>().unwrap(), Frequency::hourly());
        assert_eq!(
            "30min".parse::<Frequency>().unwrap(),
            Frequency::minutes(30).unwrap()
        );
        assert_eq!(
            "15T".parse::<Frequency>().unwrap(),
            Frequency::minutes(15).unwrap()
        );
        assert_eq!("D".parse::<Frequency>().unwrap(), Frequency::daily());
        assert!("0H".parse::<Frequency>().is_err());
        assert!("fortnight".parse::<Frequency>().is_err());
        for f in ["30min", "H", "2H", "D", "W", "M"] {
            assert_eq!(f.parse::<Frequency>().unwrap().to_string(), f);
        }
    }

    #[test]
    fn hour_of_day_feature() {
        let f = time_features(Frequency::hourly(), ts(2015, 1, 5, 0, 0));
        assert_eq!(f.0[0], -0.5);
        let f = time_features(Frequency::hourly(), ts(2015, 1, 5, 12, 0));
        assert_eq!(f.0[0], 0.0);
    }

    #[test]
    fn day_of_week_feature() {
        // 2015-01-08 is a Thursday.
        let f = time_features(Frequency::daily(), ts(2015, 1, 8, 0, 0));
        assert!((f.0[0] - (3.0 / 7.0 - 0.5)).abs() < 1e-15);
        assert!((f.0[0] + 0.0714).abs() < 1e-4);
    }

    #[test]
    fn feature_counts_match_frequency() {
        let t = ts(2016, 12, 31, 23, 30);
        for freq in [
            Frequency::minutes(30).unwrap(),
            Frequency::hourly(),
            Frequency::daily(),
            Frequency::weekly(),
            Frequency::monthly(),
        ] {
            assert_eq!(time_features(freq, t).len(), freq.num_time_features());
        }
    }

    #[test]
    fn distance_examples() {
        let v = [0.1, -0.2, 0.3];
        assert_eq!(feature_distance(&v, &v).unwrap(), 0.0);
        assert_eq!(feature_distance(&[-0.5, 0.0], &[0.0, 0.25]).unwrap(), 0.75);
        let a = time_features(Frequency::hourly(), ts(2015, 1, 5, 3, 0));
        let b = time_features(Frequency::hourly(), ts(2015, 1, 6, 3, 0));
        let d = feature_distance(a.as_slice(), b.as_slice()).unwrap();
        assert!((d - (1.0 / 7.0 + 1.0 / 31.0 + 1.0 / 365.0)).abs() < 1e-12);
        assert!((d - 0.17785).abs() < 1e-5);
        assert!(matches!(
            feature_distance(&[0.0], &[0.0, 1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn series_validation() {
        let t = ts(2015, 1, 1, 0, 0);
        assert!(TimeSeries::new("a", t, Frequency::daily(), vec![]).is_err());
        assert!(TimeSeries::new("a", t, Frequency::daily(), vec![1.0, f64::NAN]).is_err());
        let s = TimeSeries::new("a", t, Frequency::daily(), vec![1.0, 2.0]).unwrap();
        assert!(s.clone().with_covariates(vec![vec![0.0]]).is_err());
        let s = s.with_covariates(vec![vec![0.0, 1.0, 2.0]]).unwrap();
        assert_eq!(s.covariate(0, 2), Some(2.0));
        let short = s.truncated(1).unwrap();
        assert_eq!(short.values(), &[1.0]);
        assert_eq!(short.covariate(0, 2), Some(2.0));
    }

    fn any_freq() -> impl Strategy<Value = Frequency> {
        prop_oneof![
            (1u32..=60).prop_map(|m| Frequency::minutes(m).unwrap()),
            Just(Frequency::hourly()),
            Just(Frequency::daily()),
            Just(Frequency::weekly()),
            Just(Frequency::monthly()),
        ]
    }

    fn any_time() -> impl Strategy<Value = NaiveDateTime> {
        (0i64..40 * 365 * 24 * 60).prop_map(|m| ts(1990, 1, 1, 0, 0) + Duration::minutes(m))
    }

    proptest! {
        #[test]
        fn timestamps_strictly_increase(freq in any_freq(), start in any_time(), i in 0usize..5000) {
            let a = freq.advance(start, i).unwrap();
            let b = freq.advance(start, i + 1).unwrap();
            prop_assert!(a < b);
        }

        #[test]
        fn features_bounded_and_daily_periodic(freq in any_freq(), t in any_time()) {
            let f = time_features(freq, t);
            prop_assert!(f.0.iter().all(|&c| (-0.5..0.5).contains(&c)));
            if matches!(freq.unit(), FreqUnit::Minute | FreqUnit::Hour) {
                let g = time_features(freq, t + Duration::hours(24));
                let hod = usize::from(freq.unit() == FreqUnit::Minute);
                prop_assert_eq!(f.0[hod], g.0[hod]);
            }
        }

        #[test]
        fn distance_is_a_metric(
            a in prop::collection::vec(-0.5f64..0.5, 4),
            b in prop::collection::vec(-0.5f64..0.5, 4),
            c in prop::collection::vec(-0.5f64..0.5, 4),
        ) {
            let ab = feature_distance(&a, &b).unwrap();
            let ba = feature_distance(&b, &a).unwrap();
            let bc = feature_distance(&b, &c).unwrap();
            let ac = feature_distance(&a, &c).unwrap();
            prop_assert_eq!(ab, ba);
            prop_assert!(ac <= ab + bc + 1e-12);
            prop_assert_eq!(ab == 0.0, a == b);
        }
    }
}

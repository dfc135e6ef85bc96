//! Non-parametric time series forecasters that predict by resampling
//! observed values.
//!
//! The local forecasters weight the indices of a series' own history with a
//! fixed kernel (uniform, exponentially decaying, or seasonal). The global
//! [`deepnpts`] forecaster learns those weights with a small network shared
//! across a panel. [`evaluation`] scores all of them with quantile losses
//! over a rolling backtest.
//!
//! ```
//! use chrono::NaiveDate;
//! use npts_core::{forecast_paths, ForecastOptions, Frequency, KernelSource, KernelSpec, TimeSeries};
//!
//! let start = NaiveDate::from_ymd_opt(2024, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
//! let series = TimeSeries::new("demo", start, Frequency::hourly(), vec![3.0, 1.0, 4.0, 1.0, 5.0]).unwrap();
//! let source = KernelSource { spec: KernelSpec::exponential(1.0), max_context: None };
//! let f = forecast_paths(&series, &source, 3, &ForecastOptions::default()).unwrap();
//! assert!(f.samples.iter().flatten().all(|v| (1.0..=5.0).contains(v)));
//! ```

pub mod deepnpts;
pub mod error;
pub mod evaluation;
pub mod forecaster;
pub mod io;
pub mod kernels;
pub mod seed;
pub mod synth;
pub mod timeseries;

pub use error::{Error, Result};
pub use forecaster::{
    default_levels, empirical_quantile, forecast_paths, one_step_distribution, DistributionSource,
    ForecastOptions, ForecastResult, KernelSource, PredictiveDistribution, SeasonalNaiveSource,
    StepContext, DEFAULT_SAMPLES,
};
pub use kernels::{kernel_weights, KernelKind, KernelSpec, SamplingDistribution, LAMBDA_GRID};
pub use timeseries::{
    feature_distance, seasonal_positions, time_features, FreqUnit, Frequency, TimeFeatureVector,
    TimeSeries,
};

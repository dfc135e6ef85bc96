//! Accuracy metrics, model families and the rolling backtest.

mod backtest;
mod metrics;
mod models;

pub use backtest::{
    evaluate_holdout, forecast_holdout, rolling_backtest, tune, BacktestOptions, BacktestPlan,
    BacktestReport, CandidateScore, TuneResult,
};
pub use metrics::{
    coverage, coverage_table, mean_quantile_loss, quantile_loss, MeanQuantileLoss, SeriesForecast,
};
pub use models::{FittedModel, ModelConfig, ModelFamily};

use std::fmt;
use std::str::FromStr;

use crate::deepnpts::{
    train, DeepNptsModel, InputScaling, LossScaling, Normalization, TrainingConfig, TrainingLog,
};
use crate::error::{Error, Result};
use crate::forecaster::{DistributionSource, KernelSource, SeasonalNaiveSource};
use crate::kernels::{KernelKind, KernelSpec, LAMBDA_GRID};
use crate::timeseries::{Frequency, TimeSeries};

/// The forecaster families available for backtesting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelFamily {
    NptsUniform,
    NptsExp,
    SeasonalNptsUniform,
    SeasonalNptsExp,
    DeepNpts,
    SeasonalNaive,
}

impl ModelFamily {
    pub const ALL: [ModelFamily; 6] = [
        ModelFamily::NptsUniform,
        ModelFamily::NptsExp,
        ModelFamily::SeasonalNptsUniform,
        ModelFamily::SeasonalNptsExp,
        ModelFamily::DeepNpts,
        ModelFamily::SeasonalNaive,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ModelFamily::NptsUniform => "npts-uniform",
            ModelFamily::NptsExp => "npts-exp",
            ModelFamily::SeasonalNptsUniform => "seasonal-npts-uniform",
            ModelFamily::SeasonalNptsExp => "seasonal-npts-exp",
            ModelFamily::DeepNpts => "deepnpts",
            ModelFamily::SeasonalNaive => "seasonal-naive",
        }
    }

    /// Candidate configurations searched when tuning. Exponential kernels
    /// use the lambda grid; DeepNPTS searches `training.grid()` when
    /// `full_deep_grid` is set and otherwise keeps `training` as is.
    pub fn grid(
        &self,
        max_context: Option<usize>,
        training: &TrainingConfig,
        full_deep_grid: bool,
    ) -> Vec<ModelConfig> {
        let kernel = |kind, lambda| ModelConfig::Kernel {
            kind,
            lambda,
            max_context,
        };
        match self {
            ModelFamily::NptsUniform => vec![kernel(KernelKind::Uniform, 0.0)],
            ModelFamily::SeasonalNptsUniform => vec![kernel(KernelKind::SeasonalUniform, 0.0)],
            ModelFamily::NptsExp => LAMBDA_GRID
                .iter()
                .map(|&l| kernel(KernelKind::Exponential, l))
                .collect(),
            ModelFamily::SeasonalNptsExp => LAMBDA_GRID
                .iter()
                .map(|&l| kernel(KernelKind::SeasonalExponential, l))
                .collect(),
            ModelFamily::SeasonalNaive => vec![ModelConfig::SeasonalNaive],
            ModelFamily::DeepNpts if full_deep_grid => training
                .grid()
                .into_iter()
                .map(ModelConfig::DeepNpts)
                .collect(),
            ModelFamily::DeepNpts => vec![ModelConfig::DeepNpts(training.clone())],
        }
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelFamily::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown model '{s}'")))
    }
}

/// One concrete, fully specified forecaster.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelConfig {
    Kernel {
        kind: KernelKind,
        lambda: f64,
        max_context: Option<usize>,
    },
    SeasonalNaive,
    DeepNpts(TrainingConfig),
}

impl ModelConfig {
    pub fn label(&self) -> String {
        match self {
            ModelConfig::Kernel { kind, lambda, .. } => match kind {
                KernelKind::Uniform => "npts-uniform".into(),
                KernelKind::SeasonalUniform => "seasonal-npts-uniform".into(),
                KernelKind::Exponential => format!("npts-exp(lambda={lambda})"),
                KernelKind::SeasonalExponential => format!("seasonal-npts-exp(lambda={lambda})"),
            },
            ModelConfig::SeasonalNaive => "seasonal-naive".into(),
            ModelConfig::DeepNpts(c) => format!(
                "deepnpts(epochs={},dropout={},static={},normalization={},input_scaling={},loss_scaling={})",
                c.epochs,
                c.dropout,
                c.static_feature,
                match c.normalization {
                    Normalization::Softmax => "softmax",
                    Normalization::SumNormalize => "normal",
                },
                match c.input_scaling {
                    InputScaling::None => "none",
                    InputScaling::Standardization => "standardization",
                },
                match c.loss_scaling {
                    LossScaling::None => "none",
                    LossScaling::MinMax => "min-max",
                },
            ),
        }
    }

    /// Fit on `train`. Local forecasters need no fitting; DeepNPTS trains
    /// one network on the whole panel.
    pub fn fit(&self, train_set: &[TimeSeries]) -> Result<(FittedModel, Option<TrainingLog>)> {
        Ok(match self {
            ModelConfig::Kernel {
                kind,
                lambda,
                max_context,
            } => {
                // The frequency is taken from each series at prediction time.
                let spec = KernelSpec {
                    kind: *kind,
                    lambda: *lambda,
                    freq: Frequency::daily(),
                };
                (
                    FittedModel::Kernel(KernelSource {
                        spec,
                        max_context: *max_context,
                    }),
                    None,
                )
            }
            ModelConfig::SeasonalNaive => (FittedModel::SeasonalNaive, None),
            ModelConfig::DeepNpts(config) => {
                let (model, log) = train(train_set, config)?;
                (FittedModel::DeepNpts(Box::new(model)), Some(log))
            }
        })
    }
}

#[derive(Debug, Clone)]
pub enum FittedModel {
    Kernel(KernelSource),
    SeasonalNaive,
    DeepNpts(Box<DeepNptsModel>),
}

impl FittedModel {
    pub fn source(&self) -> &dyn DistributionSource {
        match self {
            FittedModel::Kernel(k) => k,
            FittedModel::SeasonalNaive => &SeasonalNaiveSource,
            FittedModel::DeepNpts(m) => m.as_ref(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for m in ModelFamily::ALL {
            assert_eq!(m.name().parse::<ModelFamily>().unwrap(), m);
        }
        assert!("arima".parse::<ModelFamily>().is_err());
    }

    #[test]
    fn grids() {
        let t = TrainingConfig::new(24, 168);
        assert_eq!(ModelFamily::NptsExp.grid(None, &t, false).len(), 5);
        assert_eq!(ModelFamily::NptsUniform.grid(None, &t, false).len(), 1);
        assert_eq!(ModelFamily::DeepNpts.grid(None, &t, false).len(), 1);
        assert_eq!(ModelFamily::DeepNpts.grid(None, &t, true).len(), 64);
        let labels: Vec<_> = ModelFamily::SeasonalNptsExp
            .grid(None, &t, false)
            .iter()
            .map(ModelConfig::label)
            .collect();
        assert_eq!(labels[0], "seasonal-npts-exp(lambda=1)");
        assert_eq!(labels[4], "seasonal-npts-exp(lambda=0.1)");
    }
}

use crate::error::{Error, Result};

/// Pinball loss `(α − 1{z < q})(z − q)`.
pub fn quantile_loss(q: f64, z: f64, level: f64) -> f64 {
    let below = if z < q { 1.0 } else { 0.0 };
    (level - below) * (z - q)
}

/// Quantile forecasts of one series aligned with the realized values.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesForecast {
    pub id: String,
    pub actuals: Vec<f64>,
    /// One curve per quantile level, each as long as `actuals`.
    pub quantiles: Vec<Vec<f64>>,
}

impl SeriesForecast {
    fn check(&self, levels: &[f64]) -> Result<()> {
        if self.quantiles.len() != levels.len() {
            return Err(Error::DimensionMismatch {
                expected: levels.len(),
                got: self.quantiles.len(),
            });
        }
        for curve in &self.quantiles {
            if curve.len() != self.actuals.len() {
                return Err(Error::DimensionMismatch {
                    expected: self.actuals.len(),
                    got: curve.len(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanQuantileLoss {
    pub value: f64,
    /// False when every actual is zero and the plain mean was returned.
    pub normalized: bool,
}

/// Quantile losses summed over series, steps and levels, divided by
/// `Σ|actual|` times the number of levels. All-zero actuals fall back to the
/// plain mean over (point, level) pairs.
pub fn mean_quantile_loss(
    forecasts: &[SeriesForecast],
    levels: &[f64],
) -> Result<MeanQuantileLoss> {
    if levels.is_empty() {
        return Err(Error::InvalidParameter("no quantile levels".into()));
    }
    if let Some(&bad) = levels.iter().find(|&&l| !(l > 0.0 && l < 1.0)) {
        return Err(Error::InvalidLevel(bad));
    }
    let mut loss = 0.0;
    let mut scale = 0.0;
    let mut points = 0usize;
    for f in forecasts {
        f.check(levels)?;
        for (curve, &level) in f.quantiles.iter().zip(levels) {
            loss += curve
                .iter()
                .zip(&f.actuals)
                .map(|(&q, &z)| quantile_loss(q, z, level))
                .sum::<f64>();
        }
        scale += f.actuals.iter().map(|z| z.abs()).sum::<f64>();
        points += f.actuals.len();
    }
    if points == 0 {
        return Err(Error::InvalidParameter("no forecast points".into()));
    }
    let n_levels = levels.len() as f64;
    Ok(if scale > 0.0 {
        MeanQuantileLoss {
            value: loss / (scale * n_levels),
            normalized: true,
        }
    } else {
        MeanQuantileLoss {
            value: loss / (points as f64 * n_levels),
            normalized: false,
        }
    })
}

/// Fraction of actuals at or below the predicted quantile.
pub fn coverage(predicted: &[f64], actuals: &[f64]) -> Result<f64> {
    if predicted.len() != actuals.len() {
        return Err(Error::DimensionMismatch {
            expected: actuals.len(),
            got: predicted.len(),
        });
    }
    if actuals.is_empty() {
        return Err(Error::InvalidParameter("no forecast points".into()));
    }
    let hits = predicted
        .iter()
        .zip(actuals)
        .filter(|(q, z)| z <= q)
        .count();
    Ok(hits as f64 / actuals.len() as f64)
}

/// Pooled coverage of every level across `forecasts`.
pub fn coverage_table(forecasts: &[SeriesForecast], levels: &[f64]) -> Result<Vec<f64>> {
    (0..levels.len())
        .map(|l| {
            let mut predicted = Vec::new();
            let mut actuals = Vec::new();
            for f in forecasts {
                f.check(levels)?;
                predicted.extend_from_slice(&f.quantiles[l]);
                actuals.extend_from_slice(&f.actuals);
            }
            coverage(&predicted, &actuals)
        })
        .collect()
}

//! Ranked probability score of a sampling distribution over context values.

use crate::error::Result;
use crate::evaluation::quantile_loss;
use crate::forecaster::one_step_distribution;
use crate::kernels::SamplingDistribution;

/// Sum of quantile losses `Λ_{F(v)}(v, target)` over the distinct context
/// values `v`, where `F` is the discrete CDF induced by `dist`.
pub fn rps_loss(dist: &SamplingDistribution, context_values: &[f64], target: f64) -> Result<f64> {
    let pd = one_step_distribution(context_values, dist)?;
    let total: f64 = pd
        .support
        .iter()
        .zip(&pd.cdf)
        .map(|(&v, &alpha)| quantile_loss(v, target, alpha))
        .sum();
    Ok(total.max(0.0))
}

/// Express the score as `Σ_t q_t · w_t + c`.
///
/// With distinct sorted values `v_j`, `w_t = Σ_{j: v_j ≥ z_t} (target − v_j)`
/// and `c = Σ_{j: v_j > target} (v_j − target)`. The weights depend only on
/// the ordering of the context values, never on `q`, so they are the exact
/// gradient of the score with respect to the sampling probabilities.
pub fn rps_weights(context_values: &[f64], target: f64) -> (Vec<f64>, f64) {
    let mut distinct = context_values.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    // suffix[j] = Σ_{i >= j} (target - v_i)
    let mut suffix = vec![0.0; distinct.len() + 1];
    for j in (0..distinct.len()).rev() {
        suffix[j] = suffix[j + 1] + (target - distinct[j]);
    }
    let weights = context_values
        .iter()
        .map(|z| {
            let j = distinct.partition_point(|v| v < z);
            suffix[j]
        })
        .collect();
    let constant = distinct
        .iter()
        .filter(|&&v| v > target)
        .map(|v| v - target)
        .sum();
    (weights, constant)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(p: &[f64]) -> SamplingDistribution {
        SamplingDistribution::new(p.to_vec()).unwrap()
    }

    #[test]
    fn examples() {
        assert_eq!(rps_loss(&dist(&[1.0]), &[5.0], 5.0).unwrap(), 0.0);
        assert!((rps_loss(&dist(&[0.5, 0.5]), &[1.0, 2.0], 2.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((rps_loss(&dist(&[0.5, 0.5]), &[1.0, 2.0], 0.0).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn weights_reproduce_score() {
        let values = [3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0];
        let q = dist(&[0.05, 0.1, 0.2, 0.05, 0.15, 0.1, 0.25, 0.1]);
        for target in [-1.0, 1.0, 3.5, 9.0, 12.0] {
            let (w, c) = rps_weights(&values, target);
            let linear: f64 = q
                .probabilities()
                .iter()
                .zip(&w)
                .map(|(p, w)| p * w)
                .sum::<f64>()
                + c;
            let direct = rps_loss(&q, &values, target).unwrap();
            assert!((linear - direct).abs() < 1e-12, "{linear} vs {direct}");
        }
    }

    #[test]
    fn zero_only_for_point_mass_on_target() {
        let values = [1.0, 2.0, 3.0];
        assert_eq!(
            rps_loss(&dist(&[0.0, 1.0, 0.0]), &values, 2.0).unwrap(),
            0.0
        );
        assert!(rps_loss(&dist(&[0.0, 1.0, 0.0]), &values, 2.5).unwrap() > 0.0);
        assert!(rps_loss(&dist(&[0.1, 0.8, 0.1]), &values, 2.0).unwrap() > 0.0);
    }

    #[test]
    fn split_mass_between_equal_values_is_irrelevant() {
        let values = [2.0, 7.0, 2.0, 4.0];
        let a = rps_loss(&dist(&[0.4, 0.3, 0.0, 0.3]), &values, 3.0).unwrap();
        let b = rps_loss(&dist(&[0.1, 0.3, 0.3, 0.3]), &values, 3.0).unwrap();
        assert!((a - b).abs() < 1e-15);
    }
}

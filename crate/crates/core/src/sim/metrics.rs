//! Support recovery and estimation error of a fit against the truth.

use serde::{Deserialize, Serialize};

use crate::data::ModelParams;
use crate::error::{check_len, Result};
use crate::pipeline::penalized_support;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RunMetrics {
    pub l2_beta: f64,
    pub l2_theta: f64,
    pub pre_beta: f64,
    pub rec_beta: f64,
    pub pre_theta: f64,
    pub rec_theta: f64,
}

/// Precision `|S_hat ∩ S| / |S_hat|` (1 for an empty estimate) and recall
/// `|S_hat ∩ S| / |S|` (1 for an empty truth).
pub fn precision_recall(estimated: &[usize], truth: &[usize]) -> (f64, f64) {
    let hits = estimated.iter().filter(|j| truth.contains(j)).count() as f64;
    let pre = if estimated.is_empty() { 1.0 } else { hits / estimated.len() as f64 };
    let rec = if truth.is_empty() { 1.0 } else { hits / truth.len() as f64 };
    (pre, rec)
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Scores estimated coefficients. Supports ignore the intercept; the l2
/// errors include it.
pub fn score(truth: &ModelParams, beta_hat: &[f64], theta_hat: &[f64], intercept: bool) -> Result<RunMetrics> {
    check_len("beta estimate length", truth.beta.len(), beta_hat.len())?;
    check_len("theta estimate length", truth.theta.len(), theta_hat.len())?;
    let (pre_beta, rec_beta) = precision_recall(
        &penalized_support(beta_hat, intercept),
        &penalized_support(&truth.beta, intercept),
    );
    let (pre_theta, rec_theta) = precision_recall(
        &penalized_support(theta_hat, intercept),
        &penalized_support(&truth.theta, intercept),
    );
    Ok(RunMetrics {
        l2_beta: l2(beta_hat, &truth.beta),
        l2_theta: l2(theta_hat, &truth.theta),
        pre_beta,
        rec_beta,
        pre_theta,
        rec_theta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn footnote_examples() {
        let (p, r) = precision_recall(&[1, 2, 5], &[1, 2, 3]);
        assert!((p - 2.0 / 3.0).abs() < 1e-15 && (r - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(precision_recall(&[1, 2, 3], &[1, 2, 3]), (1.0, 1.0));
        assert_eq!(precision_recall(&[], &[1, 2]), (1.0, 0.0));
        assert_eq!(precision_recall(&[4], &[]), (0.0, 1.0));
    }

    #[test]
    fn score_excludes_intercept_from_supports() {
        let truth = ModelParams::new(vec![2.0, 1.0, 0.0], vec![1.0, 0.0, 0.5]).unwrap();
        let m = score(&truth, &[2.5, 1.0, 0.0], &[0.0, 0.0, 0.5], true).unwrap();
        assert_eq!((m.pre_beta, m.rec_beta, m.pre_theta, m.rec_theta), (1.0, 1.0, 1.0, 1.0));
        assert!((m.l2_beta - 0.5).abs() < 1e-15);
        assert!((m.l2_theta - 1.0).abs() < 1e-15);
    }
}

//! The three-stage estimator at a fixed pair of tuning parameters.

use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::data::{neg_loglik, sigma_from_theta, Dataset, ModelParams};
use crate::error::{HippoError, Result};
use crate::penalty::Penalty;
use crate::stage1::{fit_stage1, Stage1Result};
use crate::stage2::{fit_stage2, support_of, Stage2Problem, Stage2Result};
use crate::stage3::{fit_stage3, Stage3Problem, Stage3Result};

/// Penalty plus solver settings; the only difference between HIPPO and
/// its L1 counterpart is `penalty`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HippoConfig {
    pub penalty: Penalty,
    #[serde(flatten)]
    pub solvers: PipelineConfig,
    /// A descending `lambda` path stops once a fit selects more than this
    /// fraction of `n` penalized coefficients; the remaining (smaller)
    /// values are reported as skipped.
    pub max_support_frac: f64,
}

impl Default for HippoConfig {
    fn default() -> Self {
        HippoConfig {
            penalty: Penalty::default(),
            solvers: PipelineConfig::default(),
            max_support_frac: 0.25,
        }
    }
}

impl HippoConfig {
    pub fn with_penalty(self, penalty: Penalty) -> Self {
        HippoConfig { penalty, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.max_support_frac > 0.0 && self.max_support_frac <= 1.0) {
            return Err(HippoError::Config(format!(
                "max_support_frac must lie in (0,1], got {}",
                self.max_support_frac
            )));
        }
        self.solvers.validate()
    }

    /// Largest penalized support a path may reach before it is cut.
    pub fn support_cap(&self, n: usize) -> usize {
        ((self.max_support_frac * n as f64).floor() as usize).max(1)
    }
}

/// A fitted model at one `(lambda_S, lambda_T)` pair.
#[derive(Debug, Clone)]
pub struct HippoFit {
    pub beta: Vec<f64>,
    pub theta: Vec<f64>,
    pub sigma_hat: Vec<f64>,
    pub lambda_s: f64,
    pub lambda_t: f64,
    pub df: usize,
    pub neg_loglik: f64,
    pub aic: f64,
    pub bic: f64,
    /// `None` when the variance was supplied rather than estimated.
    pub stage2: Option<Stage2Result>,
    /// `None` when the mean was supplied rather than estimated.
    pub stage3: Option<Stage3Result>,
    pub converged: bool,
}

impl HippoFit {
    pub(crate) fn assemble(
        d: &Dataset,
        beta: Vec<f64>,
        theta: Vec<f64>,
        lambda_s: f64,
        lambda_t: f64,
        stage2: Option<Stage2Result>,
        stage3: Option<Stage3Result>,
    ) -> Result<Self> {
        let sigma_hat = sigma_from_theta(d, &theta)?;
        let df = df_hat(&beta, &theta, d.has_intercept());
        let params = ModelParams::new(beta, theta)?;
        let nll = neg_loglik(&params, d)?;
        let converged = stage2.as_ref().map_or(true, |s| s.converged) && stage3.as_ref().map_or(true, |s| s.converged);
        let ModelParams { beta, theta } = params;
        Ok(HippoFit {
            beta,
            theta,
            sigma_hat,
            lambda_s,
            lambda_t,
            df,
            neg_loglik: nll,
            aic: nll + 2.0 * df as f64,
            bic: nll + df as f64 * (d.n() as f64).ln(),
            stage2,
            stage3,
            converged,
        })
    }

    /// Penalized coordinates in the mean support.
    pub fn beta_support(&self, d: &Dataset) -> Vec<usize> {
        penalized_support(&self.beta, d.has_intercept())
    }

    /// Penalized coordinates in the variance support.
    pub fn theta_support(&self, d: &Dataset) -> Vec<usize> {
        penalized_support(&self.theta, d.has_intercept())
    }

    /// Mean support including the intercept, as used for inference.
    pub fn mean_support(&self, d: &Dataset) -> Vec<usize> {
        let mut s = self.beta_support(d);
        if d.has_intercept() {
            s.insert(0, 0);
        }
        s
    }
}

pub(crate) fn penalized_support(coeffs: &[f64], intercept: bool) -> Vec<usize> {
    support_of(coeffs)
        .into_iter()
        .filter(|&j| !(intercept && j == 0))
        .collect()
}

/// Degrees of freedom `|supp(beta)| + |supp(theta)|`, intercepts excluded.
pub fn df_hat(beta: &[f64], theta: &[f64], intercept: bool) -> usize {
    penalized_support(beta, intercept).len() + penalized_support(theta, intercept).len()
}

/// Runs all three stages at fixed `(lambda_S, lambda_T)` without warm starts.
pub fn fit_fixed(d: &Dataset, lambda_s: f64, lambda_t: f64, cfg: &HippoConfig) -> Result<(HippoFit, Stage1Result)> {
    cfg.validate()?;
    let s1 = fit_stage1(d, &cfg.solvers.stage1)?;
    let fit = fit_fixed_from_residuals(d, &s1.residuals, lambda_s, lambda_t, cfg)?;
    Ok((fit, s1))
}

/// Stages 2 and 3 from given mean residuals.
pub fn fit_fixed_from_residuals(
    d: &Dataset,
    residuals: &[f64],
    lambda_s: f64,
    lambda_t: f64,
    cfg: &HippoConfig,
) -> Result<HippoFit> {
    let p2 = Stage2Problem::from_residuals(d, residuals, lambda_t, cfg.penalty)?;
    let s2 = fit_stage2(&p2, &cfg.solvers.stage2)?;
    let p3 = Stage3Problem::from_theta(d, &s2.theta, lambda_s, cfg.penalty)?;
    let s3 = fit_stage3(&p3, &cfg.solvers.stage3)?;
    HippoFit::assemble(d, s3.beta.clone(), s2.theta.clone(), lambda_s, lambda_t, Some(s2), Some(s3))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn df_examples() {
        assert_eq!(df_hat(&[0.0; 4], &[0.0; 4], false), 0);
        assert_eq!(df_hat(&[1.0, 0.0, 2.0, -3.0], &[0.0, 0.5, 0.0, 0.1], false), 5);
        assert_eq!(
            df_hat(&[2.0, 1.0, 0.0, 2.0, -3.0], &[1.0, 0.0, 0.5, 0.0, 0.1], true),
            5
        );
        assert_eq!(df_hat(&[1e-9, 0.0], &[0.0, -1e-9], false), 0);
    }

    #[test]
    fn hhr_config_differs_only_in_penalty() {
        let hippo = HippoConfig::default();
        let hhr = hippo.with_penalty(Penalty::l1());
        assert_eq!(hippo.solvers, hhr.solvers);
        assert_ne!(hippo.penalty, hhr.penalty);
    }
}

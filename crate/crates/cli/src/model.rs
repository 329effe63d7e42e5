//! The `model.json` artifact and its re-scoring.

use anyhow::{bail, Result};
use hippo::oracle::{kkt_check_beta, kkt_check_theta, ConfidenceInterval};
use hippo::stage2::Stage2Problem;
use hippo::stage3::Stage3Problem;
use hippo::{neg_loglik, Criterion, Dataset, HippoConfig, HippoFit, KktCertificate, ModelParams};
use serde::{Deserialize, Serialize};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub objective: f64,
    pub converged: bool,
    pub outer_iters: usize,
    pub inner_iters_total: usize,
    pub kkt: KktCertificate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub n: usize,
    /// Columns of the design, including the intercept column if present.
    pub p: usize,
    pub intercept: bool,
    pub config: HippoConfig,
    pub criterion: Criterion,
    pub iterations: usize,
    pub lambda_s: f64,
    pub lambda_t: f64,
    pub beta: Vec<f64>,
    pub theta: Vec<f64>,
    pub beta_support: Vec<usize>,
    pub theta_support: Vec<usize>,
    pub sigma_hat: Vec<f64>,
    pub df: usize,
    pub neg_loglik: f64,
    pub aic: f64,
    pub bic: f64,
    /// Mean whose residuals entered stage 2 of the final fit.
    pub stage2_mean: Vec<f64>,
    pub stage2: StageSummary,
    pub stage3: StageSummary,
    pub converged: bool,
    pub ci_level: f64,
    pub confidence_intervals: Vec<ConfidenceInterval>,
}

impl ModelFile {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        d: &Dataset,
        fit: &HippoFit,
        config: &HippoConfig,
        criterion: Criterion,
        iterations: usize,
        stage2_mean: Vec<f64>,
        ci_level: f64,
        confidence_intervals: Vec<ConfidenceInterval>,
    ) -> Result<Self> {
        let (Some(s2), Some(s3)) = (&fit.stage2, &fit.stage3) else {
            bail!("fit is missing a stage result");
        };
        Ok(ModelFile {
            format_version: FORMAT_VERSION,
            n: d.n(),
            p: d.p(),
            intercept: d.has_intercept(),
            config: *config,
            criterion,
            iterations,
            lambda_s: fit.lambda_s,
            lambda_t: fit.lambda_t,
            beta: fit.beta.clone(),
            theta: fit.theta.clone(),
            beta_support: fit.beta_support(d),
            theta_support: fit.theta_support(d),
            sigma_hat: fit.sigma_hat.clone(),
            df: fit.df,
            neg_loglik: fit.neg_loglik,
            aic: fit.aic,
            bic: fit.bic,
            stage2_mean,
            stage2: StageSummary {
                objective: s2.objective,
                converged: s2.converged,
                outer_iters: s2.outer_iters,
                inner_iters_total: s2.inner_iters_total,
                kkt: s2.kkt,
            },
            stage3: StageSummary {
                objective: s3.objective,
                converged: s3.converged,
                outer_iters: s3.outer_iters,
                inner_iters_total: s3.inner_iters_total,
                kkt: s3.kkt,
            },
            converged: fit.converged,
            ci_level,
            confidence_intervals,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Rescore {
    pub neg_loglik: f64,
    pub stage2_objective: f64,
    pub stage3_objective: f64,
    /// Largest relative gap between recomputed and reported values.
    pub max_rel_gap: f64,
    pub stage2_kkt: KktCertificate,
    pub stage3_kkt: KktCertificate,
}

fn rel_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

/// Recomputes objectives and certificates of `m` on `d` from scratch.
pub fn rescore(m: &ModelFile, d: &Dataset, kkt_tol: f64) -> Result<Rescore> {
    if m.format_version != FORMAT_VERSION {
        bail!("unsupported model format_version {} (expected {FORMAT_VERSION})", m.format_version);
    }
    if (d.n(), d.p(), d.has_intercept()) != (m.n, m.p, m.intercept) {
        bail!(
            "data shape (n={}, p={}, intercept={}) does not match the model (n={}, p={}, intercept={})",
            d.n(),
            d.p(),
            d.has_intercept(),
            m.n,
            m.p,
            m.intercept
        );
    }
    let nll = neg_loglik(&ModelParams::new(m.beta.clone(), m.theta.clone())?, d)?;
    let eta = d.residuals(&m.stage2_mean)?;
    let p2 = Stage2Problem::from_residuals(d, &eta, m.lambda_t, m.config.penalty)?;
    let p3 = Stage3Problem::from_theta(d, &m.theta, m.lambda_s, m.config.penalty)?;
    let o2 = p2.objective_theta(&m.theta)?;
    let o3 = p3.objective_beta(&m.beta)?;
    let max_rel_gap = [
        rel_gap(nll, m.neg_loglik),
        rel_gap(o2, m.stage2.objective),
        rel_gap(o3, m.stage3.objective),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    Ok(Rescore {
        neg_loglik: nll,
        stage2_objective: o2,
        stage3_objective: o3,
        max_rel_gap,
        stage2_kkt: kkt_check_theta(&p2, &m.theta, kkt_tol)?,
        stage3_kkt: kkt_check_beta(&p3, &m.beta, kkt_tol)?,
    })
}

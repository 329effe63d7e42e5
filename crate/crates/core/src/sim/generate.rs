//! Data generators for the two simulation designs.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::rng::{stream_rng, streams};
use crate::data::{Dataset, ModelParams};
use crate::error::{HippoError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Design {
    /// Variance driven by three equicorrelated covariates, zero mean.
    Sim1,
    /// AR(1) covariates with sparse mean and variance plus intercepts.
    Sim2,
    Custom,
}

/// Mean coefficients of the second design for covariates 1..=12.
pub const SIM2_BETA: [f64; 12] = [3.0, 3.0, 3.0, 1.5, 1.5, 1.5, 0.0, 0.0, 0.0, 2.0, 2.0, 2.0];
/// Log-variance coefficients of the second design for covariates 1..=15,
/// used directly as `2 log sigma = theta_0 + x'theta`.
pub const SIM2_THETA: [f64; 15] = [
    1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.5, 0.5, 0.5, 0.0, 0.0, 0.0, 0.75, 0.75, 0.75,
];
pub const SIM2_BETA0: f64 = 2.0;
pub const SIM2_THETA0: f64 = 1.0;
pub const SIM2_AR: f64 = 0.5;

/// Generator parameters.
///
/// `beta_star` and `theta_star` are in model units (`2 log sigma = x'theta`)
/// and indexed like the columns of the generated dataset, i.e. including
/// the intercept column when `intercept` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub design: Design,
    pub n: usize,
    /// Number of covariates, excluding any intercept column.
    pub p: usize,
    /// Sim1: equicorrelation of covariates 1-3; Sim2/Custom: AR(1) decay.
    pub rho: f64,
    pub intercept: bool,
    pub beta_star: Vec<f64>,
    pub theta_star: Vec<f64>,
    pub n_replicates: usize,
    pub seed: u64,
}

impl SimulationSpec {
    pub fn sim1(n: usize, p: usize, rho: f64, n_replicates: usize, seed: u64) -> Result<Self> {
        if p < 3 {
            return Err(HippoError::Config("simulation 1 needs p >= 3".into()));
        }
        let mut theta = vec![0.0; p];
        theta[..3].iter_mut().for_each(|t| *t = 1.0);
        let spec = SimulationSpec {
            design: Design::Sim1,
            n,
            p,
            rho,
            intercept: false,
            beta_star: vec![0.0; p],
            theta_star: theta,
            n_replicates,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Paper defaults: `(n, p) = (200, 2000)`.
    pub fn sim1_default(rho: f64, n_replicates: usize, seed: u64) -> Result<Self> {
        Self::sim1(200, 2000, rho, n_replicates, seed)
    }

    pub fn sim2(n: usize, n_replicates: usize, seed: u64) -> Result<Self> {
        Self::sim2_with_p(n, 600, n_replicates, seed)
    }

    pub fn sim2_with_p(n: usize, p: usize, n_replicates: usize, seed: u64) -> Result<Self> {
        if p < SIM2_THETA.len() {
            return Err(HippoError::Config(format!("simulation 2 needs p >= {}", SIM2_THETA.len())));
        }
        let mut beta = vec![0.0; p + 1];
        beta[0] = SIM2_BETA0;
        beta[1..=SIM2_BETA.len()].copy_from_slice(&SIM2_BETA);
        let mut theta = vec![0.0; p + 1];
        theta[0] = SIM2_THETA0;
        theta[1..=SIM2_THETA.len()].copy_from_slice(&SIM2_THETA);
        let spec = SimulationSpec {
            design: Design::Sim2,
            n,
            p,
            rho: SIM2_AR,
            intercept: true,
            beta_star: beta,
            theta_star: theta,
            n_replicates,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_replicates == 0 {
            return Err(HippoError::Config("n_replicates must be >= 1".into()));
        }
        if !(self.rho >= 0.0 && self.rho < 1.0) {
            return Err(HippoError::Config(format!("rho must lie in [0,1), got {}", self.rho)));
        }
        if self.n < 2 || self.p == 0 {
            return Err(HippoError::Config("need n >= 2 and p >= 1".into()));
        }
        let cols = self.p + usize::from(self.intercept);
        if self.beta_star.len() != cols || self.theta_star.len() != cols {
            return Err(HippoError::Config(format!(
                "true parameters must have length {cols} (p plus intercept)"
            )));
        }
        Ok(())
    }

    /// True parameters in model units.
    pub fn truth(&self) -> ModelParams {
        ModelParams {
            beta: self.beta_star.clone(),
            theta: self.theta_star.clone(),
        }
    }
}

/// Draws replicate `replicate` of `spec`.
pub fn generate(spec: &SimulationSpec, replicate: usize) -> Result<(Dataset, ModelParams)> {
    spec.validate()?;
    if replicate >= spec.n_replicates {
        return Err(HippoError::Config(format!(
            "replicate {replicate} out of range (n_replicates = {})",
            spec.n_replicates
        )));
    }
    let (n, p) = (spec.n, spec.p);
    let mut design_rng = stream_rng(spec.seed, replicate as u64, streams::DESIGN);
    let mut noise_rng = stream_rng(spec.seed, replicate as u64, streams::NOISE);

    let mut z = DMatrix::<f64>::zeros(n, p);
    match spec.design {
        Design::Sim1 => {
            let (a, b) = (spec.rho.sqrt(), (1.0 - spec.rho).sqrt());
            for i in 0..n {
                let common: f64 = design_rng.sample(StandardNormal);
                for j in 0..p {
                    let e: f64 = design_rng.sample(StandardNormal);
                    z[(i, j)] = if j < 3 { a * common + b * e } else { e };
                }
            }
        }
        Design::Sim2 | Design::Custom => {
            let r = spec.rho;
            let s = (1.0 - r * r).sqrt();
            for i in 0..n {
                let mut prev = 0.0;
                for j in 0..p {
                    let e: f64 = design_rng.sample(StandardNormal);
                    let v = if j == 0 { e } else { r * prev + s * e };
                    z[(i, j)] = v;
                    prev = v;
                }
            }
        }
    }
    let x = if spec.intercept { z.insert_column(0, 1.0) } else { z };
    let truth = spec.truth();
    let mut y = DVector::zeros(n);
    for i in 0..n {
        let row = x.row(i);
        let mean: f64 = row.iter().zip(&truth.beta).map(|(a, b)| a * b).sum();
        let lp: f64 = row.iter().zip(&truth.theta).map(|(a, b)| a * b).sum();
        let eps: f64 = noise_rng.sample(StandardNormal);
        y[i] = mean + (lp / 2.0).exp() * eps;
    }
    let d = Dataset::new(x, y, spec.intercept)?;
    Ok((d, truth))
}

use serde::{Deserialize, Serialize};

use crate::error::{HippoError, Result};

/// Iteration controls for the LLA outer loop and its convex inner solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Outer stopping rule: sup-norm change between LLA iterates.
    pub tol: f64,
    /// Inner stopping rule: largest coefficient change in one pass.
    pub inner_tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-6,
            inner_tol: 1e-9,
            max_outer: 10,
            max_inner: 20_000,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol < 1.0 && self.inner_tol > 0.0 && self.inner_tol < 1.0) {
            return Err(HippoError::Config(format!(
                "solver tolerances must lie in (0,1): tol={}, inner_tol={}",
                self.tol, self.inner_tol
            )));
        }
        if self.max_outer == 0 || self.max_inner == 0 {
            return Err(HippoError::Config("iteration caps must be positive".into()));
        }
        Ok(())
    }
}

/// Settings for the heteroscedasticity-adjusted Lasso of stage 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Stage1Config {
    pub c_mult: f64,
    /// Confidence input of the penalty quantile; `None` means
    /// `0.1 / log(max(n, p))`.
    pub gamma: Option<f64>,
    #[serde(alias = "loading_iters")]
    pub n_loading_iters: usize,
    pub max_cd_iters: usize,
    pub tol: f64,
}

impl Default for Stage1Config {
    fn default() -> Self {
        Stage1Config {
            c_mult: 1.1,
            gamma: None,
            n_loading_iters: 3,
            max_cd_iters: 10_000,
            tol: 1e-7,
        }
    }
}

impl Stage1Config {
    pub fn gamma_for(&self, n: usize, p: usize) -> f64 {
        self.gamma
            .unwrap_or_else(|| 0.1 / (n.max(p).max(3) as f64).ln())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c_mult > 1.0) {
            return Err(HippoError::Config(format!("c_mult must exceed 1, got {}", self.c_mult)));
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0 && g < 1.0) {
                return Err(HippoError::Config(format!("gamma must lie in (0,1), got {g}")));
            }
        }
        if self.n_loading_iters == 0 || self.max_cd_iters == 0 {
            return Err(HippoError::Config("stage1 iteration counts must be positive".into()));
        }
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(HippoError::Config(format!("stage1 tol must lie in (0,1), got {}", self.tol)));
        }
        Ok(())
    }
}

/// All solver settings of the three-stage pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub stage1: Stage1Config,
    pub stage2: SolverConfig,
    pub stage3: SolverConfig,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.stage1.validate()?;
        self.stage2.validate()?;
        self.stage3.validate()
    }
}

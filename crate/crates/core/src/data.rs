//! The heteroscedastic linear model: data, parameters and likelihood.
//!
//! Observations follow `y_i = x_i'beta + sigma_i * eps_i` with the
//! log-linear scale `2 log sigma_i = x_i'theta`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, HippoError, Result};

/// Clamp applied to every linear predictor `x_i'theta` before it is
/// exponentiated.
pub const LPMAX: f64 = 50.0;

#[inline]
pub fn clamp_lp(lp: f64) -> f64 {
    lp.clamp(-LPMAX, LPMAX)
}

/// Design matrix, response and intercept flag.
///
/// When `has_intercept` is set the first column is an all-ones column that
/// is left unpenalized in every stage and ignored by support counts.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: DVector<f64>,
    has_intercept: bool,
    col_norms: Vec<f64>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, has_intercept: bool) -> Result<Self> {
        let (n, p) = x.shape();
        if n < 2 {
            return Err(HippoError::InvalidData(format!("need n >= 2 samples, got {n}")));
        }
        if p < 1 {
            return Err(HippoError::InvalidData("need at least one column".into()));
        }
        check_len("response length", n, y.len())?;
        if let Some(pos) = x.iter().position(|v| !v.is_finite()) {
            return Err(HippoError::InvalidData(format!(
                "non-finite entry in X at row {}, column {}",
                pos % n,
                pos / n
            )));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(HippoError::InvalidData(format!("non-finite response at row {i}")));
        }
        if has_intercept && x.column(0).iter().any(|&v| v != 1.0) {
            return Err(HippoError::InvalidData(
                "intercept requested but column 0 is not all ones".into(),
            ));
        }
        let col_norms: Vec<f64> = x.column_iter().map(|c| c.norm()).collect();
        if let Some(j) = col_norms.iter().position(|&c| c <= 0.0) {
            return Err(HippoError::InvalidData(format!("column {j} is identically zero")));
        }
        Ok(Dataset {
            x,
            y,
            has_intercept,
            col_norms,
        })
    }

    /// Builds a dataset from covariates without an intercept column,
    /// prepending one when `intercept` is set.
    pub fn from_covariates(z: DMatrix<f64>, y: DVector<f64>, intercept: bool) -> Result<Self> {
        if intercept {
            let n = z.nrows();
            let x = z.insert_column(0, 1.0);
            debug_assert_eq!(x.nrows(), n);
            Dataset::new(x, y, true)
        } else {
            Dataset::new(z, y, false)
        }
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn has_intercept(&self) -> bool {
        self.has_intercept
    }

    /// Column `j` as a contiguous slice (storage is column-major).
    #[inline]
    pub fn col(&self, j: usize) -> &[f64] {
        let n = self.n();
        &self.x.as_slice()[j * n..(j + 1) * n]
    }

    pub fn col_norms(&self) -> &[f64] {
        &self.col_norms
    }

    /// True when coordinate `j` is the unpenalized intercept.
    #[inline]
    pub fn is_intercept(&self, j: usize) -> bool {
        self.has_intercept && j == 0
    }

    /// Indices of penalized coordinates.
    pub fn penalized(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.p()).filter(move |&j| !self.is_intercept(j))
    }

    /// Replaces the response, keeping the design.
    pub fn with_response(&self, y: DVector<f64>) -> Result<Self> {
        check_len("response length", self.n(), y.len())?;
        let mut d = self.clone();
        d.y = y;
        Ok(d)
    }

    /// Returns `X v`.
    pub fn predict(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len("coefficient vector", self.p(), v.len())?;
        let mut out = vec![0.0; self.n()];
        for (j, &c) in v.iter().enumerate() {
            if c != 0.0 {
                for (o, &xij) in out.iter_mut().zip(self.col(j)) {
                    *o += xij * c;
                }
            }
        }
        Ok(out)
    }

    /// Residuals `y - X beta`.
    pub fn residuals(&self, beta: &[f64]) -> Result<Vec<f64>> {
        let fit = self.predict(beta)?;
        Ok(self.y.iter().zip(fit).map(|(y, f)| y - f).collect())
    }
}

/// Mean and log-variance coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub beta: Vec<f64>,
    pub theta: Vec<f64>,
}

impl ModelParams {
    pub fn new(beta: Vec<f64>, theta: Vec<f64>) -> Result<Self> {
        check_len("theta length", beta.len(), theta.len())?;
        Ok(ModelParams { beta, theta })
    }

    pub fn zeros(p: usize) -> Self {
        ModelParams {
            beta: vec![0.0; p],
            theta: vec![0.0; p],
        }
    }

    fn check(&self, d: &Dataset) -> Result<()> {
        check_len("beta length", d.p(), self.beta.len())?;
        check_len("theta length", d.p(), self.theta.len())
    }
}

/// `sigma_i = exp(x_i'theta / 2)` with the linear predictor clamped to
/// `[-LPMAX, LPMAX]`.
pub fn sigma(params: &ModelParams, d: &Dataset) -> Result<Vec<f64>> {
    params.check(d)?;
    sigma_from_theta(d, &params.theta)
}

pub fn sigma_from_theta(d: &Dataset, theta: &[f64]) -> Result<Vec<f64>> {
    Ok(d
        .predict(theta)?
        .into_iter()
        .map(|lp| (clamp_lp(lp) / 2.0).exp())
        .collect())
}

/// `sum_i (y_i - x_i'beta)^2 exp(-x_i'theta) + x_i'theta`, additive
/// constants dropped.
pub fn neg_loglik(params: &ModelParams, d: &Dataset) -> Result<f64> {
    params.check(d)?;
    let resid = d.residuals(&params.beta)?;
    let lp = d.predict(&params.theta)?;
    Ok(resid
        .iter()
        .zip(&lp)
        .map(|(r, &l)| r * r * (-clamp_lp(l)).exp() + l)
        .sum())
}

//! Stage 1: Lasso with data-driven, heteroscedasticity-adjusted penalty
//! loadings.
//!
//! The problem solved for fixed loadings is
//! `(1/n)||y - X b||^2 + (lambda/n) sum_j ups_j |b_j|` with
//! `lambda = 2 c sqrt(n) Phi^{-1}(1 - gamma/(2p))` and
//! `ups_j = sqrt(mean_i x_ij^2 eta_i^2)`, where `eta` are the residuals of the
//! previous round (the centered response in the first round).

use crate::config::Stage1Config;
use crate::data::Dataset;
use crate::error::Result;
use crate::linalg::{dot, normal_quantile, soft_threshold};

#[derive(Debug, Clone)]
pub struct Stage1Result {
    pub beta: Vec<f64>,
    pub residuals: Vec<f64>,
    pub loadings: Vec<f64>,
    pub lambda: f64,
    pub converged: bool,
    pub sweeps: usize,
    /// Objective after every coordinate sweep of the final loading round.
    pub objective_trace: Vec<f64>,
}

/// Penalty level `2 c sqrt(n) Phi^{-1}(1 - gamma / (2p))`.
pub fn penalty_level(n: usize, p: usize, cfg: &Stage1Config) -> Result<f64> {
    let gamma = cfg.gamma_for(n, p);
    let z = normal_quantile(1.0 - gamma / (2.0 * p as f64))?;
    Ok(cfg.c_mult * 2.0 * (n as f64).sqrt() * z)
}

/// Loadings `sqrt((1/n) sum_i x_ij^2 eta_i^2)`; zero for the intercept.
pub fn loadings_from_residuals(d: &Dataset, eta: &[f64]) -> Vec<f64> {
    let n = d.n() as f64;
    (0..d.p())
        .map(|j| {
            if d.is_intercept(j) {
                0.0
            } else {
                let s: f64 = d.col(j).iter().zip(eta).map(|(x, e)| x * x * e * e).sum();
                (s / n).sqrt()
            }
        })
        .collect()
}

pub fn fit_stage1(d: &Dataset, cfg: &Stage1Config) -> Result<Stage1Result> {
    cfg.validate()?;
    let n = d.n();
    let p = d.p();
    let lambda = penalty_level(n, p, cfg)?;

    let ybar = d.y().mean();
    let mut eta: Vec<f64> = d.y().iter().map(|y| y - ybar).collect();
    let mut solver = CovarianceLasso::new(d);
    let mut beta = vec![0.0; p];
    let mut loadings = vec![0.0; p];
    let mut out = None;
    for _ in 0..cfg.n_loading_iters {
        loadings = loadings_from_residuals(d, &eta);
        let pen: Vec<f64> = loadings.iter().map(|u| lambda * u / 2.0).collect();
        let (converged, sweeps, trace) = solver.solve(&mut beta, &pen, cfg.tol, cfg.max_cd_iters);
        eta = d.residuals(&beta)?;
        out = Some((converged, sweeps, trace));
    }
    let (converged, sweeps, trace) = out.expect("at least one loading round");
    let n_f = n as f64;
    Ok(Stage1Result {
        residuals: eta,
        loadings,
        lambda,
        converged,
        sweeps,
        objective_trace: trace.into_iter().map(|v| 2.0 * v / n_f).collect(),
        beta,
    })
}

/// Coordinate descent for `0.5 ||y - X b||^2 + sum_j pen_j |b_j|` with
/// covariance updates: Gram columns are computed once per coordinate that
/// ever becomes active and cached.
pub(crate) struct CovarianceLasso<'a> {
    d: &'a Dataset,
    xty: Vec<f64>,
    yty: f64,
    sq_norms: Vec<f64>,
    gram: Vec<Option<Vec<f64>>>,
}

impl<'a> CovarianceLasso<'a> {
    pub(crate) fn new(d: &'a Dataset) -> Self {
        let y = d.y().as_slice();
        let p = d.p();
        CovarianceLasso {
            d,
            xty: (0..p).map(|j| dot(d.col(j), y)).collect(),
            yty: dot(y, y),
            sq_norms: d.col_norms().iter().map(|c| c * c).collect(),
            gram: vec![None; p],
        }
    }

    fn gram_col(&mut self, k: usize) -> &[f64] {
        if self.gram[k].is_none() {
            let xk = self.d.col(k);
            let col = (0..self.d.p()).map(|j| dot(self.d.col(j), xk)).collect();
            self.gram[k] = Some(col);
        }
        self.gram[k].as_deref().unwrap()
    }

    /// Half objective `0.5 ||r||^2 + sum pen |b|`, using `g = X'r`.
    fn objective(&self, beta: &[f64], g: &[f64], pen: &[f64]) -> f64 {
        let rss = self.yty - dot(beta, &self.xty) - dot(beta, g);
        0.5 * rss.max(0.0)
            + beta
                .iter()
                .zip(pen)
                .map(|(b, w)| w * b.abs())
                .sum::<f64>()
    }

    /// Returns `(converged, sweeps, objective after each sweep)`.
    pub(crate) fn solve(
        &mut self,
        beta: &mut [f64],
        pen: &[f64],
        tol: f64,
        max_sweeps: usize,
    ) -> (bool, usize, Vec<f64>) {
        let p = self.d.p();
        // g = X'y - X'X beta
        let mut g = self.xty.clone();
        for k in 0..p {
            if beta[k] != 0.0 {
                let bk = beta[k];
                let col = self.gram_col(k).to_vec();
                g.iter_mut().zip(&col).for_each(|(gj, c)| *gj -= c * bk);
            }
        }
        let mut trace = Vec::new();
        let mut sweeps = 0;
        let mut full = true;
        let mut converged = false;
        while sweeps < max_sweeps {
            sweeps += 1;
            let mut max_change = 0.0f64;
            let mut active_changed = false;
            for j in 0..p {
                if !full && beta[j] == 0.0 {
                    continue;
                }
                let old = beta[j];
                let new = soft_threshold(old * self.sq_norms[j] + g[j], pen[j]) / self.sq_norms[j];
                if new != old {
                    if old == 0.0 {
                        active_changed = true;
                    }
                    let delta = new - old;
                    beta[j] = new;
                    let col = self.gram_col(j);
                    for (gk, c) in g.iter_mut().zip(col) {
                        *gk -= c * delta;
                    }
                    max_change = max_change.max(delta.abs());
                }
            }
            trace.push(self.objective(beta, &g, pen));
            if max_change < tol {
                if full && !active_changed {
                    converged = true;
                    break;
                }
                full = true;
            } else {
                full = false;
            }
        }
        (converged, sweeps, trace)
    }
}

//! Stage 3: inverse-variance weighted penalized least squares for the mean.
//!
//! Minimizes `sum_i (y_i - x_i'beta)^2 / sigma_i^2 + 2n sum_j rho_{lambda_j}(|beta_j|)`
//! with `lambda_j = lambda_S n^{-1} sqrt(sum_i x_ij^2 / sigma_i^2)`. The
//! penalty is linearized by LLA and every weighted-L1 subproblem is solved
//! by accelerated proximal gradient with momentum restarts, run on a
//! working set that is grown until the full zero-subgradient conditions
//! hold.

use nalgebra::{DMatrix, DVector};

use crate::config::SolverConfig;
use crate::data::{sigma_from_theta, Dataset};
use crate::error::{check_len, HippoError, Result};
use crate::linalg::{dot, power_iteration, soft_threshold};
use crate::lla::{run_lla, InnerSolve};
use crate::oracle::{kkt_check_beta, KktCertificate};
use crate::penalty::Penalty;
use crate::stage2::support_of;

const POWER_STEPS: usize = 50;
const LIPSCHITZ_SAFETY: f64 = 1.1;
const MAX_WS_ROUNDS: usize = 200;

#[derive(Debug, Clone)]
pub struct Stage3Problem<'a> {
    pub d: &'a Dataset,
    pub sigma_hat: Vec<f64>,
    pub lambda_s: f64,
    pub penalty: Penalty,
    pub loadings: Vec<f64>,
    /// Observation weights `1 / sigma_i^2`.
    pub weights: Vec<f64>,
}

impl<'a> Stage3Problem<'a> {
    pub fn new(d: &'a Dataset, sigma_hat: Vec<f64>, lambda_s: f64, penalty: Penalty) -> Result<Self> {
        check_len("sigma_hat length", d.n(), sigma_hat.len())?;
        if let Some(s) = sigma_hat.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(HippoError::Domain(format!("sigma_hat must be finite and positive, got {s}")));
        }
        if !(lambda_s >= 0.0 && lambda_s.is_finite()) {
            return Err(HippoError::Domain(format!("lambda_S must be finite and >= 0, got {lambda_s}")));
        }
        let weights: Vec<f64> = sigma_hat.iter().map(|s| 1.0 / (s * s)).collect();
        let n = d.n() as f64;
        let loadings = (0..d.p())
            .map(|j| {
                if d.is_intercept(j) {
                    0.0
                } else {
                    lambda_s * weighted_col_norm(d, &weights, j) / n
                }
            })
            .collect();
        Ok(Stage3Problem {
            d,
            sigma_hat,
            lambda_s,
            penalty,
            loadings,
            weights,
        })
    }

    /// Uses `sigma_i = exp(x_i'theta / 2)` (clamped) as the scale.
    pub fn from_theta(d: &'a Dataset, theta: &[f64], lambda_s: f64, penalty: Penalty) -> Result<Self> {
        Self::new(d, sigma_from_theta(d, theta)?, lambda_s, penalty)
    }

    pub fn n(&self) -> usize {
        self.d.n()
    }

    pub fn fit_value(&self, beta: &[f64]) -> Result<f64> {
        let r = self.d.residuals(beta)?;
        Ok(r.iter().zip(&self.weights).map(|(r, w)| w * r * r).sum())
    }

    pub fn penalty_value(&self, beta: &[f64]) -> f64 {
        2.0 * self.n() as f64 * self.penalty.total(beta, &self.loadings)
    }

    pub fn objective_beta(&self, beta: &[f64]) -> Result<f64> {
        Ok(self.fit_value(beta)? + self.penalty_value(beta))
    }

    /// `X' W^2 (y - X beta)` with `W^2 = diag(1/sigma^2)`.
    pub fn weighted_score(&self, beta: &[f64]) -> Result<Vec<f64>> {
        let r = self.d.residuals(beta)?;
        let wr: Vec<f64> = r.iter().zip(&self.weights).map(|(r, w)| r * w).collect();
        Ok((0..self.d.p()).map(|j| dot(self.d.col(j), &wr)).collect())
    }

    /// Gradient of the unpenalized part, `-2 X'W^2 (y - X beta)`.
    pub fn grad_fit_beta(&self, beta: &[f64]) -> Result<Vec<f64>> {
        Ok(self.weighted_score(beta)?.into_iter().map(|c| -2.0 * c).collect())
    }

    /// Smallest `lambda_S` at which the null model (zero, or the weighted
    /// intercept-only fit) satisfies the inactive zero-subgradient bound.
    pub fn lambda_max(d: &Dataset, sigma_hat: &[f64]) -> Result<f64> {
        let prob = Stage3Problem::new(d, sigma_hat.to_vec(), 1.0, Penalty::l1())?;
        let null = null_beta(d, &prob.weights);
        let c = prob.weighted_score(&null)?;
        let n = d.n() as f64;
        Ok(d.penalized()
            .map(|j| c[j].abs() / (n * prob.loadings[j]))
            .fold(0.0, f64::max))
    }
}

fn weighted_col_norm(d: &Dataset, weights: &[f64], j: usize) -> f64 {
    d.col(j)
        .iter()
        .zip(weights)
        .map(|(x, w)| x * x * w)
        .sum::<f64>()
        .sqrt()
}

/// Zero, or the weighted mean in the intercept coordinate.
pub fn null_beta(d: &Dataset, weights: &[f64]) -> Vec<f64> {
    let mut beta = vec![0.0; d.p()];
    if d.has_intercept() {
        let sw: f64 = weights.iter().sum();
        beta[0] = dot(weights, d.y().as_slice()) / sw;
    }
    beta
}

#[derive(Debug, Clone)]
pub struct Stage3Result {
    pub beta: Vec<f64>,
    pub objective: f64,
    pub support: Vec<usize>,
    pub outer_iters: usize,
    pub inner_iters_total: usize,
    /// Inner solves converged and the KKT certificate passed.
    pub converged: bool,
    /// The LLA iterates settled before the outer-iteration cap.
    pub lla_converged: bool,
    pub kkt: KktCertificate,
    pub objective_trace: Vec<f64>,
    pub first_iterate: Vec<f64>,
}

/// Minimizes `sum_i w_i (y_i - x_i'beta)^2 + 2n sum_j v_j |beta_j|`.
pub fn solve_weighted_l1(
    prob: &Stage3Problem<'_>,
    pen_weights: &[f64],
    init: &[f64],
    cfg: &SolverConfig,
) -> Result<InnerSolve> {
    let d = prob.d;
    let p = d.p();
    check_len("penalty weights length", p, pen_weights.len())?;
    check_len("initial beta length", p, init.len())?;
    let n_f = d.n() as f64;
    let thresholds: Vec<f64> = pen_weights.iter().map(|v| n_f * v).collect();
    let wy: Vec<f64> = d.y().iter().zip(&prob.weights).map(|(y, w)| y * w).collect();
    let yty = dot(d.y().as_slice(), &wy);

    let mut beta = init.to_vec();
    let mut in_ws = vec![false; p];
    let mut trace = Vec::new();
    let mut iters = 0;
    let mut converged = false;

    for round in 0..MAX_WS_ROUNDS {
        // c_j = X_j'W^2 r at the current iterate; coordinates outside the
        // working set must satisfy |c_j| <= n v_j
        let c = prob.weighted_score(&beta)?;
        let mut violators: Vec<(usize, f64)> = (0..p)
            .filter(|&j| !in_ws[j])
            .map(|j| (j, c[j].abs() - thresholds[j] * (1.0 + 1e-10) - 1e-12 * (1.0 + thresholds[j])))
            .filter(|&(_, slack)| slack > 0.0)
            .collect();
        if round > 0 && violators.is_empty() {
            converged = true;
            break;
        }
        violators.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let mut ws: Vec<usize> = (0..p)
            .filter(|&j| d.is_intercept(j) || beta[j] != 0.0 || (in_ws[j] && thresholds[j] == 0.0))
            .collect();
        let budget = ws.len().max(10);
        ws.extend(violators.iter().take(budget).map(|(j, _)| *j));
        ws.sort_unstable();
        ws.dedup();
        in_ws.iter_mut().for_each(|b| *b = false);
        ws.iter().for_each(|&j| in_ws[j] = true);
        if ws.is_empty() {
            trace.push(yty);
            converged = true;
            break;
        }
        let sub = fista_on_working_set(prob, &ws, &thresholds, &beta, &wy, yty, cfg)?;
        iters += sub.iters;
        for (k, &j) in ws.iter().enumerate() {
            beta[j] = sub.coeffs[k];
        }
        trace.extend(sub.objective_trace);
        if !sub.converged {
            break;
        }
    }
    Ok(InnerSolve {
        coeffs: beta,
        iters,
        converged,
        objective_trace: trace,
    })
}

/// FISTA with function-value restart on the working-set Gram system.
fn fista_on_working_set(
    prob: &Stage3Problem<'_>,
    ws: &[usize],
    thresholds: &[f64],
    beta: &[f64],
    wy: &[f64],
    yty: f64,
    cfg: &SolverConfig,
) -> Result<InnerSolve> {
    let d = prob.d;
    let k = ws.len();
    let wcols: Vec<Vec<f64>> = ws
        .iter()
        .map(|&j| d.col(j).iter().zip(&prob.weights).map(|(x, w)| x * w).collect())
        .collect();
    let mut gram = DMatrix::<f64>::zeros(k, k);
    for a in 0..k {
        for b in a..k {
            let v = dot(&wcols[a], d.col(ws[b]));
            gram[(a, b)] = v;
            gram[(b, a)] = v;
        }
    }
    let xty = DVector::from_iterator(k, ws.iter().map(|&j| dot(d.col(j), wy)));
    let thr: Vec<f64> = ws.iter().map(|&j| thresholds[j]).collect();

    // f(b) = yty - 2 b'xty + b'G b ; grad = 2 (G b - xty)
    let smooth = |b: &DVector<f64>, gb: &DVector<f64>| yty - 2.0 * b.dot(&xty) + b.dot(gb);
    let pen = |b: &DVector<f64>| -> f64 { b.iter().zip(&thr).map(|(v, t)| 2.0 * t * v.abs()).sum() };

    let lmax = power_iteration(k, POWER_STEPS, |v, out| {
        let r = &gram * DVector::from_column_slice(v);
        out.copy_from_slice(r.as_slice());
    });
    let mut lip = (2.0 * lmax * LIPSCHITZ_SAFETY).max(1e-300);

    let mut x = DVector::from_iterator(k, ws.iter().map(|&j| beta[j]));
    let mut gx = &gram * &x;
    let mut fx = smooth(&x, &gx) + pen(&x);
    let mut z = x.clone();
    let mut gz = gx.clone();
    let mut t = 1.0f64;
    let mut trace = vec![fx];
    let mut iters = 0;
    let mut converged = false;
    while iters < cfg.max_inner {
        iters += 1;
        // prox step from z with step 1/L: threshold 2 n v_j / L
        let mut xn = DVector::zeros(k);
        for i in 0..k {
            let grad = 2.0 * (gz[i] - xty[i]);
            xn[i] = soft_threshold(z[i] - grad / lip, 2.0 * thr[i] / lip);
        }
        let gxn = &gram * &xn;
        let fxn = smooth(&xn, &gxn) + pen(&xn);
        // increases at rounding level are accepted so that the step size is
        // not driven down by noise in the objective near the optimum
        if fxn > fx + 1e-13 * fx.abs().max(1.0) {
            if z == x {
                // plain proximal step failed to descend: step too long
                lip *= 2.0;
            }
            // restart momentum from the last accepted iterate
            z.copy_from(&x);
            gz.copy_from(&gx);
            t = 1.0;
            continue;
        }
        let change = (&xn - &x).amax();
        let tn = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let mom = (t - 1.0) / tn;
        z = &xn + (&xn - &x) * mom;
        gz = &gxn + (&gxn - &gx) * mom;
        x = xn;
        gx = gxn;
        fx = fxn;
        t = tn;
        trace.push(fx);
        if change < cfg.inner_tol {
            converged = true;
            break;
        }
    }
    if !fx.is_finite() {
        return Err(HippoError::Solver("stage-3 objective became non-finite".into()));
    }
    Ok(InnerSolve {
        coeffs: x.iter().copied().collect(),
        iters,
        converged,
        objective_trace: trace,
    })
}

pub fn fit_stage3(prob: &Stage3Problem<'_>, cfg: &SolverConfig) -> Result<Stage3Result> {
    let init = null_beta(prob.d, &prob.weights);
    fit_stage3_from(prob, cfg, &init)
}

/// Fits stage 3 starting the initial L1 solve at `init` (warm start).
pub fn fit_stage3_from(prob: &Stage3Problem<'_>, cfg: &SolverConfig, init: &[f64]) -> Result<Stage3Result> {
    let out = run_lla(
        &prob.penalty,
        &prob.loadings,
        init,
        cfg,
        |w, start| solve_weighted_l1(prob, w, start, cfg),
        |b| prob.objective_beta(b),
    )?;
    let beta = out.coeffs;
    let objective = prob.objective_beta(&beta)?;
    let kkt = kkt_check_beta(prob, &beta, 1e-4 * prob.n() as f64)?;
    Ok(Stage3Result {
        support: support_of(&beta),
        objective,
        outer_iters: out.outer_iters,
        inner_iters_total: out.inner_total,
        converged: out.inner_converged && kkt.passed,
        lla_converged: out.outer_converged,
        kkt,
        objective_trace: out.objective_trace,
        first_iterate: out.first,
        beta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn objective_examples() {
        let x = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        let d = Dataset::new(x, DVector::from_vec(vec![2.0, 2.0]), false).unwrap();
        let prob = Stage3Problem::new(&d, vec![2.0, 2.0], 0.0, Penalty::default()).unwrap();
        // (2-1)^2 / 4 per row
        assert_abs_diff_eq!(prob.objective_beta(&[1.0]).unwrap(), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(prob.objective_beta(&[2.0]).unwrap(), 0.0, epsilon = 1e-15);

        let prob = Stage3Problem::new(&d, vec![1.0, 1.0], 0.5, Penalty::default()).unwrap();
        let rss = 2.0 * 1.5f64.powi(2);
        let lam = 0.5 * 2f64.sqrt() / 2.0;
        let pen = 2.0 * 2.0 * Penalty::default().value(0.5, lam).unwrap();
        assert_abs_diff_eq!(prob.objective_beta(&[0.5]).unwrap(), rss + pen, epsilon = 1e-12);
    }

    #[test]
    fn rejects_bad_scale() {
        let x = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        let d = Dataset::new(x, DVector::zeros(2), false).unwrap();
        assert!(Stage3Problem::new(&d, vec![1.0, 0.0], 0.5, Penalty::default()).is_err());
        assert!(Stage3Problem::new(&d, vec![1.0], 0.5, Penalty::default()).is_err());
    }
}

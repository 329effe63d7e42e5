//! Oracle estimators, zero-subgradient certificates and Wald intervals.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::data::{clamp_lp, Dataset, LPMAX};
use crate::error::{check_len, HippoError, Result};
use crate::linalg::{condition_number, inverse_spd, normal_quantile, solve_spd, MAX_CONDITION};
use crate::pipeline::HippoFit;
use crate::stage2::{Stage2Problem, SUPPORT_EPS};
use crate::stage3::Stage3Problem;

/// Numerical check of the first-order conditions of a penalized problem.
///
/// Active coordinates must have a vanishing gradient of the full objective;
/// inactive ones must have a fit gradient inside the penalty's
/// subdifferential at zero. Both are checked against the absolute `tol`;
/// the inactive side is also reported as a ratio to the bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktCertificate {
    pub max_active_violation: f64,
    pub max_inactive_ratio: f64,
    /// Largest amount by which an inactive gradient exceeds its bound.
    pub max_inactive_excess: f64,
    pub tol: f64,
    pub passed: bool,
}

/// Shared logic: `grad` is the fit gradient, `pen_grad(j, t)` the penalty
/// gradient magnitude for coordinate `j` at `|coef_j| = t`.
fn certify<F>(coef: &[f64], grad: &[f64], is_intercept: impl Fn(usize) -> bool, pen_grad: F, tol: f64) -> KktCertificate
where
    F: Fn(usize, f64) -> f64,
{
    let mut active = 0.0f64;
    let mut ratio = 0.0f64;
    let mut excess = 0.0f64;
    for j in 0..coef.len() {
        let c = coef[j];
        if is_intercept(j) {
            active = active.max(grad[j].abs());
        } else if c.abs() > SUPPORT_EPS {
            let v = (grad[j] + c.signum() * pen_grad(j, c.abs())).abs();
            active = active.max(v);
        } else {
            let bound = pen_grad(j, 0.0);
            excess = excess.max(grad[j].abs() - bound);
            if bound > 0.0 {
                ratio = ratio.max(grad[j].abs() / bound);
            } else if grad[j] != 0.0 {
                ratio = f64::INFINITY;
            }
        }
    }
    KktCertificate {
        max_active_violation: active,
        max_inactive_ratio: ratio,
        max_inactive_excess: excess.max(0.0),
        tol,
        passed: active <= tol && excess <= tol,
    }
}

/// Stage-2 conditions: `g_j + 4n sgn(theta_j) rho'(|theta_j|) = 0` on the
/// support, `|g_j| < 4n lambda_j` off it.
pub fn kkt_check_theta(prob: &Stage2Problem<'_>, theta: &[f64], tol: f64) -> Result<KktCertificate> {
    check_len("theta length", prob.p(), theta.len())?;
    let g = prob.grad_fit_theta(theta)?;
    let scale = 4.0 * prob.n() as f64;
    Ok(certify(
        theta,
        &g,
        |j| prob.d.is_intercept(j),
        |j, t| scale * prob.penalty.deriv_unchecked(t, prob.loadings[j]),
        tol,
    ))
}

/// Stage-3 conditions: `-2 X_j'W^2 r + 2n sgn(beta_j) rho'(|beta_j|) = 0` on
/// the support, `|X_j'W^2 r| < n lambda_j` off it.
pub fn kkt_check_beta(prob: &Stage3Problem<'_>, beta: &[f64], tol: f64) -> Result<KktCertificate> {
    check_len("beta length", prob.d.p(), beta.len())?;
    let g = prob.grad_fit_beta(beta)?;
    let scale = 2.0 * prob.n() as f64;
    Ok(certify(
        beta,
        &g,
        |j| prob.d.is_intercept(j),
        |j, b| scale * prob.penalty.deriv_unchecked(b, prob.loadings[j]),
        tol,
    ))
}

fn check_indices(p: usize, set: &[usize]) -> Result<()> {
    if let Some(&j) = set.iter().find(|&&j| j >= p) {
        return Err(HippoError::Domain(format!("index {j} out of range for p = {p}")));
    }
    Ok(())
}

/// Weighted least squares restricted to `support`:
/// `(X_S'W^2X_S)^{-1} X_S'W^2 y` with `W = diag(1/sigma)`, zero elsewhere.
pub fn oracle_wls(d: &Dataset, support: &[usize], sigma: &[f64]) -> Result<Vec<f64>> {
    check_len("sigma length", d.n(), sigma.len())?;
    check_indices(d.p(), support)?;
    if support.len() > d.n() {
        return Err(HippoError::Domain(format!(
            "support size {} exceeds n = {}",
            support.len(),
            d.n()
        )));
    }
    let mut out = vec![0.0; d.p()];
    if support.is_empty() {
        return Ok(out);
    }
    let w: Vec<f64> = sigma.iter().map(|s| 1.0 / (s * s)).collect();
    let (a, b) = weighted_normal_equations(d, support, &w, d.y().as_slice());
    let cond = condition_number(&a);
    if !(cond < MAX_CONDITION) {
        return Err(HippoError::Singular {
            context: "oracle weighted least squares".into(),
            condition: cond,
        });
    }
    let sol = solve_spd(&a, &b, "oracle weighted least squares")?;
    for (k, &j) in support.iter().enumerate() {
        out[j] = sol[k];
    }
    Ok(out)
}

fn weighted_normal_equations(d: &Dataset, set: &[usize], w: &[f64], y: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
    let k = set.len();
    let mut a = DMatrix::zeros(k, k);
    let mut b = DVector::zeros(k);
    for (r, &j) in set.iter().enumerate() {
        let xj = d.col(j);
        b[r] = xj.iter().zip(w).zip(y).map(|((x, w), y)| x * w * y).sum();
        for (c, &l) in set.iter().enumerate().skip(r) {
            let v: f64 = xj.iter().zip(d.col(l)).zip(w).map(|((x, z), w)| x * z * w).sum();
            a[(r, c)] = v;
            a[(c, r)] = v;
        }
    }
    (a, b)
}

/// Diagnostics of the restricted Newton solve.
#[derive(Debug, Clone)]
pub struct OracleMle {
    pub theta: Vec<f64>,
    pub iterations: usize,
    pub grad_norm: f64,
    /// Smallest Hessian eigenvalue at every Newton iterate.
    pub min_hessian_eigs: Vec<f64>,
}

const MLE_MAX_NEWTON: usize = 100;

/// Newton minimization of `sum_i x_{i,T}'theta_T + eta_i^2 exp(-x_{i,T}'theta_T)`
/// over coordinates in `support`; zero elsewhere.
pub fn oracle_mle_theta(d: &Dataset, support: &[usize], eta_sq: &[f64]) -> Result<Vec<f64>> {
    Ok(oracle_mle_theta_traced(d, support, eta_sq)?.theta)
}

pub fn oracle_mle_theta_traced(d: &Dataset, support: &[usize], eta_sq: &[f64]) -> Result<OracleMle> {
    check_len("eta_sq length", d.n(), eta_sq.len())?;
    check_indices(d.p(), support)?;
    let n = d.n();
    let k = support.len();
    let mut theta = vec![0.0; d.p()];
    if k == 0 {
        return Ok(OracleMle {
            theta,
            iterations: 0,
            grad_norm: 0.0,
            min_hessian_eigs: Vec::new(),
        });
    }
    let objective = |lp: &[f64]| -> f64 {
        lp.iter()
            .zip(eta_sq)
            .map(|(&l, e)| l + e * (-clamp_lp(l)).exp())
            .sum()
    };
    let tol = 1e-8 * n as f64;
    let mut lp = d.predict(&theta)?;
    let mut f = objective(&lp);
    let mut eigs = Vec::new();
    for it in 0..=MLE_MAX_NEWTON {
        let slope: Vec<f64> = lp
            .iter()
            .zip(eta_sq)
            .map(|(&l, e)| if l.abs() < LPMAX { e * (-l).exp() } else { 0.0 })
            .collect();
        let ones = vec![1.0; n];
        let grad = DVector::from_iterator(
            k,
            support.iter().map(|&j| {
                d.col(j)
                    .iter()
                    .zip(&slope)
                    .zip(&ones)
                    .map(|((x, s), o)| x * (o - s))
                    .sum::<f64>()
            }),
        );
        let gnorm = grad.norm();
        let (hess, _) = weighted_normal_equations(d, support, &slope, &ones);
        eigs.push(SymmetricEigen::new(hess.clone()).eigenvalues.min());
        if gnorm < tol {
            return Ok(OracleMle {
                theta,
                iterations: it,
                grad_norm: gnorm,
                min_hessian_eigs: eigs,
            });
        }
        if it == MLE_MAX_NEWTON {
            break;
        }
        let step = solve_spd(&hess, &grad, "oracle variance likelihood Hessian")?;
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let mut cand = theta.clone();
            for (r, &j) in support.iter().enumerate() {
                cand[j] -= t * step[r];
            }
            let clp = d.predict(&cand)?;
            let fc = objective(&clp);
            if fc <= f {
                theta = cand;
                lp = clp;
                f = fc;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Err(HippoError::NonConvergence(format!(
        "restricted variance likelihood did not reach gradient norm {tol:.3e} within {MLE_MAX_NEWTON} Newton steps"
    )))
}

/// Wald interval from the weighted information on the fitted support.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub j: usize,
    pub estimate: f64,
    pub lo: f64,
    pub hi: f64,
    pub level: f64,
}

/// `beta_j +- z_{(1+level)/2} sqrt((D^{-1})_jj / n)` with
/// `D = (1/n) X_S' diag(sigma^-2) X_S` over the fitted mean support (the
/// intercept, if any, is always part of it).
pub fn confidence_interval(d: &Dataset, fit: &HippoFit, j: usize, level: f64) -> Result<ConfidenceInterval> {
    Ok(confidence_intervals(d, fit, &[j], level)?[0])
}

/// Intervals for several coordinates sharing one inversion.
pub fn confidence_intervals(d: &Dataset, fit: &HippoFit, coords: &[usize], level: f64) -> Result<Vec<ConfidenceInterval>> {
    if !(level >= 0.0 && level < 1.0) {
        return Err(HippoError::Domain(format!("confidence level must lie in [0,1), got {level}")));
    }
    check_len("sigma_hat length", d.n(), fit.sigma_hat.len())?;
    let support = fit.mean_support(d);
    let pos: Vec<usize> = coords
        .iter()
        .map(|&j| support.iter().position(|&s| s == j).ok_or(HippoError::NotInSupport { index: j }))
        .collect::<Result<_>>()?;
    let n = d.n() as f64;
    let w: Vec<f64> = fit.sigma_hat.iter().map(|s| 1.0 / (s * s)).collect();
    let ones = vec![1.0; d.n()];
    let (mut info, _) = weighted_normal_equations(d, &support, &w, &ones);
    info /= n;
    let inv = inverse_spd(&info, "weighted information matrix on the fitted support")?;
    let z = if level == 0.0 { 0.0 } else { normal_quantile((1.0 + level) / 2.0)? };
    Ok(coords
        .iter()
        .zip(pos)
        .map(|(&j, k)| {
            let half = z * (inv[(k, k)] / n).sqrt();
            let est = fit.beta[j];
            ConfidenceInterval {
                j,
                estimate: est,
                lo: est - half,
                hi: est + half,
                level,
            }
        })
        .collect())
}

//! Stage 2: penalized pseudo-likelihood for the log-variance coefficients.
//!
//! Minimizes
//! `sum_i x_i'theta + sum_i eta_i^2 exp(-x_i'theta) + 4n sum_j rho_{lambda_j}(|theta_j|)`
//! with `lambda_j = lambda_T ||X_j|| / n`. The folded-concave penalty is
//! handled by local linear approximation; every convex weighted-L1
//! subproblem is solved by cyclic coordinate descent with a damped
//! proximal Newton step per coordinate.

use crate::config::SolverConfig;
use crate::data::{clamp_lp, Dataset, LPMAX};
use crate::error::{check_len, HippoError, Result};
use crate::linalg::soft_threshold;
use crate::lla::{run_lla, InnerSolve};
use crate::oracle::{kkt_check_theta, KktCertificate};
use crate::penalty::Penalty;

/// Coefficients with magnitude at or below this are treated as zero.
pub const SUPPORT_EPS: f64 = 1e-8;

const MAX_HALVINGS: usize = 60;

pub(crate) fn support_of(coeffs: &[f64]) -> Vec<usize> {
    coeffs
        .iter()
        .enumerate()
        .filter(|(_, c)| c.abs() > SUPPORT_EPS)
        .map(|(j, _)| j)
        .collect()
}

/// Stage-2 problem data.
#[derive(Debug, Clone)]
pub struct Stage2Problem<'a> {
    pub d: &'a Dataset,
    pub eta_sq: Vec<f64>,
    pub lambda_t: f64,
    pub penalty: Penalty,
    pub loadings: Vec<f64>,
    col_sums: Vec<f64>,
}

impl<'a> Stage2Problem<'a> {
    /// Builds the problem from squared residuals; the loadings are
    /// `lambda_t ||X_j|| / n` and zero for the intercept.
    pub fn new(d: &'a Dataset, eta_sq: Vec<f64>, lambda_t: f64, penalty: Penalty) -> Result<Self> {
        check_len("eta_sq length", d.n(), eta_sq.len())?;
        if let Some(v) = eta_sq.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(HippoError::Domain(format!("squared residuals must be finite and >= 0, got {v}")));
        }
        if !(lambda_t >= 0.0 && lambda_t.is_finite()) {
            return Err(HippoError::Domain(format!("lambda_T must be finite and >= 0, got {lambda_t}")));
        }
        let n = d.n() as f64;
        let loadings = (0..d.p())
            .map(|j| if d.is_intercept(j) { 0.0 } else { lambda_t * d.col_norms()[j] / n })
            .collect();
        Ok(Self::assemble(d, eta_sq, lambda_t, penalty, loadings))
    }

    /// Builds the problem from residuals `eta`.
    pub fn from_residuals(d: &'a Dataset, eta: &[f64], lambda_t: f64, penalty: Penalty) -> Result<Self> {
        Self::new(d, eta.iter().map(|e| e * e).collect(), lambda_t, penalty)
    }

    fn assemble(d: &'a Dataset, eta_sq: Vec<f64>, lambda_t: f64, penalty: Penalty, loadings: Vec<f64>) -> Self {
        let col_sums = (0..d.p()).map(|j| d.col(j).iter().sum()).collect();
        Stage2Problem {
            d,
            eta_sq,
            lambda_t,
            penalty,
            loadings,
            col_sums,
        }
    }

    pub fn n(&self) -> usize {
        self.d.n()
    }

    pub fn p(&self) -> usize {
        self.d.p()
    }

    /// Unpenalized part: `sum_i x_i'theta + eta_i^2 exp(-x_i'theta)`.
    pub fn fit_value(&self, theta: &[f64]) -> Result<f64> {
        let lp = self.d.predict(theta)?;
        Ok(lp
            .iter()
            .zip(&self.eta_sq)
            .map(|(&l, e2)| l + e2 * (-clamp_lp(l)).exp())
            .sum())
    }

    pub fn penalty_value(&self, theta: &[f64]) -> f64 {
        4.0 * self.n() as f64 * self.penalty.total(theta, &self.loadings)
    }

    /// Full penalized objective.
    pub fn objective_theta(&self, theta: &[f64]) -> Result<f64> {
        Ok(self.fit_value(theta)? + self.penalty_value(theta))
    }

    /// Gradient of the unpenalized part:
    /// `g_j = sum_i (1 - eta_i^2 exp(-x_i'theta)) x_ij`.
    pub fn grad_fit_theta(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let lp = self.d.predict(theta)?;
        let factor: Vec<f64> = lp
            .iter()
            .zip(&self.eta_sq)
            .map(|(&l, e2)| 1.0 - exp_term_slope(l, *e2))
            .collect();
        Ok((0..self.p())
            .map(|j| self.d.col(j).iter().zip(&factor).map(|(x, f)| x * f).sum())
            .collect())
    }

    /// Smallest `lambda_T` at which the null model (zero, or intercept only)
    /// satisfies the inactive zero-subgradient bound in every penalized
    /// coordinate.
    pub fn lambda_max(d: &Dataset, eta_sq: &[f64]) -> Result<f64> {
        let null = null_theta(d, eta_sq);
        let prob = Stage2Problem::new(d, eta_sq.to_vec(), 1.0, Penalty::l1())?;
        let g = prob.grad_fit_theta(&null)?;
        let n = d.n() as f64;
        Ok(d.penalized()
            .map(|j| g[j].abs() / (4.0 * n * prob.loadings[j]))
            .fold(0.0, f64::max))
    }
}

/// Derivative factor of `eta^2 exp(-clamp(lp))` with respect to `-lp`.
#[inline]
fn exp_term_slope(lp: f64, e2: f64) -> f64 {
    if lp.abs() < LPMAX {
        e2 * (-lp).exp()
    } else {
        0.0
    }
}

/// Null model: zero, or the intercept-only maximizer `log(mean eta^2)`.
pub fn null_theta(d: &Dataset, eta_sq: &[f64]) -> Vec<f64> {
    let mut theta = vec![0.0; d.p()];
    if d.has_intercept() {
        let m = eta_sq.iter().sum::<f64>() / eta_sq.len() as f64;
        if m > 0.0 {
            theta[0] = clamp_lp(m.ln());
        }
    }
    theta
}

#[derive(Debug, Clone)]
pub struct Stage2Result {
    pub theta: Vec<f64>,
    pub objective: f64,
    pub support: Vec<usize>,
    pub outer_iters: usize,
    pub inner_iters_total: usize,
    /// Inner solves converged and the KKT certificate passed.
    pub converged: bool,
    /// The LLA iterates settled before the outer-iteration cap.
    pub lla_converged: bool,
    pub kkt: KktCertificate,
    /// Penalized objective at every LLA iterate, starting with the L1
    /// solution.
    pub objective_trace: Vec<f64>,
    /// The initial L1 solution.
    pub first_iterate: Vec<f64>,
}

/// Minimizes `sum x_i'theta + sum eta_i^2 exp(-x_i'theta) + 4n sum_j w_j |theta_j|`.
pub fn solve_weighted_l1(
    prob: &Stage2Problem<'_>,
    weights: &[f64],
    init: &[f64],
    cfg: &SolverConfig,
) -> Result<InnerSolve> {
    let d = prob.d;
    let (n, p) = (d.n(), d.p());
    check_len("weights length", p, weights.len())?;
    check_len("initial theta length", p, init.len())?;
    let n_f = n as f64;
    let pen: Vec<f64> = weights.iter().map(|w| 4.0 * n_f * w).collect();

    let mut theta = init.to_vec();
    let mut lp = d.predict(&theta)?;
    // current exp terms eta_i^2 exp(-clamp(lp_i))
    let mut ex: Vec<f64> = lp
        .iter()
        .zip(&prob.eta_sq)
        .map(|(&l, e2)| e2 * (-clamp_lp(l)).exp())
        .collect();
    let mut trial_lp = vec![0.0; n];
    let mut trial_ex = vec![0.0; n];

    let objective = |lp: &[f64], ex: &[f64], theta: &[f64]| -> f64 {
        lp.iter().sum::<f64>()
            + ex.iter().sum::<f64>()
            + theta.iter().zip(&pen).map(|(t, w)| w * t.abs()).sum::<f64>()
    };

    let mut trace = Vec::new();
    let mut sweeps = 0;
    let mut full = true;
    let mut converged = false;
    while sweeps < cfg.max_inner {
        sweeps += 1;
        let mut max_change = 0.0f64;
        let mut active_changed = false;
        for j in 0..p {
            let old = theta[j];
            if !full && old == 0.0 {
                continue;
            }
            let xj = d.col(j);
            let mut g = prob.col_sums[j];
            let mut h = 0.0;
            for ((&x, &l), &e) in xj.iter().zip(&lp).zip(&ex) {
                if l.abs() < LPMAX {
                    g -= e * x;
                    h += e * x * x;
                }
            }
            let h = h.max(1e-12 * n_f);
            let target = soft_threshold(old - g / h, pen[j] / h);
            let mut delta = target - old;
            if delta == 0.0 {
                continue;
            }
            // change in the coordinate objective, accumulated term by term so
            // that tiny steps are not lost to cancellation
            let mut accepted = false;
            for _ in 0..MAX_HALVINGS {
                let mut change = prob.col_sums[j] * delta + pen[j] * ((old + delta).abs() - old.abs());
                for i in 0..n {
                    let step = xj[i] * delta;
                    let l = lp[i] + step;
                    trial_lp[i] = l;
                    let e = if l.abs() < LPMAX && lp[i].abs() < LPMAX {
                        let de = ex[i] * (-step).exp_m1();
                        change += de;
                        ex[i] + de
                    } else {
                        let e = prob.eta_sq[i] * (-clamp_lp(l)).exp();
                        change += e - ex[i];
                        e
                    };
                    trial_ex[i] = e;
                }
                if change <= 0.0 {
                    accepted = true;
                    break;
                }
                delta *= 0.5;
            }
            if !accepted || !delta.is_finite() {
                continue;
            }
            if old == 0.0 {
                active_changed = true;
            }
            theta[j] = old + delta;
            std::mem::swap(&mut lp, &mut trial_lp);
            std::mem::swap(&mut ex, &mut trial_ex);
            max_change = max_change.max(delta.abs());
        }
        let obj = objective(&lp, &ex, &theta);
        if !obj.is_finite() {
            return Err(HippoError::Solver("stage-2 objective became non-finite".into()));
        }
        trace.push(obj);
        if max_change < cfg.inner_tol {
            if full && !active_changed {
                converged = true;
                break;
            }
            full = true;
        } else {
            full = false;
        }
    }
    Ok(InnerSolve {
        coeffs: theta,
        iters: sweeps,
        converged,
        objective_trace: trace,
    })
}

/// Fits stage 2 from the null model.
pub fn fit_stage2(prob: &Stage2Problem<'_>, cfg: &SolverConfig) -> Result<Stage2Result> {
    let init = null_theta(prob.d, &prob.eta_sq);
    fit_stage2_from(prob, cfg, &init)
}

/// Fits stage 2 starting the initial L1 solve at `init` (warm start).
pub fn fit_stage2_from(prob: &Stage2Problem<'_>, cfg: &SolverConfig, init: &[f64]) -> Result<Stage2Result> {
    let out = run_lla(
        &prob.penalty,
        &prob.loadings,
        init,
        cfg,
        |w, start| solve_weighted_l1(prob, w, start, cfg),
        |t| prob.objective_theta(t),
    )?;
    let theta = out.coeffs;
    let objective = prob.objective_theta(&theta)?;
    let kkt = kkt_check_theta(prob, &theta, 1e-4 * prob.n() as f64)?;
    Ok(Stage2Result {
        support: support_of(&theta),
        objective,
        outer_iters: out.outer_iters,
        inner_iters_total: out.inner_total,
        converged: out.inner_converged && kkt.passed,
        lla_converged: out.outer_converged,
        kkt,
        objective_trace: out.objective_trace,
        first_iterate: out.first,
        theta,
    })
}

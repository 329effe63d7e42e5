//! Local linear approximation driver shared by stages 2 and 3.
//!
//! Each outer step replaces `rho_{lambda_j}(|c_j|)` by its tangent
//! `rho'_{lambda_j}(|c_j^(k)|) |c_j|` and re-solves the resulting weighted-L1
//! problem from the previous iterate. The first solve uses the plain
//! loadings, i.e. the L1 solution.

use crate::config::SolverConfig;
use crate::error::Result;
use crate::penalty::Penalty;

/// Result of one convex weighted-L1 solve.
#[derive(Debug, Clone)]
pub struct InnerSolve {
    pub coeffs: Vec<f64>,
    pub iters: usize,
    pub converged: bool,
    /// Weighted-L1 objective after every pass of the inner solver.
    pub objective_trace: Vec<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct LlaOutcome {
    pub coeffs: Vec<f64>,
    pub first: Vec<f64>,
    pub outer_iters: usize,
    pub inner_total: usize,
    /// Every inner solve met its tolerance.
    pub inner_converged: bool,
    /// The sup-norm change fell below `tol` before `max_outer` steps.
    pub outer_converged: bool,
    pub objective_trace: Vec<f64>,
}

pub(crate) fn run_lla<I, O>(
    penalty: &Penalty,
    loadings: &[f64],
    init: &[f64],
    cfg: &SolverConfig,
    mut inner: I,
    objective: O,
) -> Result<LlaOutcome>
where
    I: FnMut(&[f64], &[f64]) -> Result<InnerSolve>,
    O: Fn(&[f64]) -> Result<f64>,
{
    cfg.validate()?;
    let first = inner(loadings, init)?;
    let mut inner_total = first.iters;
    let mut inner_ok = first.converged;
    let mut coeffs = first.coeffs;
    let first_coeffs = coeffs.clone();
    let mut trace = vec![objective(&coeffs)?];
    let mut outer = 0;
    let mut outer_ok = false;
    while outer < cfg.max_outer {
        outer += 1;
        let w = penalty.lla_weights(&coeffs, loadings)?;
        let step = inner(&w, &coeffs)?;
        inner_total += step.iters;
        inner_ok &= step.converged;
        let change = step
            .coeffs
            .iter()
            .zip(&coeffs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        coeffs = step.coeffs;
        trace.push(objective(&coeffs)?);
        if change < cfg.tol {
            outer_ok = true;
            break;
        }
    }
    Ok(LlaOutcome {
        coeffs,
        first: first_coeffs,
        outer_iters: outer,
        inner_total,
        inner_converged: inner_ok,
        outer_converged: outer_ok,
        objective_trace: trace,
    })
}

//! Small dense helpers shared by the solvers and oracles.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{HippoError, Result};

const CHOLESKY_JITTER: f64 = 1e-10;
/// Largest condition number accepted by the closed-form solvers.
pub const MAX_CONDITION: f64 = 1e12;

/// Standard normal quantile `Phi^{-1}(p)`.
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(HippoError::Domain(format!("quantile level must lie in (0,1), got {p}")));
    }
    Ok(Normal::standard().inverse_cdf(p))
}

/// Ratio of extreme eigenvalues of a symmetric matrix; infinite when the
/// smallest is not positive.
pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 1.0;
    }
    let eig = SymmetricEigen::new(a.clone()).eigenvalues;
    let max = eig.max();
    let min = eig.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Solves `A x = b` for symmetric positive definite `A` by Cholesky,
/// retrying once with a relative diagonal jitter.
pub fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>, context: &str) -> Result<DVector<f64>> {
    if let Some(ch) = a.clone().cholesky() {
        return Ok(ch.solve(b));
    }
    let scale = a.diagonal().amax().max(1.0);
    let mut jittered = a.clone();
    for i in 0..a.nrows() {
        jittered[(i, i)] += CHOLESKY_JITTER * scale;
    }
    match jittered.cholesky() {
        Some(ch) => Ok(ch.solve(b)),
        None => Err(HippoError::Singular {
            context: context.to_string(),
            condition: condition_number(a),
        }),
    }
}

/// Inverse of a symmetric positive definite matrix via Cholesky.
pub fn inverse_spd(a: &DMatrix<f64>, context: &str) -> Result<DMatrix<f64>> {
    let cond = condition_number(a);
    if !(cond < MAX_CONDITION) {
        return Err(HippoError::Singular {
            context: context.to_string(),
            condition: cond,
        });
    }
    let n = a.nrows();
    let id = DMatrix::identity(n, n);
    match a.clone().cholesky() {
        Some(ch) => Ok(ch.solve(&id)),
        None => Err(HippoError::Singular {
            context: context.to_string(),
            condition: cond,
        }),
    }
}

/// Estimates the largest eigenvalue of a symmetric positive semidefinite
/// operator by power iteration from a deterministic start.
pub fn power_iteration<F>(dim: usize, steps: usize, mut apply: F) -> f64
where
    F: FnMut(&[f64], &mut [f64]),
{
    if dim == 0 {
        return 0.0;
    }
    let mut v: Vec<f64> = (0..dim).map(|i| 1.0 + 0.01 * (i % 7) as f64).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    let mut w = vec![0.0; dim];
    let mut est = 0.0;
    for _ in 0..steps {
        apply(&v, &mut w);
        let nw = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if nw == 0.0 {
            return 0.0;
        }
        est = nw;
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / nw;
        }
    }
    est
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

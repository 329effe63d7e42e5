#![allow(dead_code)]

pub mod props;

use hippo::Dataset;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(r: &mut ChaCha8Rng) -> f64 {
    r.sample(StandardNormal)
}

/// Gaussian design with a sparse mean and log-variance signal.
pub fn hetero_data(seed: u64, n: usize, p: usize, intercept: bool) -> Dataset {
    let mut r = rng(seed);
    let z = DMatrix::from_fn(n, p, |_, _| normal(&mut r));
    let mut y = DVector::zeros(n);
    for i in 0..n {
        let mean = 1.5 * z[(i, 0)] - 1.0 * z[(i, 1)];
        let lp = 0.8 * z[(i, 0)] + 0.6 * z[(i, p - 1)];
        y[i] = 0.5 + mean + (lp / 2.0).exp() * normal(&mut r);
    }
    Dataset::from_covariates(z, y, intercept).unwrap()
}

pub fn random_vec(r: &mut ChaCha8Rng, len: usize, scale: f64) -> Vec<f64> {
    (0..len).map(|_| scale * normal(r)).collect()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

//! Property checks shared by the module tests and the acceptance suite.
//! Each returns a short summary on success and a diagnostic on failure.

use super::{hetero_data, normal, random_vec, rel_err, rng};
use hippo::data::{neg_loglik, sigma_from_theta, ModelParams};
use hippo::oracle::{kkt_check_beta, kkt_check_theta, oracle_mle_theta, oracle_wls};
use hippo::stage2::{fit_stage2, Stage2Problem};
use hippo::stage3::{fit_stage3, Stage3Problem};
use hippo::{Dataset, Penalty, PenaltyFamily, SolverConfig};
use nalgebra::DMatrix;
use rand::Rng;

pub type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

pub fn penalties() -> Vec<Penalty> {
    vec![
        Penalty::scad(3.7).unwrap(),
        Penalty::scad(2.5).unwrap(),
        Penalty::mcp(3.0).unwrap(),
        Penalty::mcp(1.5).unwrap(),
        Penalty::l1(),
    ]
}

/// Multiple of lambda covering the non-trivial range of the penalty.
pub fn span(p: &Penalty) -> f64 {
    match p.family() {
        PenaltyFamily::L1 => 1.0,
        _ => p.a().max(1.0),
    }
}

fn knot(p: &Penalty, lambda: f64) -> f64 {
    match p.family() {
        PenaltyFamily::L1 => f64::INFINITY,
        _ => p.a() * lambda,
    }
}

/// P1-P4 and value/derivative consistency.
pub fn penalty_properties() -> Check {
    let mut fd_checks = 0;
    for p in penalties() {
        for &lam in &[0.2, 0.7, 1.0, 3.0] {
            ensure(p.value(0.0, lam).unwrap() == 0.0, || format!("{p:?}: value(0) != 0"))?;
            let top = 2.0 * span(&p) * lam;
            let grid: Vec<f64> = (0..=60).map(|k| top * k as f64 / 60.0).collect();
            for &b0 in &grid {
                for &b1 in &grid {
                    let lhs = p.value(b0 + b1, lam).unwrap();
                    let rhs = p.value(b0, lam).unwrap() + p.value(b1, lam).unwrap();
                    ensure(lhs <= rhs + 1e-12, || format!("{p:?}: not subadditive at ({b0}, {b1})"))?;
                }
            }
            ensure((p.deriv(1e-12, lam).unwrap() - lam).abs() <= 1e-9, || format!("{p:?}: deriv(0+) != lambda"))?;
            let b_knot = knot(&p, lam);
            for k in 1..2000 {
                let b = 3.0 * span(&p) * lam * k as f64 / 2000.0;
                let d = p.deriv(b, lam).unwrap();
                let jump = (p.deriv(b + 1e-8, lam).unwrap() - d).abs();
                ensure(jump < 1e-6, || format!("{p:?}: derivative jumps by {jump} at {b}"))?;
                if b < b_knot {
                    ensure((0.0..=lam).contains(&d), || format!("{p:?}: deriv {d} outside [0, lambda] at {b}"))?;
                } else {
                    ensure(d == 0.0, || format!("{p:?}: deriv {d} != 0 beyond the knot at {b}"))?;
                }
                let near = [lam, p.a() * lam].iter().any(|&q| (b - q).abs() < 1e-3);
                if !near {
                    let h = 1e-5 * b.max(1.0);
                    let fd = (p.value(b + h, lam).unwrap() - p.value(b - h, lam).unwrap()) / (2.0 * h);
                    ensure((fd - d).abs() <= 1e-6 * d.abs().max(1.0), || format!("{p:?}: fd {fd} vs deriv {d} at {b}"))?;
                    fd_checks += 1;
                }
                if p.family() == PenaltyFamily::L1 {
                    ensure(p.value(b, lam).unwrap() == lam * b, || "L1 value is not linear".into())?;
                }
            }
        }
    }
    Ok(format!("{} families, {fd_checks} derivative checks", penalties().len()))
}

fn central_diff<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], j: usize) -> f64 {
    let h = 1e-6 * x[j].abs().max(1.0);
    let mut a = x.to_vec();
    let mut b = x.to_vec();
    a[j] += h;
    b[j] -= h;
    (f(&a) - f(&b)) / (2.0 * h)
}

/// Relative error with the gradient's scale as floor for tiny components.
fn grad_rel_err(fd: &[f64], g: &[f64]) -> f64 {
    let scale = g.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    fd.iter().zip(g).map(|(a, b)| (a - b).abs() / b.abs().max(1e-3 * scale)).fold(0.0, f64::max)
}

/// Mean residuals of the shared synthetic design.
pub fn eta_of(d: &Dataset) -> Vec<f64> {
    let mut beta = vec![0.0; d.p()];
    let off = usize::from(d.has_intercept());
    if d.has_intercept() {
        beta[0] = 0.5;
    }
    beta[off] = 1.5;
    beta[off + 1] = -1.0;
    d.residuals(&beta).unwrap()
}

/// Finite differences of the smooth parts at 20 random points per stage.
pub fn gradient_checks() -> Check {
    let d = hetero_data(11, 80, 6, true);
    let eta = eta_of(&d);
    let p2 = Stage2Problem::from_residuals(&d, &eta, 0.0, Penalty::default()).unwrap();
    let mut r = rng(12);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let theta = random_vec(&mut r, d.p(), 0.4);
        let g = p2.grad_fit_theta(&theta).unwrap();
        let fd: Vec<f64> = (0..d.p()).map(|j| central_diff(|t| p2.objective_theta(t).unwrap(), &theta, j)).collect();
        worst = worst.max(grad_rel_err(&fd, &g));
    }
    let d = hetero_data(13, 70, 8, true);
    let sigma: Vec<f64> = (0..d.n()).map(|_| (0.5 * normal(&mut r)).exp()).collect();
    let p3 = Stage3Problem::new(&d, sigma, 0.0, Penalty::default()).unwrap();
    for _ in 0..20 {
        let beta = random_vec(&mut r, d.p(), 1.0);
        let g = p3.grad_fit_beta(&beta).unwrap();
        let fd: Vec<f64> = (0..d.p()).map(|j| central_diff(|b| p3.objective_beta(b).unwrap(), &beta, j)).collect();
        worst = worst.max(grad_rel_err(&fd, &g));
    }
    ensure(worst < 1e-5, || format!("max relative error {worst:.2e}"))?;
    Ok(format!("max relative error {worst:.2e}"))
}

/// Independent first-order check: fit gradients plus penalty slopes from
/// `deriv`, tolerance `1e-4 n`.
fn first_order_holds(coef: &[f64], grad: &[f64], slope: impl Fn(usize, f64) -> f64, d: &Dataset) -> bool {
    let tol = 1e-4 * d.n() as f64;
    (0..coef.len()).all(|j| {
        if d.is_intercept(j) {
            grad[j].abs() <= tol
        } else if coef[j].abs() > 1e-8 {
            (grad[j] + coef[j].signum() * slope(j, coef[j].abs())).abs() <= tol
        } else {
            grad[j].abs() <= slope(j, 0.0) + tol
        }
    })
}

pub struct LlaSummary {
    pub fits: usize,
    pub converged: usize,
}

/// LLA descent on 50 random problems for both stages; every converged fit
/// must satisfy the first-order conditions.
pub fn lla_and_kkt() -> Result<LlaSummary, String> {
    let cfg = SolverConfig::default();
    let mut r = rng(3);
    let mut summary = LlaSummary { fits: 0, converged: 0 };
    for k in 0..50 {
        let n = r.random_range(40..120);
        let p = 4 + (k * 7) % 40;
        let d = hetero_data(3000 + k as u64, n, p, k % 3 != 0);
        let frac = 0.08 + 0.5 * normal(&mut r).abs().min(1.0);
        let pen = if k % 4 == 3 { Penalty::mcp(3.0).unwrap() } else { Penalty::default() };
        let eta = eta_of(&d);
        let eta_sq: Vec<f64> = eta.iter().map(|e| e * e).collect();
        let lt = frac * Stage2Problem::lambda_max(&d, &eta_sq).unwrap();
        let p2 = Stage2Problem::from_residuals(&d, &eta, lt, pen).unwrap();
        let s2 = fit_stage2(&p2, &cfg).map_err(|e| e.to_string())?;
        for w in s2.objective_trace.windows(2) {
            ensure(w[1] <= w[0] + 1e-8, || format!("problem {k}: stage-2 objective rose {} -> {}", w[0], w[1]))?;
        }
        let sigma = sigma_from_theta(&d, &s2.theta).unwrap();
        let ls = frac * Stage3Problem::lambda_max(&d, &sigma).unwrap();
        let p3 = Stage3Problem::from_theta(&d, &s2.theta, ls, pen).unwrap();
        let s3 = fit_stage3(&p3, &cfg).map_err(|e| e.to_string())?;
        for w in s3.objective_trace.windows(2) {
            ensure(w[1] <= w[0] + 1e-8, || format!("problem {k}: stage-3 objective rose {} -> {}", w[0], w[1]))?;
        }
        let (n4, n2, tol) = (4.0 * d.n() as f64, 2.0 * d.n() as f64, 1e-4 * d.n() as f64);
        let g2 = p2.grad_fit_theta(&s2.theta).unwrap();
        let g3 = p3.grad_fit_beta(&s3.beta).unwrap();
        let checks = [
            (
                s2.converged,
                first_order_holds(&s2.theta, &g2, |j, t| n4 * pen.deriv(t, p2.loadings[j]).unwrap(), &d)
                    && kkt_check_theta(&p2, &s2.theta, tol).unwrap().passed,
            ),
            (
                s3.converged,
                first_order_holds(&s3.beta, &g3, |j, t| n2 * pen.deriv(t, p3.loadings[j]).unwrap(), &d)
                    && kkt_check_beta(&p3, &s3.beta, tol).unwrap().passed,
            ),
        ];
        for (converged, certified) in checks {
            summary.fits += 1;
            if converged {
                summary.converged += 1;
                ensure(certified, || format!("problem {k}: converged output fails the first-order conditions"))?;
            }
        }
    }
    ensure(summary.converged * 10 >= summary.fits * 9, || {
        format!("only {}/{} fits converged", summary.converged, summary.fits)
    })?;
    Ok(summary)
}

pub fn tight() -> SolverConfig {
    SolverConfig {
        inner_tol: 1e-12,
        max_inner: 200_000,
        ..SolverConfig::default()
    }
}

fn restrict(d: &Dataset, cols: &[usize]) -> Dataset {
    let x = DMatrix::from_fn(d.n(), cols.len(), |i, k| d.x()[(i, cols[k])]);
    Dataset::new(x, d.y().clone(), d.has_intercept() && cols.first() == Some(&0)).unwrap()
}

/// Unpenalized stage 2 on a fixed support against Newton's method, and
/// unpenalized stage 3 against closed-form weighted least squares.
pub fn oracle_equivalences() -> Check {
    let mut worst2 = 0.0f64;
    for (seed, support) in [(1u64, vec![0usize, 1, 6]), (2, vec![0, 2, 3, 5]), (3, vec![1, 4])] {
        let d = hetero_data(seed, 300, 8, true);
        let eta_sq: Vec<f64> = eta_of(&d).iter().map(|e| e * e).collect();
        let mle = oracle_mle_theta(&d, &support, &eta_sq).map_err(|e| e.to_string())?;
        let dr = restrict(&d, &support);
        for pen in [Penalty::default(), Penalty::l1()] {
            let prob = Stage2Problem::new(&dr, eta_sq.clone(), 0.0, pen).unwrap();
            let fit = fit_stage2(&prob, &tight()).map_err(|e| e.to_string())?;
            ensure(fit.converged, || "unpenalized stage 2 did not converge".into())?;
            for (k, &j) in support.iter().enumerate() {
                worst2 = worst2.max((fit.theta[k] - mle[j]).abs());
            }
        }
    }
    let mut worst3 = 0.0f64;
    let mut r = rng(5);
    for seed in 0..5u64 {
        let d = hetero_data(10 + seed, 150, 12, seed % 2 == 0);
        let sigma: Vec<f64> = (0..d.n()).map(|_| (0.7 * normal(&mut r)).exp()).collect();
        let all: Vec<usize> = (0..d.p()).collect();
        let wls = oracle_wls(&d, &all, &sigma).map_err(|e| e.to_string())?;
        let prob = Stage3Problem::new(&d, sigma, 0.0, Penalty::default()).unwrap();
        let fit = fit_stage3(&prob, &tight()).map_err(|e| e.to_string())?;
        ensure(fit.converged, || "unpenalized stage 3 did not converge".into())?;
        for j in 0..d.p() {
            worst3 = worst3.max((fit.beta[j] - wls[j]).abs());
        }
    }
    ensure(worst2 < 1e-6 && worst3 < 1e-6, || format!("max deviation: stage 2 {worst2:.2e}, stage 3 {worst3:.2e}"))?;
    Ok(format!("max deviation: stage 2 {worst2:.2e}, stage 3 {worst3:.2e}"))
}

fn rescale_column(d: &Dataset, j: usize, c: f64) -> Dataset {
    let mut x: DMatrix<f64> = d.x().clone();
    x.column_mut(j).iter_mut().for_each(|v| *v *= c);
    Dataset::new(x, d.y().clone(), d.has_intercept()).unwrap()
}

/// Rescaling a column rescales its first-iterate coefficient inversely and
/// leaves fitted values and the L1 objective unchanged.
pub fn rescaling_equivariance() -> Check {
    let cfg = tight();
    let mut worst = 0.0f64;
    for (seed, j, c) in [(31u64, 1usize, 3.0), (32, 4, 0.25), (33, 2, 10.0)] {
        let d = hetero_data(seed, 120, 6, true);
        let ds = rescale_column(&d, j, c);
        let eta = eta_of(&d);
        let eta_sq: Vec<f64> = eta.iter().map(|e| e * e).collect();
        let lt = 0.2 * Stage2Problem::lambda_max(&d, &eta_sq).unwrap();
        let a = Stage2Problem::from_residuals(&d, &eta, lt, Penalty::default()).unwrap();
        let b = Stage2Problem::from_residuals(&ds, &eta, lt, Penalty::default()).unwrap();
        let fa = fit_stage2(&a, &cfg).map_err(|e| e.to_string())?.first_iterate;
        let fb = fit_stage2(&b, &cfg).map_err(|e| e.to_string())?.first_iterate;
        worst = worst.max((fb[j] * c - fa[j]).abs());
        let (pa, pb) = (d.predict(&fa).unwrap(), ds.predict(&fb).unwrap());
        worst = pa.iter().zip(&pb).fold(worst, |m, (u, v)| m.max((u - v).abs()));
        let l1 = |p: &Stage2Problem, t: &[f64]| {
            p.fit_value(t).unwrap() + 4.0 * p.n() as f64 * t.iter().zip(&p.loadings).map(|(v, l)| l * v.abs()).sum::<f64>()
        };
        worst = worst.max(rel_err(l1(&a, &fa), l1(&b, &fb)));

        let sigma: Vec<f64> = eta.iter().map(|e| 0.5 + e.abs().min(3.0)).collect();
        let ls = 0.2 * Stage3Problem::lambda_max(&d, &sigma).unwrap();
        let a = Stage3Problem::new(&d, sigma.clone(), ls, Penalty::default()).unwrap();
        let b = Stage3Problem::new(&ds, sigma, ls, Penalty::default()).unwrap();
        let fa = fit_stage3(&a, &cfg).map_err(|e| e.to_string())?.first_iterate;
        let fb = fit_stage3(&b, &cfg).map_err(|e| e.to_string())?.first_iterate;
        worst = worst.max((fb[j] * c - fa[j]).abs());
        let (pa, pb) = (d.predict(&fa).unwrap(), ds.predict(&fb).unwrap());
        worst = pa.iter().zip(&pb).fold(worst, |m, (u, v)| m.max((u - v).abs()));
    }
    ensure(worst < 1e-8, || format!("max deviation {worst:.2e}"))?;
    Ok(format!("max deviation {worst:.2e}"))
}

/// Midpoint convexity of the likelihood in theta at 100 random pairs.
pub fn convexity_probes() -> Check {
    let d = hetero_data(41, 60, 5, true);
    let mut r = rng(42);
    let beta = random_vec(&mut r, d.p(), 1.0);
    let f = |t: &[f64]| neg_loglik(&ModelParams::new(beta.clone(), t.to_vec()).unwrap(), &d).unwrap();
    let mut slack = f64::INFINITY;
    for _ in 0..100 {
        let t0 = random_vec(&mut r, d.p(), 1.0);
        let t1 = random_vec(&mut r, d.p(), 1.0);
        let mid: Vec<f64> = t0.iter().zip(&t1).map(|(a, b)| 0.5 * (a + b)).collect();
        let gap = 0.5 * (f(&t0) + f(&t1)) - f(&mid);
        ensure(gap >= -1e-9, || format!("midpoint above chord by {}", -gap))?;
        slack = slack.min(gap);
    }
    Ok(format!("smallest chord gap {slack:.3e}"))
}

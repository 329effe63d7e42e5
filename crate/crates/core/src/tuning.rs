//! Grid search over `(lambda_S, lambda_T)` with AIC/BIC selection.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{HippoError, Result};
use crate::pipeline::{penalized_support, HippoConfig, HippoFit};
use crate::stage1::fit_stage1;
use crate::stage2::{fit_stage2_from, null_theta, Stage2Problem, Stage2Result};
use crate::stage3::{fit_stage3_from, null_beta, Stage3Problem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Aic,
    Bic,
}

impl Criterion {
    pub fn value(&self, fit: &HippoFit) -> f64 {
        match self {
            Criterion::Aic => fit.aic,
            Criterion::Bic => fit.bic,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Criterion::Aic => "aic",
            Criterion::Bic => "bic",
        }
    }
}

impl std::str::FromStr for Criterion {
    type Err = HippoError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "aic" => Ok(Criterion::Aic),
            "bic" => Ok(Criterion::Bic),
            other => Err(HippoError::Config(format!("unknown criterion {other:?}"))),
        }
    }
}

/// Candidate values along one tuning axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaAxis {
    /// Strictly positive values in strictly descending order.
    Explicit(Vec<f64>),
    /// `len` log-spaced values from the data-driven `lambda_max` down to
    /// `min_ratio * lambda_max`.
    Auto { len: usize, min_ratio: f64 },
}

impl LambdaAxis {
    pub fn auto(len: usize) -> Self {
        LambdaAxis::Auto { len, min_ratio: 0.01 }
    }

    /// Auto axis for `lambda_S`. Its upper end is set by the heaviest
    /// weighted score and sits far above the useful range when the
    /// variance is strongly heteroscedastic, so the path spans three
    /// decades instead of two.
    pub fn auto_mean(len: usize) -> Self {
        LambdaAxis::Auto { len, min_ratio: 1e-3 }
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        match self {
            LambdaAxis::Explicit(v) => {
                if v.is_empty() {
                    return Err(HippoError::Config(format!("{name} grid is empty")));
                }
                if v.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                    return Err(HippoError::Config(format!("{name} grid must be strictly positive")));
                }
                if v.windows(2).any(|w| w[1] >= w[0]) {
                    return Err(HippoError::Config(format!("{name} grid must be sorted descending")));
                }
                Ok(())
            }
            LambdaAxis::Auto { len, min_ratio } => {
                if *len == 0 || !(*min_ratio > 0.0 && *min_ratio < 1.0) {
                    return Err(HippoError::Config(format!(
                        "{name} auto grid needs len >= 1 and min_ratio in (0,1)"
                    )));
                }
                Ok(())
            }
        }
    }

    /// Resolves the axis given the data-driven upper end.
    pub fn resolve(&self, lambda_max: f64) -> Vec<f64> {
        match self {
            LambdaAxis::Explicit(v) => v.clone(),
            LambdaAxis::Auto { len, min_ratio } => log_grid(lambda_max.max(1e-12), *min_ratio, *len),
        }
    }
}

/// `len` values from `top` down to `ratio * top`, evenly spaced in log scale.
pub fn log_grid(top: f64, ratio: f64, len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![top];
    }
    (0..len)
        .map(|k| top * ratio.powf(k as f64 / (len - 1) as f64))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningGrid {
    pub lambda_s: LambdaAxis,
    pub lambda_t: LambdaAxis,
    pub criterion: Criterion,
}

impl TuningGrid {
    /// 30 x 30 data-driven grid.
    pub fn standard(criterion: Criterion) -> Self {
        TuningGrid {
            lambda_s: LambdaAxis::auto_mean(30),
            lambda_t: LambdaAxis::auto(30),
            criterion,
        }
    }

    /// 15 x 15 data-driven grid.
    pub fn fast(criterion: Criterion) -> Self {
        TuningGrid {
            lambda_s: LambdaAxis::auto_mean(15),
            lambda_t: LambdaAxis::auto(15),
            criterion,
        }
    }

    pub fn single(lambda_s: f64, lambda_t: f64, criterion: Criterion) -> Self {
        TuningGrid {
            lambda_s: LambdaAxis::Explicit(vec![lambda_s]),
            lambda_t: LambdaAxis::Explicit(vec![lambda_t]),
            criterion,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.lambda_s.validate("lambda_S")?;
        self.lambda_t.validate("lambda_T")
    }
}

/// One grid cell.
#[derive(Debug, Clone)]
pub struct CriterionRow {
    pub lambda_s: f64,
    pub lambda_t: f64,
    pub df: usize,
    pub neg_loglik: f64,
    pub aic: f64,
    pub bic: f64,
    pub converged: bool,
    pub fit: HippoFit,
}

#[derive(Debug, Clone, Default)]
pub struct CriterionTable {
    pub rows: Vec<CriterionRow>,
    /// Cells whose fit raised an error: `(lambda_S, lambda_T, message)`.
    pub failures: Vec<(f64, f64, String)>,
    /// Cells not fitted because their path had saturated (see
    /// `HippoConfig::max_support_frac`); `lambda_S` is NaN when the whole
    /// `lambda_T` chain was skipped.
    pub skipped: Vec<(f64, f64)>,
}

impl CriterionTable {
    /// Index of the criterion minimizer among converged rows; exact ties go
    /// to the larger `lambda_S`, then the larger `lambda_T`.
    pub fn best_index(&self, criterion: Criterion) -> Result<usize> {
        let mut best: Option<usize> = None;
        for (i, r) in self.rows.iter().enumerate() {
            if !r.converged {
                continue;
            }
            let v = criterion.value(&r.fit);
            if !v.is_finite() {
                continue;
            }
            best = match best {
                None => Some(i),
                Some(b) => {
                    let rb = &self.rows[b];
                    let vb = criterion.value(&rb.fit);
                    let better = v < vb
                        || (v == vb
                            && (r.lambda_s > rb.lambda_s || (r.lambda_s == rb.lambda_s && r.lambda_t > rb.lambda_t)));
                    Some(if better { i } else { b })
                }
            };
        }
        best.ok_or_else(|| {
            HippoError::Solver(format!(
                "no converged fit on the grid ({} rows, {} failures)",
                self.rows.len(),
                self.failures.len()
            ))
        })
    }

    pub fn best(&self, criterion: Criterion) -> Result<&HippoFit> {
        Ok(&self.rows[self.best_index(criterion)?].fit)
    }
}

/// Where stages 2 and 3 get their fixed inputs from.
#[derive(Debug, Clone)]
pub struct SelectInputs {
    /// Mean residuals fed to stage 2.
    pub residuals: Vec<f64>,
    /// Use this log-variance instead of running stage 2.
    pub fixed_theta: Option<Vec<f64>>,
    /// Use this mean instead of running stage 3.
    pub fixed_beta: Option<Vec<f64>>,
}

impl SelectInputs {
    pub fn from_residuals(residuals: Vec<f64>) -> Self {
        SelectInputs {
            residuals,
            fixed_theta: None,
            fixed_beta: None,
        }
    }
}

/// Runs stage 1 and then the grid search.
pub fn select(d: &Dataset, grid: &TuningGrid, cfg: &HippoConfig) -> Result<(HippoFit, CriterionTable)> {
    cfg.validate()?;
    let s1 = fit_stage1(d, &cfg.solvers.stage1)?;
    let table = build_table(d, &SelectInputs::from_residuals(s1.residuals), grid, cfg)?;
    let best = table.best(grid.criterion)?.clone();
    Ok((best, table))
}

/// Re-runs stages 2 and 3 from the mean of a previous fit.
pub fn refit(d: &Dataset, previous: &HippoFit, grid: &TuningGrid, cfg: &HippoConfig) -> Result<(HippoFit, CriterionTable)> {
    let residuals = d.residuals(&previous.beta)?;
    let table = build_table(d, &SelectInputs::from_residuals(residuals), grid, cfg)?;
    let best = table.best(grid.criterion)?.clone();
    Ok((best, table))
}

/// Resolved `lambda_T` values and their stage-2 fits, warm-started along
/// the descending path. Values after the first fit whose penalized support
/// exceeds the configured cap are returned as `None`.
pub fn stage2_path(d: &Dataset, eta_sq: &[f64], axis: &LambdaAxis, cfg: &HippoConfig) -> Result<Vec<(f64, Option<Result<Stage2Result>>)>> {
    let lmax = Stage2Problem::lambda_max(d, eta_sq)?;
    let values = axis.resolve(lmax);
    let cap = cfg.support_cap(d.n());
    let mut start = null_theta(d, eta_sq);
    let mut saturated = false;
    let mut out = Vec::with_capacity(values.len());
    for lt in values {
        if saturated {
            out.push((lt, None));
            continue;
        }
        let res = Stage2Problem::new(d, eta_sq.to_vec(), lt, cfg.penalty)
            .and_then(|prob| fit_stage2_from(&prob, &cfg.solvers.stage2, &start));
        if let Ok(r) = &res {
            start = r.first_iterate.clone();
            saturated = penalized_support(&r.theta, d.has_intercept()).len() > cap;
        }
        out.push((lt, Some(res)));
    }
    Ok(out)
}

/// Fits every grid cell and tabulates the criteria.
pub fn build_table(d: &Dataset, inputs: &SelectInputs, grid: &TuningGrid, cfg: &HippoConfig) -> Result<CriterionTable> {
    grid.validate()?;
    cfg.validate()?;
    if inputs.fixed_theta.is_some() && inputs.fixed_beta.is_some() {
        return Err(HippoError::Config("cannot fix both the mean and the variance".into()));
    }
    let eta_sq: Vec<f64> = inputs.residuals.iter().map(|e| e * e).collect();

    // stage-2 results per lambda_T (or the supplied variance)
    let variance_path: Vec<(f64, Option<Result<Option<Stage2Result>>>)> = match &inputs.fixed_theta {
        Some(_) => vec![(0.0, Some(Ok(None)))],
        None => stage2_path(d, &eta_sq, &grid.lambda_t, cfg)?
            .into_iter()
            .map(|(lt, r)| (lt, r.map(|r| r.map(Some))))
            .collect(),
    };

    let chains: Vec<Chain> = variance_path
        .into_par_iter()
        .map(|(lt, s2)| match s2 {
            Some(s2) => stage3_chain(d, inputs, grid, cfg, lt, s2),
            None => Chain {
                skipped: vec![(f64::NAN, lt)],
                ..Chain::default()
            },
        })
        .collect();

    let mut table = CriterionTable::default();
    for chain in chains {
        table.rows.extend(chain.rows);
        table.failures.extend(chain.failures);
        table.skipped.extend(chain.skipped);
    }
    Ok(table)
}

#[derive(Default)]
struct Chain {
    rows: Vec<CriterionRow>,
    failures: Vec<(f64, f64, String)>,
    skipped: Vec<(f64, f64)>,
}

fn stage3_chain(
    d: &Dataset,
    inputs: &SelectInputs,
    grid: &TuningGrid,
    cfg: &HippoConfig,
    lambda_t: f64,
    s2: Result<Option<Stage2Result>>,
) -> Chain {
    let mut chain = Chain::default();
    let s2 = match s2 {
        Ok(s) => s,
        Err(e) => {
            chain.failures.push((f64::NAN, lambda_t, e.to_string()));
            return chain;
        }
    };
    let theta = match (&s2, &inputs.fixed_theta) {
        (Some(r), _) => r.theta.clone(),
        (None, Some(t)) => t.clone(),
        (None, None) => unreachable!("stage 2 result or fixed variance is always present"),
    };

    let push = |chain: &mut Chain, fit: Result<HippoFit>, ls: f64| match fit {
        Ok(fit) => chain.rows.push(CriterionRow {
            lambda_s: ls,
            lambda_t,
            df: fit.df,
            neg_loglik: fit.neg_loglik,
            aic: fit.aic,
            bic: fit.bic,
            converged: fit.converged,
            fit,
        }),
        Err(e) => chain.failures.push((ls, lambda_t, e.to_string())),
    };

    if let Some(beta) = &inputs.fixed_beta {
        let fit = HippoFit::assemble(d, beta.clone(), theta, 0.0, lambda_t, s2, None);
        push(&mut chain, fit, 0.0);
        return chain;
    }

    let sigma = match crate::data::sigma_from_theta(d, &theta) {
        Ok(s) => s,
        Err(e) => {
            chain.failures.push((f64::NAN, lambda_t, e.to_string()));
            return chain;
        }
    };
    let values = match Stage3Problem::lambda_max(d, &sigma) {
        Ok(lmax) => grid.lambda_s.resolve(lmax),
        Err(e) => {
            chain.failures.push((f64::NAN, lambda_t, e.to_string()));
            return chain;
        }
    };
    let cap = cfg.support_cap(d.n());
    let weights: Vec<f64> = sigma.iter().map(|s| 1.0 / (s * s)).collect();
    let mut start = null_beta(d, &weights);
    let mut saturated = false;
    for ls in values {
        if saturated {
            chain.skipped.push((ls, lambda_t));
            continue;
        }
        let fit = Stage3Problem::new(d, sigma.clone(), ls, cfg.penalty)
            .and_then(|prob| fit_stage3_from(&prob, &cfg.solvers.stage3, &start))
            .and_then(|s3| {
                start = s3.first_iterate.clone();
                HippoFit::assemble(d, s3.beta.clone(), theta.clone(), ls, lambda_t, s2.clone(), Some(s3))
            });
        if let Ok(f) = &fit {
            saturated = penalized_support(&f.beta, d.has_intercept()).len() > cap;
        }
        push(&mut chain, fit, ls);
    }
    chain
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_grid_endpoints() {
        let g = log_grid(10.0, 0.01, 5);
        assert_eq!(g.len(), 5);
        assert!((g[0] - 10.0).abs() < 1e-12);
        assert!((g[4] - 0.1).abs() < 1e-12);
        assert!(g.windows(2).all(|w| w[1] < w[0]));
        assert_eq!(log_grid(3.0, 0.5, 1), vec![3.0]);
    }

    #[test]
    fn grid_validation() {
        assert!(LambdaAxis::Explicit(vec![]).validate("x").is_err());
        assert!(LambdaAxis::Explicit(vec![1.0, 2.0]).validate("x").is_err());
        assert!(LambdaAxis::Explicit(vec![2.0, 0.0]).validate("x").is_err());
        assert!(LambdaAxis::Explicit(vec![2.0, 1.0]).validate("x").is_ok());
        assert!(LambdaAxis::Auto { len: 0, min_ratio: 0.1 }.validate("x").is_err());
    }

    #[test]
    fn criterion_parse() {
        assert_eq!("BIC".parse::<Criterion>().unwrap(), Criterion::Bic);
        assert!("cv".parse::<Criterion>().is_err());
    }
}

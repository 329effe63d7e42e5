//! Monte Carlo replication of a simulation design.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::generate::{generate, SimulationSpec};
use super::metrics::{precision_recall, score, RunMetrics};
use crate::data::Dataset;
use crate::error::{HippoError, Result};
use crate::oracle::confidence_interval;
use crate::pipeline::{penalized_support, HippoConfig, HippoFit};
use crate::penalty::Penalty;
use crate::stage1::fit_stage1;
use crate::tuning::{build_table, Criterion, CriterionTable, LambdaAxis, SelectInputs, TuningGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Folded-concave penalty from the base configuration.
    Hippo,
    /// Same pipeline with the L1 penalty.
    Hhr,
    /// Stage 2 sees the true mean.
    OracleMean,
    /// Stage 3 sees the true variance.
    OracleVariance,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Hippo => "hippo",
            Method::Hhr => "hhr",
            Method::OracleMean => "oracle_mean",
            Method::OracleVariance => "oracle_variance",
        }
    }

    /// Effective configuration: HHR swaps in the L1 penalty, nothing else.
    pub fn config(&self, base: &HippoConfig) -> HippoConfig {
        match self {
            Method::Hhr => base.with_penalty(Penalty::l1()),
            _ => *base,
        }
    }
}

impl std::str::FromStr for Method {
    type Err = HippoError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "hippo" => Ok(Method::Hippo),
            "hhr" => Ok(Method::Hhr),
            "oracle_mean" | "oraclemean" => Ok(Method::OracleMean),
            "oracle_variance" | "oraclevariance" => Ok(Method::OracleVariance),
            other => Err(HippoError::Config(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub method: Method,
    pub lambda_s: LambdaAxis,
    pub lambda_t: LambdaAxis,
    /// 1: the three stages; 2: stages 2-3 re-run once from the selected mean.
    pub iterations: usize,
    /// Skip stages 1 and 3 and fit the variance with the true mean.
    pub known_mean: bool,
    /// Coordinate and level of a Wald interval computed on every final fit.
    pub ci: Option<(usize, f64)>,
    pub hippo: HippoConfig,
}

impl StudyConfig {
    pub fn new(method: Method, grid: &TuningGrid, iterations: usize) -> Self {
        StudyConfig {
            method,
            lambda_s: grid.lambda_s.clone(),
            lambda_t: grid.lambda_t.clone(),
            iterations,
            known_mean: false,
            ci: None,
            hippo: HippoConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.iterations) {
            return Err(HippoError::Config(format!("iterations must be 1 or 2, got {}", self.iterations)));
        }
        if let Some((_, level)) = self.ci {
            if !(level > 0.0 && level < 1.0) {
                return Err(HippoError::Config(format!("ci level must lie in (0,1), got {level}")));
            }
        }
        self.hippo.validate()
    }

    pub fn grid(&self, criterion: Criterion) -> TuningGrid {
        TuningGrid {
            lambda_s: self.lambda_s.clone(),
            lambda_t: self.lambda_t.clone(),
            criterion,
        }
    }

    fn effective_iterations(&self) -> usize {
        match self.method {
            Method::OracleMean | Method::OracleVariance => 1,
            _ if self.known_mean => 1,
            _ => self.iterations,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CiOutcome {
    pub lo: f64,
    pub hi: f64,
    pub covered: bool,
    /// False when the coordinate was not selected (counted as a miss).
    pub selected: bool,
}

/// The model chosen by one criterion after one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub criterion: Criterion,
    pub iteration: usize,
    pub metrics: RunMetrics,
    pub lambda_s: f64,
    pub lambda_t: f64,
    pub df: usize,
    pub ci: Option<CiOutcome>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// Position on the descending grid.
    pub index: usize,
    pub lambda: f64,
    pub precision: f64,
    pub recall: f64,
    pub l2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateResult {
    pub replicate: usize,
    pub selections: Vec<Selection>,
    /// Variance-support recovery along the `lambda_T` path (first iteration).
    pub theta_curve: Vec<CurvePoint>,
    /// Mean-support recovery along the `lambda_S` path at the BIC-selected
    /// `lambda_T` (first iteration).
    pub beta_curve: Vec<CurvePoint>,
}

impl ReplicateResult {
    pub fn selection(&self, criterion: Criterion, iteration: usize) -> Option<&Selection> {
        self.selections
            .iter()
            .find(|s| s.criterion == criterion && s.iteration == iteration)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

impl MeanSd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return MeanSd { mean: f64::NAN, sd: f64::NAN };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        MeanSd { mean, sd }
    }
}

/// Mean (sd) of every metric over successful replicates.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Aggregate {
    pub count: usize,
    pub l2_beta: MeanSd,
    pub pre_beta: MeanSd,
    pub rec_beta: MeanSd,
    pub l2_theta: MeanSd,
    pub pre_theta: MeanSd,
    pub rec_theta: MeanSd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub spec: SimulationSpec,
    pub config: StudyConfig,
    pub replicates: Vec<ReplicateResult>,
    pub failures: Vec<(usize, String)>,
}

impl StudyReport {
    pub fn selections(&self, criterion: Criterion, iteration: usize) -> Vec<&Selection> {
        self.replicates
            .iter()
            .filter_map(|r| r.selection(criterion, iteration))
            .collect()
    }

    pub fn aggregate(&self, criterion: Criterion, iteration: usize) -> Aggregate {
        let sel = self.selections(criterion, iteration);
        let col = |f: fn(&RunMetrics) -> f64| MeanSd::of(&sel.iter().map(|s| f(&s.metrics)).collect::<Vec<_>>());
        Aggregate {
            count: sel.len(),
            l2_beta: col(|m| m.l2_beta),
            pre_beta: col(|m| m.pre_beta),
            rec_beta: col(|m| m.rec_beta),
            l2_theta: col(|m| m.l2_theta),
            pre_theta: col(|m| m.pre_theta),
            rec_theta: col(|m| m.rec_theta),
        }
    }

    /// `(covered, total)` for the configured interval.
    pub fn coverage(&self, criterion: Criterion, iteration: usize) -> (usize, usize) {
        let cis: Vec<CiOutcome> = self
            .selections(criterion, iteration)
            .iter()
            .filter_map(|s| s.ci)
            .collect();
        (cis.iter().filter(|c| c.covered).count(), cis.len())
    }

    pub fn mean_theta_curve(&self) -> Vec<MeanCurvePoint> {
        average_curves(self.replicates.iter().map(|r| r.theta_curve.as_slice()))
    }

    pub fn mean_beta_curve(&self) -> Vec<MeanCurvePoint> {
        average_curves(self.replicates.iter().map(|r| r.beta_curve.as_slice()))
    }

    pub fn final_iteration(&self) -> usize {
        self.config.effective_iterations()
    }

    /// The report restricted to replicates `0..count`.
    pub fn first(&self, count: usize) -> StudyReport {
        StudyReport {
            spec: SimulationSpec {
                n_replicates: self.spec.n_replicates.min(count),
                ..self.spec.clone()
            },
            config: self.config.clone(),
            replicates: self.replicates.iter().filter(|r| r.replicate < count).cloned().collect(),
            failures: self.failures.iter().filter(|f| f.0 < count).cloned().collect(),
        }
    }
}

/// Precision where an averaged path (ordered by decreasing lambda) first
/// reaches `recall`, interpolated linearly between the bracketing points.
/// `None` if the path never gets there.
pub fn precision_at_recall(curve: &[MeanCurvePoint], recall: f64) -> Option<f64> {
    let k = curve.iter().position(|c| c.recall >= recall)?;
    if k == 0 || curve[k].recall == recall {
        return Some(curve[k].precision);
    }
    let (a, b) = (&curve[k - 1], &curve[k]);
    let t = (recall - a.recall) / (b.recall - a.recall);
    Some(a.precision + t * (b.precision - a.precision))
}

/// A curve averaged over replicates at one grid position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanCurvePoint {
    pub index: usize,
    /// Replicates contributing (paths may stop early once saturated).
    pub count: usize,
    pub lambda: f64,
    pub precision: f64,
    pub recall: f64,
    pub l2: f64,
}

/// Pointwise average by grid position over the replicates that reached it.
pub fn average_curves<'a>(curves: impl Iterator<Item = &'a [CurvePoint]>) -> Vec<MeanCurvePoint> {
    let mut acc: Vec<MeanCurvePoint> = Vec::new();
    for curve in curves {
        for pt in curve {
            if acc.len() <= pt.index {
                acc.resize_with(pt.index + 1, || MeanCurvePoint {
                    index: 0,
                    count: 0,
                    lambda: 0.0,
                    precision: 0.0,
                    recall: 0.0,
                    l2: 0.0,
                });
            }
            let a = &mut acc[pt.index];
            a.count += 1;
            a.lambda += pt.lambda;
            a.precision += pt.precision;
            a.recall += pt.recall;
            a.l2 += pt.l2;
        }
    }
    acc.into_iter()
        .enumerate()
        .filter(|(_, a)| a.count > 0)
        .map(|(k, a)| {
            let m = a.count as f64;
            MeanCurvePoint {
                index: k,
                count: a.count,
                lambda: a.lambda / m,
                precision: a.precision / m,
                recall: a.recall / m,
                l2: a.l2 / m,
            }
        })
        .collect()
}

/// Runs every replicate (in parallel on the current rayon pool) and
/// collects results in replicate order.
pub fn run_study(spec: &SimulationSpec, cfg: &StudyConfig) -> Result<StudyReport> {
    spec.validate()?;
    cfg.validate()?;
    let outcomes: Vec<(usize, Result<ReplicateResult>)> = (0..spec.n_replicates)
        .into_par_iter()
        .map(|r| (r, run_replicate(spec, cfg, r)))
        .collect();
    let mut replicates = Vec::new();
    let mut failures = Vec::new();
    for (r, out) in outcomes {
        match out {
            Ok(res) => replicates.push(res),
            Err(e) => failures.push((r, e.to_string())),
        }
    }
    Ok(StudyReport {
        spec: spec.clone(),
        config: cfg.clone(),
        replicates,
        failures,
    })
}

pub fn run_replicate(spec: &SimulationSpec, cfg: &StudyConfig, replicate: usize) -> Result<ReplicateResult> {
    let (d, truth) = generate(spec, replicate)?;
    let hippo = cfg.method.config(&cfg.hippo);
    let intercept = d.has_intercept();

    let inputs = if cfg.known_mean {
        SelectInputs {
            residuals: d.residuals(&truth.beta)?,
            fixed_theta: None,
            fixed_beta: Some(truth.beta.clone()),
        }
    } else {
        match cfg.method {
            Method::OracleMean => SelectInputs::from_residuals(d.residuals(&truth.beta)?),
            Method::OracleVariance => {
                let s1 = fit_stage1(&d, &hippo.solvers.stage1)?;
                SelectInputs {
                    residuals: s1.residuals,
                    fixed_theta: Some(truth.theta.clone()),
                    fixed_beta: None,
                }
            }
            Method::Hippo | Method::Hhr => {
                SelectInputs::from_residuals(fit_stage1(&d, &hippo.solvers.stage1)?.residuals)
            }
        }
    };

    let primary = cfg.grid(Criterion::Bic);
    let table = build_table(&d, &inputs, &primary, &hippo)?;
    let theta_curve = if inputs.fixed_theta.is_some() {
        Vec::new()
    } else {
        theta_curve(&table, &truth.theta, intercept)
    };
    let beta_curve = if inputs.fixed_beta.is_some() {
        Vec::new()
    } else {
        beta_curve(&table, &truth.beta, intercept)?
    };

    let mut selections = Vec::new();
    for criterion in [Criterion::Aic, Criterion::Bic] {
        let mut fit = table.best(criterion)?.clone();
        selections.push(make_selection(&d, &truth, &fit, criterion, 1, cfg)?);
        if cfg.effective_iterations() == 2 {
            let again = SelectInputs::from_residuals(d.residuals(&fit.beta)?);
            let t2 = build_table(&d, &again, &cfg.grid(criterion), &hippo)?;
            fit = t2.best(criterion)?.clone();
            selections.push(make_selection(&d, &truth, &fit, criterion, 2, cfg)?);
        }
    }
    Ok(ReplicateResult {
        replicate,
        selections,
        theta_curve,
        beta_curve,
    })
}

fn make_selection(
    d: &Dataset,
    truth: &crate::data::ModelParams,
    fit: &HippoFit,
    criterion: Criterion,
    iteration: usize,
    cfg: &StudyConfig,
) -> Result<Selection> {
    let metrics = score(truth, &fit.beta, &fit.theta, d.has_intercept())?;
    let ci = match cfg.ci {
        None => None,
        Some((j, level)) => Some(match confidence_interval(d, fit, j, level) {
            Ok(ci) => CiOutcome {
                lo: ci.lo,
                hi: ci.hi,
                covered: ci.lo <= truth.beta[j] && truth.beta[j] <= ci.hi,
                selected: true,
            },
            Err(HippoError::NotInSupport { .. }) => CiOutcome {
                lo: f64::NAN,
                hi: f64::NAN,
                covered: false,
                selected: false,
            },
            Err(e) => return Err(e),
        }),
    };
    Ok(Selection {
        criterion,
        iteration,
        metrics,
        lambda_s: fit.lambda_s,
        lambda_t: fit.lambda_t,
        df: fit.df,
        ci,
    })
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Distinct values in descending order.
fn descending(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.filter(|x| x.is_finite()).collect();
    v.sort_by(|a, b| b.total_cmp(a));
    v.dedup();
    v
}

fn theta_curve(table: &CriterionTable, truth: &[f64], intercept: bool) -> Vec<CurvePoint> {
    let grid = descending(
        table
            .rows
            .iter()
            .map(|r| r.lambda_t)
            .chain(table.failures.iter().map(|f| f.1))
            .chain(table.skipped.iter().map(|s| s.1)),
    );
    let true_supp = penalized_support(truth, intercept);
    grid.iter()
        .enumerate()
        .filter_map(|(index, &lt)| {
            let row = table.rows.iter().find(|r| r.lambda_t == lt)?;
            let (precision, recall) = precision_recall(&penalized_support(&row.fit.theta, intercept), &true_supp);
            Some(CurvePoint {
                index,
                lambda: lt,
                precision,
                recall,
                l2: l2(&row.fit.theta, truth),
            })
        })
        .collect()
}

fn beta_curve(table: &CriterionTable, truth: &[f64], intercept: bool) -> Result<Vec<CurvePoint>> {
    let lt = table.rows[table.best_index(Criterion::Bic)?].lambda_t;
    let grid = descending(
        table
            .rows
            .iter()
            .filter(|r| r.lambda_t == lt)
            .map(|r| r.lambda_s)
            .chain(table.failures.iter().filter(|f| f.1 == lt).map(|f| f.0))
            .chain(table.skipped.iter().filter(|s| s.1 == lt).map(|s| s.0)),
    );
    let true_supp = penalized_support(truth, intercept);
    Ok(grid
        .iter()
        .enumerate()
        .filter_map(|(index, &ls)| {
            let r = table.rows.iter().find(|r| r.lambda_t == lt && r.lambda_s == ls)?;
            let (precision, recall) = precision_recall(&penalized_support(&r.fit.beta, intercept), &true_supp);
            Some(CurvePoint {
                index,
                lambda: ls,
                precision,
                recall,
                l2: l2(&r.fit.beta, truth),
            })
        })
        .collect())
}

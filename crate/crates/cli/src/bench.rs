//! `hippo bench`: Monte Carlo study with Table-1 style summaries.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use hippo::sim::study::MeanCurvePoint;
use hippo::sim::{run_study, Method, StudyConfig, StudyReport};
use hippo::{Criterion, TuningGrid};
use serde::Serialize;

use crate::config::FileConfig;
use crate::io::{write_json, write_rows};
use crate::{build_spec, PenaltyArg, Study};

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_enum)]
    pub study: Study,
    /// Sample size (default 200 for sim1, 400 for sim2).
    #[arg(long)]
    pub n: Option<usize>,
    /// Number of covariates (default 2000 for sim1, 600 for sim2).
    #[arg(long)]
    pub p: Option<usize>,
    /// Equicorrelation of the variance covariates (sim1 only).
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long, default_value_t = 100)]
    pub replicates: usize,
    /// hippo, hhr, both, oracle-mean or oracle-variance.
    #[arg(long, default_value = "both")]
    pub method: String,
    #[arg(long, default_value = "both", value_parser = ["aic", "bic", "both"])]
    pub criterion: String,
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub iterations: Option<u8>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "bench_out")]
    pub out_dir: PathBuf,
    /// 15 x 15 grid instead of 30 x 30.
    #[arg(long)]
    pub fast: bool,
    /// Fit the variance with the true mean (default: on for sim1, off for sim2).
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub known_mean: Option<bool>,
    #[arg(long)]
    pub penalty: Option<PenaltyArg>,
    /// Mean coordinate (column index, intercept = 0) to build Wald intervals for.
    #[arg(long)]
    pub ci_coord: Option<usize>,
    #[arg(long, default_value_t = 0.95)]
    pub ci_level: f64,
    /// Threshold on the final-iteration rows, e.g. `l2_beta<=0.2` or
    /// `coverage>=0.88`; the command exits with status 2 if any fails.
    #[arg(long = "assert", value_name = "METRIC OP VALUE")]
    pub asserts: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TableRow {
    pub study: String,
    pub n: usize,
    pub p: usize,
    pub rho: f64,
    pub method: &'static str,
    pub criterion: &'static str,
    pub iteration: usize,
    pub replicates: usize,
    pub failures: usize,
    pub l2_beta_mean: f64,
    pub l2_beta_sd: f64,
    pub pre_beta_mean: f64,
    pub pre_beta_sd: f64,
    pub rec_beta_mean: f64,
    pub rec_beta_sd: f64,
    pub l2_theta_mean: f64,
    pub l2_theta_sd: f64,
    pub pre_theta_mean: f64,
    pub pre_theta_sd: f64,
    pub rec_theta_mean: f64,
    pub rec_theta_sd: f64,
    pub ci_covered: Option<usize>,
    pub ci_total: Option<usize>,
    pub coverage: Option<f64>,
    #[serde(skip)]
    pub last: bool,
}

impl TableRow {
    fn metric(&self, name: &str) -> Result<Option<f64>> {
        Ok(match name {
            "l2_beta" => Some(self.l2_beta_mean),
            "pre_beta" => Some(self.pre_beta_mean),
            "rec_beta" => Some(self.rec_beta_mean),
            "l2_theta" => Some(self.l2_theta_mean),
            "pre_theta" => Some(self.pre_theta_mean),
            "rec_theta" => Some(self.rec_theta_mean),
            "coverage" => self.coverage,
            other => bail!("unknown metric {other:?} in --assert"),
        })
    }
}

#[derive(Serialize)]
struct ReplicateRow {
    replicate: usize,
    criterion: &'static str,
    iteration: usize,
    lambda_s: f64,
    lambda_t: f64,
    df: usize,
    l2_beta: f64,
    pre_beta: f64,
    rec_beta: f64,
    l2_theta: f64,
    pre_theta: f64,
    rec_theta: f64,
    ci_lo: Option<f64>,
    ci_hi: Option<f64>,
    ci_covered: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assertion {
    metric: String,
    op: &'static str,
    value: f64,
}

impl std::str::FromStr for Assertion {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        let s: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        for op in ["<=", ">=", "<", ">"] {
            if let Some((m, v)) = s.split_once(op) {
                let value = v.parse().with_context(|| format!("bad threshold in --assert {s:?}"))?;
                return Ok(Assertion {
                    metric: m.to_string(),
                    op,
                    value,
                });
            }
        }
        bail!("--assert {s:?} must look like METRIC<=VALUE (operators <=, >=, <, >)")
    }
}

impl Assertion {
    fn holds(&self, x: f64) -> bool {
        match self.op {
            "<=" => x <= self.value,
            ">=" => x >= self.value,
            "<" => x < self.value,
            _ => x > self.value,
        }
    }
}

fn methods(arg: &str) -> Result<Vec<Method>> {
    if arg.eq_ignore_ascii_case("both") {
        Ok(vec![Method::Hippo, Method::Hhr])
    } else {
        Ok(vec![arg.parse()?])
    }
}

fn criteria(arg: &str) -> Vec<Criterion> {
    match arg {
        "aic" => vec![Criterion::Aic],
        "bic" => vec![Criterion::Bic],
        _ => vec![Criterion::Aic, Criterion::Bic],
    }
}

pub fn table_rows(report: &StudyReport, study: &str, criteria: &[Criterion]) -> Vec<TableRow> {
    let mut out = Vec::new();
    for &c in criteria {
        for it in 1..=report.final_iteration() {
            let a = report.aggregate(c, it);
            let ci = report.config.ci.map(|_| report.coverage(c, it));
            out.push(TableRow {
                study: study.to_string(),
                n: report.spec.n,
                p: report.spec.p,
                rho: report.spec.rho,
                method: report.config.method.name(),
                criterion: c.name(),
                iteration: it,
                replicates: a.count,
                failures: report.failures.len(),
                l2_beta_mean: a.l2_beta.mean,
                l2_beta_sd: a.l2_beta.sd,
                pre_beta_mean: a.pre_beta.mean,
                pre_beta_sd: a.pre_beta.sd,
                rec_beta_mean: a.rec_beta.mean,
                rec_beta_sd: a.rec_beta.sd,
                l2_theta_mean: a.l2_theta.mean,
                l2_theta_sd: a.l2_theta.sd,
                pre_theta_mean: a.pre_theta.mean,
                pre_theta_sd: a.pre_theta.sd,
                rec_theta_mean: a.rec_theta.mean,
                rec_theta_sd: a.rec_theta.sd,
                ci_covered: ci.map(|c| c.0),
                ci_total: ci.map(|c| c.1),
                coverage: ci.and_then(|(k, t)| (t > 0).then(|| k as f64 / t as f64)),
                last: it == report.final_iteration(),
            });
        }
    }
    out
}

fn replicate_rows(report: &StudyReport) -> Vec<ReplicateRow> {
    report
        .replicates
        .iter()
        .flat_map(|r| {
            r.selections.iter().map(move |s| ReplicateRow {
                replicate: r.replicate,
                criterion: s.criterion.name(),
                iteration: s.iteration,
                lambda_s: s.lambda_s,
                lambda_t: s.lambda_t,
                df: s.df,
                l2_beta: s.metrics.l2_beta,
                pre_beta: s.metrics.pre_beta,
                rec_beta: s.metrics.rec_beta,
                l2_theta: s.metrics.l2_theta,
                pre_theta: s.metrics.pre_theta,
                rec_theta: s.metrics.rec_theta,
                ci_lo: s.ci.map(|c| c.lo),
                ci_hi: s.ci.map(|c| c.hi),
                ci_covered: s.ci.map(|c| c.covered),
            })
        })
        .collect()
}

fn write_curve(path: PathBuf, curve: &[MeanCurvePoint]) -> Result<()> {
    if curve.is_empty() {
        return Ok(());
    }
    write_rows(&path, curve)
}

pub fn run(args: &BenchArgs, cfg: &FileConfig, seed: u64) -> Result<()> {
    let asserts: Vec<Assertion> = args.asserts.iter().map(|a| a.parse()).collect::<Result<_>>()?;
    let spec = build_spec(args.study, args.n, args.p, args.rho, args.replicates, args.seed.unwrap_or(seed))?;
    let study = args.study.name();
    let mut hippo = cfg.hippo;
    if let Some(p) = args.penalty {
        hippo.penalty = p.penalty();
    }
    let mut grid = if args.fast {
        TuningGrid::fast(Criterion::Bic)
    } else {
        TuningGrid::standard(Criterion::Bic)
    };
    if let Some(a) = &cfg.grid.lambda_s {
        grid.lambda_s = a.clone();
    }
    if let Some(a) = &cfg.grid.lambda_t {
        grid.lambda_t = a.clone();
    }
    let iterations = args.iterations.map(usize::from).or(cfg.iterations).unwrap_or(2);
    let known_mean = args.known_mean.unwrap_or(matches!(args.study, Study::Sim1));
    let criteria = criteria(&args.criterion);

    std::fs::create_dir_all(&args.out_dir).with_context(|| format!("cannot create {}", args.out_dir.display()))?;
    let mut rows = Vec::new();
    let mut configs = Vec::new();
    for method in methods(&args.method)? {
        let mut sc = StudyConfig::new(method, &grid, iterations);
        sc.hippo = hippo;
        sc.known_mean = known_mean;
        sc.ci = args.ci_coord.map(|j| (j, args.ci_level));
        eprintln!("running {} x {} replicates of {study} (n={}, p={})", method.name(), spec.n_replicates, spec.n, spec.p);
        let report = run_study(&spec, &sc)?;
        for (r, msg) in &report.failures {
            eprintln!("warning: {} replicate {r} failed: {msg}", method.name());
        }
        let name = method.name();
        write_curve(args.out_dir.join(format!("curve_theta_{name}.csv")), &report.mean_theta_curve())?;
        write_curve(args.out_dir.join(format!("curve_beta_{name}.csv")), &report.mean_beta_curve())?;
        write_rows(&args.out_dir.join(format!("replicates_{name}.csv")), &replicate_rows(&report))?;
        rows.extend(table_rows(&report, study, &criteria));
        configs.push(sc);
    }
    write_rows(&args.out_dir.join("table.csv"), &rows)?;
    write_json(
        &args.out_dir.join("bench.json"),
        &serde_json::json!({ "spec": spec, "studies": configs }),
    )?;
    for r in &rows {
        println!(
            "{:<16} {:<3} it{} l2_beta={:.3}({:.3}) pre_beta={:.3} rec_beta={:.3} l2_theta={:.3}({:.3}) pre_theta={:.3} rec_theta={:.3}{}",
            r.method,
            r.criterion,
            r.iteration,
            r.l2_beta_mean,
            r.l2_beta_sd,
            r.pre_beta_mean,
            r.rec_beta_mean,
            r.l2_theta_mean,
            r.l2_theta_sd,
            r.pre_theta_mean,
            r.rec_theta_mean,
            r.coverage.map(|c| format!(" coverage={c:.3}")).unwrap_or_default()
        );
    }

    let mut failed = 0;
    for r in rows.iter().filter(|r| r.last) {
        for a in &asserts {
            let Some(x) = r.metric(&a.metric)? else {
                bail!("--assert {}: metric not available (coverage needs --ci-coord)", a.metric);
            };
            let ok = a.holds(x);
            failed += usize::from(!ok);
            println!(
                "{} {} {} it{}: {} = {x:.4} {} {}",
                if ok { "PASS" } else { "FAIL" },
                r.method,
                r.criterion,
                r.iteration,
                a.metric,
                a.op,
                a.value
            );
        }
    }
    if failed > 0 {
        eprintln!("{failed} assertion(s) failed");
        std::process::exit(2);
    }
    Ok(())
}

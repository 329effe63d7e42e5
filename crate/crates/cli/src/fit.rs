//! `hippo fit`: tuned fit on a CSV dataset.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use hippo::oracle::confidence_intervals;
use hippo::stage1::fit_stage1;
use hippo::tuning::{build_table, CriterionTable, SelectInputs};
use hippo::{Criterion, HippoFit, TuningGrid};
use serde::Serialize;

use crate::config::FileConfig;
use crate::io::{read_dataset, write_json, write_rows};
use crate::model::ModelFile;
use crate::PenaltyArg;

#[derive(Debug, Args)]
pub struct FitArgs {
    /// CSV file: response in the first column, covariates after it.
    #[arg(long)]
    pub data: PathBuf,
    /// The first CSV row is a header.
    #[arg(long)]
    pub header: bool,
    /// Add an unpenalized intercept to both the mean and the log-variance.
    #[arg(long)]
    pub intercept: bool,
    #[arg(long, value_parser = ["aic", "bic"])]
    pub criterion: Option<String>,
    /// 1: the three stages; 2: stages 2-3 once more from the selected mean.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub iterations: Option<u8>,
    #[arg(long)]
    pub penalty: Option<PenaltyArg>,
    /// Fit at this lambda_S only (requires --lambda-t).
    #[arg(long, requires = "lambda_t")]
    pub lambda_s: Option<f64>,
    /// Fit at this lambda_T only (requires --lambda-s).
    #[arg(long, requires = "lambda_s")]
    pub lambda_t: Option<f64>,
    /// 15 x 15 grid instead of 30 x 30.
    #[arg(long)]
    pub fast: bool,
    /// Level of the Wald intervals reported for the selected mean support.
    #[arg(long)]
    pub ci_level: Option<f64>,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Serialize)]
struct TableRow {
    iteration: usize,
    lambda_s: f64,
    lambda_t: f64,
    status: &'static str,
    df: Option<usize>,
    neg_loglik: Option<f64>,
    aic: Option<f64>,
    bic: Option<f64>,
    stage2_kkt: Option<bool>,
    stage3_kkt: Option<bool>,
    selected: bool,
}

fn table_rows(iteration: usize, table: &CriterionTable, selected: usize, out: &mut Vec<TableRow>) {
    for (i, r) in table.rows.iter().enumerate() {
        out.push(TableRow {
            iteration,
            lambda_s: r.lambda_s,
            lambda_t: r.lambda_t,
            status: if r.converged { "ok" } else { "not_converged" },
            df: Some(r.df),
            neg_loglik: Some(r.neg_loglik),
            aic: Some(r.aic),
            bic: Some(r.bic),
            stage2_kkt: r.fit.stage2.as_ref().map(|s| s.kkt.passed),
            stage3_kkt: r.fit.stage3.as_ref().map(|s| s.kkt.passed),
            selected: i == selected,
        });
    }
    let blank = |lambda_s, lambda_t, status| TableRow {
        iteration,
        lambda_s,
        lambda_t,
        status,
        df: None,
        neg_loglik: None,
        aic: None,
        bic: None,
        stage2_kkt: None,
        stage3_kkt: None,
        selected: false,
    };
    for &(s, t) in &table.skipped {
        out.push(blank(s, t, "skipped"));
    }
    for (s, t, msg) in &table.failures {
        eprintln!("warning: fit at lambda_S={s}, lambda_T={t} failed: {msg}");
        out.push(blank(*s, *t, "failed"));
    }
}

pub fn run(args: &FitArgs, cfg: &FileConfig) -> Result<()> {
    let d = read_dataset(&args.data, args.header, args.intercept)?;
    let mut hippo = cfg.hippo;
    if let Some(p) = args.penalty {
        hippo.penalty = p.penalty();
    }
    let criterion: Criterion = match &args.criterion {
        Some(c) => c.parse()?,
        None => cfg.criterion.unwrap_or(Criterion::Bic),
    };
    let iterations = args.iterations.map(usize::from).or(cfg.iterations).unwrap_or(1);
    let ci_level = args.ci_level.or(cfg.ci_level).unwrap_or(0.95);
    if !(0.0..1.0).contains(&ci_level) {
        bail!("--ci-level must lie in [0, 1), got {ci_level}");
    }
    let grid = match (args.lambda_s, args.lambda_t) {
        (Some(s), Some(t)) => TuningGrid::single(s, t, criterion),
        _ => {
            let mut g = if args.fast { TuningGrid::fast(criterion) } else { TuningGrid::standard(criterion) };
            if let Some(a) = &cfg.grid.lambda_s {
                g.lambda_s = a.clone();
            }
            if let Some(a) = &cfg.grid.lambda_t {
                g.lambda_t = a.clone();
            }
            g
        }
    };
    grid.validate()?;
    hippo.validate()?;

    let s1 = fit_stage1(&d, &hippo.solvers.stage1)?;
    if !s1.converged {
        eprintln!("warning: stage 1 did not converge within {} sweeps", s1.sweeps);
    }
    let mut mean_in = s1.beta;
    let mut rows = Vec::new();
    let mut fit: Option<HippoFit> = None;
    for it in 1..=iterations {
        if let Some(prev) = &fit {
            mean_in = prev.beta.clone();
        }
        let inputs = SelectInputs::from_residuals(d.residuals(&mean_in)?);
        let table = build_table(&d, &inputs, &grid, &hippo)?;
        let best = table
            .best_index(criterion)
            .with_context(|| format!("iteration {it}: no usable fit on the grid"))?;
        table_rows(it, &table, best, &mut rows);
        fit = Some(table.rows[best].fit.clone());
    }
    let fit = fit.expect("at least one iteration");
    let coords = fit.mean_support(&d);
    let cis = if coords.is_empty() {
        Vec::new()
    } else {
        confidence_intervals(&d, &fit, &coords, ci_level).context("confidence intervals")?
    };
    let model = ModelFile::new(&d, &fit, &hippo, criterion, iterations, mean_in, ci_level, cis)?;

    std::fs::create_dir_all(&args.out_dir).with_context(|| format!("cannot create {}", args.out_dir.display()))?;
    write_json(&args.out_dir.join("model.json"), &model)?;
    write_rows(&args.out_dir.join("criterion_table.csv"), &rows)?;
    println!(
        "selected lambda_S={:.6e} lambda_T={:.6e} {}={:.6} df={} |supp beta|={} |supp theta|={} converged={}",
        model.lambda_s,
        model.lambda_t,
        criterion.name(),
        criterion.value(&fit),
        model.df,
        model.beta_support.len(),
        model.theta_support.len(),
        model.converged
    );
    Ok(())
}

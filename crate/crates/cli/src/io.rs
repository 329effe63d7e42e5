//! CSV ingestion and export.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use nalgebra::{DMatrix, DVector};
use hippo::Dataset;

/// Reads `y, x_1, ..., x_p` rows; an intercept column is prepended on request.
pub fn read_dataset(path: &Path, header: bool, intercept: bool) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("cannot open {}", path.display()))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.with_context(|| format!("{}: malformed CSV", path.display()))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        let vals = rec
            .iter()
            .enumerate()
            .map(|(k, f)| {
                f.parse::<f64>()
                    .map_err(|_| anyhow!("{}:{line}: column {}: cannot parse {f:?} as a number", path.display(), k + 1))
            })
            .collect::<Result<Vec<f64>>>()?;
        if vals.len() < 2 {
            bail!("{}:{line}: need a response and at least one covariate", path.display());
        }
        if let Some(first) = rows.first() {
            if first.len() != vals.len() {
                bail!("{}:{line}: expected {} fields, found {}", path.display(), first.len(), vals.len());
            }
        }
        if let Some(k) = vals.iter().position(|v| !v.is_finite()) {
            bail!("{}:{line}: column {}: non-finite value", path.display(), k + 1);
        }
        rows.push(vals);
    }
    let n = rows.len();
    if n < 2 {
        bail!("{}: need at least 2 data rows, found {n}", path.display());
    }
    let p = rows[0].len() - 1;
    let y = DVector::from_iterator(n, rows.iter().map(|r| r[0]));
    let z = DMatrix::from_fn(n, p, |i, j| rows[i][j + 1]);
    Dataset::from_covariates(z, y, intercept).with_context(|| format!("{}: invalid data", path.display()))
}

/// Writes `d` in the layout read by [`read_dataset`], with a header row and
/// without the intercept column.
pub fn write_dataset(path: &Path, d: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot create {}", path.display()))?;
    let start = usize::from(d.has_intercept());
    let mut head = vec!["y".to_string()];
    head.extend((start..d.p()).map(|j| format!("x{}", j + 1 - start)));
    w.write_record(&head)?;
    for i in 0..d.n() {
        let mut row = vec![d.y()[i].to_string()];
        row.extend((start..d.p()).map(|j| d.x()[(i, j)].to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_rows<T: serde::Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot create {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("cannot write {}", path.display()))
}

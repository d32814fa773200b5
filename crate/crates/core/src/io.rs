//! File formats: labelled CSV datasets, posterior draws and run logs as
//! JSON lines.

use crate::error::{contract, Error, Result};
use crate::lfvi::TraceRecord;
use crate::ndcore::{RngStream, Tensor};
use crate::variational::GlobalApprox;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::path::Path;

/// Covariates with ±1 labels, read from a CSV whose last column is `label`.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledData {
    pub columns: Vec<String>,
    pub features: Tensor,
    pub labels: Vec<f64>,
}

impl LabeledData {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Per-column `(mean, sd)`; constant columns get sd 1.
    pub fn column_stats(&self) -> Vec<(f64, f64)> {
        let n = self.len() as f64;
        (0..self.features.cols())
            .map(|j| {
                let col = (0..self.len()).map(|r| self.features.row_slice(r)[j]);
                let m = col.clone().sum::<f64>() / n;
                let v = col.map(|x| (x - m).powi(2)).sum::<f64>() / n;
                (m, if v > 0.0 { v.sqrt() } else { 1.0 })
            })
            .collect()
    }

    /// Applies `(x − mean) / sd` column-wise.
    pub fn standardized(&self, stats: &[(f64, f64)]) -> LabeledData {
        let mut f = self.features.clone();
        for r in 0..f.rows() {
            for (v, (m, s)) in f.row_slice_mut(r).iter_mut().zip(stats) {
                *v = (*v - m) / s;
            }
        }
        LabeledData {
            columns: self.columns.clone(),
            features: f,
            labels: self.labels.clone(),
        }
    }
}

pub fn parse_labeled_csv(text: &str) -> Result<LabeledData> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let columns: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Parse(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if columns.last().map(String::as_str) != Some("label") || columns.len() < 2 {
        return Err(Error::Parse("the last column must be `label` after at least one feature".into()));
    }
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
        let vals: Vec<f64> = rec
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse(format!("row {}: {e}", i + 2)))?;
        let (label, feats) = vals.split_last().expect("nonempty record");
        if *label != 1.0 && *label != -1.0 {
            return Err(Error::Parse(format!("row {}: label must be 1 or -1", i + 2)));
        }
        labels.push(*label);
        rows.push(feats.to_vec());
    }
    if rows.is_empty() {
        return Err(Error::Parse("no data rows".into()));
    }
    Ok(LabeledData {
        columns: columns[..columns.len() - 1].to_vec(),
        features: Tensor::from_rows(&rows)?,
        labels,
    })
}

pub fn read_labeled_csv(path: &Path) -> Result<LabeledData> {
    parse_labeled_csv(&std::fs::read_to_string(path)?)
}

/// One posterior draw with its log density under `q` (`null` for a point
/// mass).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorDraw {
    pub beta: Vec<f64>,
    pub log_q: Option<f64>,
}

pub fn posterior_draws(q: &GlobalApprox, n: usize, rng: &mut RngStream) -> Vec<PosteriorDraw> {
    (0..n)
        .map(|_| {
            let beta = q.sample_value(rng);
            PosteriorDraw {
                log_q: q.logpdf(&beta),
                beta,
            }
        })
        .collect()
}

/// Serializes each item on its own line.
pub fn write_jsonl<T: Serialize>(mut w: impl Write, items: &[T]) -> Result<()> {
    for it in items {
        serde_json::to_writer(&mut w, it).map_err(|e| Error::Parse(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(r: impl BufRead) -> Result<Vec<T>> {
    r.lines()
        .filter(|l| l.as_ref().map_or(true, |s| !s.trim().is_empty()))
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(&l?).map_err(|e| Error::Parse(format!("line {}: {e}", i + 1)))
        })
        .collect()
}

/// Run log: one [`TraceRecord`] per line.
pub fn write_run_log(w: impl Write, trace: &[TraceRecord]) -> Result<()> {
    write_jsonl(w, trace)
}

/// Parses a data matrix CSV with a header row and numeric cells.
pub fn parse_matrix_csv(text: &str) -> Result<(Vec<String>, Tensor)> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Parse(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
        let row: Vec<f64> = rec
            .iter()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse(format!("row {}: {e}", i + 2)))?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(contract("no data rows"));
    }
    Ok((header, Tensor::from_rows(&rows)?))
}

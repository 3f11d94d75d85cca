//! Anomaly scores, percentile thresholds and latent export.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::dataset::format_timestamp;
use crate::error::{Error, Result};
use crate::models::Autoencoder;
use crate::nn::Matrix;
use crate::preprocess::Partition;
use crate::training::{CovarianceModel, ItemSet};

pub const DEFAULT_ALPHA: f64 = 95.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKind {
    MsePoint,
    MseWindow,
    Mahalanobis,
}

impl ScoreKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScoreKind::MsePoint => "mse_point",
            ScoreKind::MseWindow => "mse_window",
            ScoreKind::Mahalanobis => "mahalanobis",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSeries {
    pub scores: Vec<f64>,
    /// Sample index, or window end index.
    pub index: Vec<usize>,
    pub kind: ScoreKind,
    /// Partition the scored items came from.
    pub provenance: Partition,
}

impl ScoreSeries {
    pub fn new(scores: Vec<f64>, index: Vec<usize>, kind: ScoreKind, provenance: Partition) -> Result<Self> {
        if scores.len() != index.len() {
            return Err(Error::shape(format!(
                "{} scores for {} indices",
                scores.len(),
                index.len()
            )));
        }
        if let Some(bad) = scores.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
            return Err(Error::numeric(format!("invalid anomaly score {bad}")));
        }
        Ok(Self {
            scores,
            index,
            kind,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSpec {
    pub alpha: f64,
    pub tau: f64,
    pub kind: ScoreKind,
    pub fitted_on: usize,
}

/// Per-row mean of squared residuals.
pub fn mse_rows(x: &Matrix, recon: &Matrix) -> Result<Vec<f64>> {
    let r = recon.sub(x)?;
    let width = r.cols().max(1) as f64;
    Ok((0..r.rows())
        .map(|i| r.row(i).iter().map(|v| v * v).sum::<f64>() / width)
        .collect())
}

/// `√(rᵀ Σ⁻¹ r)` per row.
pub fn mahalanobis_rows(x: &Matrix, recon: &Matrix, cov: &CovarianceModel) -> Result<Vec<f64>> {
    cov.check_dim(x.cols())?;
    let r = recon.sub(x)?;
    let w = r.matmul(&cov.inverse)?;
    Ok((0..r.rows())
        .map(|i| {
            let q: f64 = r.row(i).iter().zip(w.row(i)).map(|(a, b)| a * b).sum();
            q.max(0.0).sqrt()
        })
        .collect())
}

pub fn score_pointwise_mse<A: Autoencoder>(model: &A, items: &ItemSet) -> Result<ScoreSeries> {
    let (recon, _) = model.encode_decode(&items.items)?;
    ScoreSeries::new(mse_rows(&items.items, &recon)?, items.index.clone(), ScoreKind::MsePoint, items.partition)
}

/// Mean over all `T·d` entries of each flattened window.
pub fn score_window_mse<A: Autoencoder>(model: &A, windows: &ItemSet) -> Result<ScoreSeries> {
    let (recon, _) = model.encode_decode(&windows.items)?;
    ScoreSeries::new(
        mse_rows(&windows.items, &recon)?,
        windows.index.clone(),
        ScoreKind::MseWindow,
        windows.partition,
    )
}

pub fn score_mahalanobis<A: Autoencoder>(model: &A, cov: &CovarianceModel, items: &ItemSet) -> Result<ScoreSeries> {
    let (recon, _) = model.encode_decode(&items.items)?;
    ScoreSeries::new(
        mahalanobis_rows(&items.items, &recon, cov)?,
        items.index.clone(),
        ScoreKind::Mahalanobis,
        items.partition,
    )
}

pub fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 100.0 {
        Ok(())
    } else {
        Err(Error::validation(format!("alpha {alpha} must lie in (0, 100]")))
    }
}

/// Linear-interpolation percentile of unsorted values.
pub fn percentile(values: &[f64], alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if values.is_empty() {
        return Err(Error::validation("cannot take a percentile of no scores"));
    }
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    let h = alpha / 100.0 * (s.len() - 1) as f64;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 >= s.len() {
        return Ok(s[s.len() - 1]);
    }
    Ok(s[lo] + frac * (s[lo + 1] - s[lo]))
}

pub fn fit_threshold(train_scores: &ScoreSeries, alpha: f64) -> Result<ThresholdSpec> {
    if train_scores.provenance != Partition::Train {
        return Err(Error::Leakage(format!(
            "threshold must be fitted on training scores, got {} scores",
            train_scores.provenance.as_str()
        )));
    }
    let tau = percentile(&train_scores.scores, alpha)?;
    Ok(ThresholdSpec {
        alpha,
        tau,
        kind: train_scores.kind,
        fitted_on: train_scores.len(),
    })
}

pub fn detect(scores: &ScoreSeries, spec: &ThresholdSpec) -> Result<Vec<bool>> {
    if scores.kind != spec.kind {
        return Err(Error::validation(format!(
            "threshold fitted on {} scores cannot judge {} scores",
            spec.kind.as_str(),
            scores.kind.as_str()
        )));
    }
    Ok(scores.scores.iter().map(|&s| s > spec.tau).collect())
}

pub fn extract_latent<A: Autoencoder>(model: &A, items: &Matrix) -> Result<Matrix> {
    Ok(model.encode_decode(items)?.1)
}

fn timestamp_of(timestamps: &[NaiveDateTime], i: usize) -> Result<String> {
    timestamps
        .get(i)
        .map(format_timestamp)
        .ok_or_else(|| Error::validation(format!("index {i} has no timestamp")))
}

pub fn write_scores_csv(path: &Path, scores: &ScoreSeries, flags: &[bool], timestamps: &[NaiveDateTime]) -> Result<()> {
    if flags.len() != scores.len() {
        return Err(Error::shape("one flag per score is required"));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(out, "index,timestamp,score,flagged").map_err(io)?;
    for ((&i, &s), &f) in scores.index.iter().zip(&scores.scores).zip(flags) {
        writeln!(out, "{i},{},{s},{}", timestamp_of(timestamps, i)?, u8::from(f)).map_err(io)?;
    }
    out.flush().map_err(io)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub index: usize,
    pub score: f64,
    pub flagged: bool,
}

pub fn read_scores_csv(path: &Path) -> Result<Vec<ScoreRow>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            row: 0,
            message: format!("{other:?}"),
        },
    })?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::validation(format!("scores file lacks a `{name}` column")))
    };
    let (ci, cs, cf) = (col("index")?, col("score")?, col("flagged")?);
    let mut rows = Vec::new();
    for (n, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = n + 2;
        let bad = |what: &str| Error::Parse {
            row: line,
            message: format!("bad {what}"),
        };
        let index = rec.get(ci).and_then(|v| v.trim().parse().ok()).ok_or_else(|| bad("index"))?;
        let score = rec.get(cs).and_then(|v| v.trim().parse().ok()).ok_or_else(|| bad("score"))?;
        let flagged = match rec.get(cf).map(str::trim) {
            Some("1") | Some("true") => true,
            Some("0") | Some("false") => false,
            _ => return Err(bad("flag")),
        };
        rows.push(ScoreRow { index, score, flagged });
    }
    Ok(rows)
}

pub fn write_latent_csv(path: &Path, latent: &Matrix, index: &[usize], timestamps: &[NaiveDateTime]) -> Result<()> {
    if index.len() != latent.rows() {
        return Err(Error::shape("one index per latent row is required"));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    let zs: Vec<String> = (1..=latent.cols()).map(|k| format!("z{k}")).collect();
    writeln!(out, "index,timestamp,{}", zs.join(",")).map_err(io)?;
    for (r, &i) in index.iter().enumerate() {
        let vals: Vec<String> = latent.row(r).iter().map(f64::to_string).collect();
        writeln!(out, "{i},{},{}", timestamp_of(timestamps, i)?, vals.join(",")).map_err(io)?;
    }
    out.flush().map_err(io)
}

//! Confusion counts and detection metrics.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

/// Printed in place of a metric whose denominator is zero.
pub const UNDEFINED: &str = "undefined";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Positive class is "fault".
pub fn confusion(flags: &[bool], truth: &[bool]) -> Result<ConfusionMatrix> {
    if flags.len() != truth.len() {
        return Err(Error::validation(format!(
            "{} flags for {} labels",
            flags.len(),
            truth.len()
        )));
    }
    let mut cm = ConfusionMatrix::default();
    for (&f, &t) in flags.iter().zip(truth) {
        match (f, t) {
            (true, true) => cm.tp += 1,
            (true, false) => cm.fp += 1,
            (false, false) => cm.tn += 1,
            (false, true) => cm.fn_ += 1,
        }
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricsReport {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub specificity: Option<f64>,
    pub f1: Option<f64>,
    pub confusion: ConfusionMatrix,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn f1_score(precision: f64, recall: f64) -> Option<f64> {
    let s = precision + recall;
    (s > 0.0).then(|| 2.0 * precision * recall / s)
}

pub fn metrics(cm: ConfusionMatrix) -> MetricsReport {
    let precision = ratio(cm.tp, cm.tp + cm.fp);
    let recall = ratio(cm.tp, cm.tp + cm.fn_);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) => f1_score(p, r),
        _ => None,
    };
    MetricsReport {
        precision,
        recall,
        specificity: ratio(cm.tn, cm.tn + cm.fp),
        f1,
        confusion: cm,
    }
}

fn show(v: Option<f64>) -> String {
    v.map_or_else(|| UNDEFINED.to_string(), |x| x.to_string())
}

impl MetricsReport {
    fn rows(&self) -> [(&'static str, String); 8] {
        let cm = self.confusion;
        [
            ("precision", show(self.precision)),
            ("recall", show(self.recall)),
            ("specificity", show(self.specificity)),
            ("f1", show(self.f1)),
            ("tp", cm.tp.to_string()),
            ("fp", cm.fp.to_string()),
            ("tn", cm.tn.to_string()),
            ("fn", cm.fn_.to_string()),
        ]
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("metric,value\n");
        for (k, v) in self.rows() {
            s.push_str(&format!("{k},{v}\n"));
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        out.write_all(self.to_csv().as_bytes())
            .and_then(|_| out.flush())
            .map_err(|e| Error::io(path, e))
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<12} {:>10}", "metric", "value")?;
        let named = [
            ("precision", self.precision),
            ("recall", self.recall),
            ("specificity", self.specificity),
            ("f1", self.f1),
        ];
        for (k, v) in named {
            let s = v.map_or_else(|| UNDEFINED.to_string(), |x| format!("{x:.4}"));
            writeln!(f, "{k:<12} {s:>10}")?;
        }
        let cm = self.confusion;
        writeln!(f, "tp={} fp={} tn={} fn={}", cm.tp, cm.fp, cm.tn, cm.fn_)
    }
}

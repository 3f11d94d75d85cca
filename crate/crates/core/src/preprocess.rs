//! Data preparation: empty-channel removal, gap imputation, healthy-only
//! MinMax scaling, the chronological healthy split and sliding windows.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::dataset::{LabelVector, SensorLog};
use crate::error::{Error, Result};
use crate::nn::init::seeded_rng;
use crate::nn::Matrix;

/// Removes channels with no observed value. Returns the reduced log and the dropped names.
pub fn drop_empty_channels(log: &SensorLog) -> Result<(SensorLog, Vec<String>)> {
    let mut kept_names = Vec::new();
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for (c, name) in log.channel_names().iter().enumerate() {
        let col = log.column(c);
        if col.iter().any(Option::is_some) {
            kept_names.push(name.clone());
            kept.push(col);
        } else {
            dropped.push(name.clone());
        }
    }
    if kept.is_empty() {
        return Err(Error::validation("every channel is empty"));
    }
    if dropped.is_empty() {
        return Ok((log.clone(), dropped));
    }
    Ok((log.with_columns(kept_names, &kept)?, dropped))
}

/// Fills one channel: linear interpolation over interior gaps, then backward
/// fill for the leading run and forward fill for the trailing run.
/// Returns `None` when the channel has no observed value.
pub fn impute_column(col: &[Option<f64>]) -> Option<Vec<f64>> {
    let observed: Vec<usize> = (0..col.len()).filter(|&i| col[i].is_some()).collect();
    let (&first, &last) = (observed.first()?, observed.last()?);
    let mut out = vec![0.0; col.len()];
    for pair in observed.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let (va, vb) = (col[a].unwrap(), col[b].unwrap());
        out[a] = va;
        let span = (b - a) as f64;
        for (k, slot) in out.iter_mut().enumerate().take(b).skip(a + 1) {
            let w = (k - a) as f64 / span;
            *slot = va + w * (vb - va);
        }
    }
    out[last] = col[last].unwrap();
    let lead = col[first].unwrap();
    out[..first].fill(lead);
    let trail = col[last].unwrap();
    out[last + 1..].fill(trail);
    Some(out)
}

pub fn impute_cascade(log: &SensorLog) -> Result<SensorLog> {
    let columns = (0..log.n_channels())
        .map(|c| {
            impute_column(&log.column(c))
                .map(|v| v.into_iter().map(Some).collect())
                .ok_or_else(|| {
                    Error::validation(format!(
                        "channel {} is fully missing; drop it before imputing",
                        log.channel_names()[c]
                    ))
                })
        })
        .collect::<Result<Vec<Vec<Option<f64>>>>>()?;
    log.with_columns(log.channel_names().to_vec(), &columns)
}

/// Per-channel min/max fitted on healthy training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub fitted_on: usize,
}

/// Row indices certified to belong to the healthy training pool of a [`SplitPlan`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainRows(Vec<usize>);

impl TrainRows {
    /// Selects `rows`, failing with a leakage error if any is outside the plan's training pool.
    pub fn select(plan: &SplitPlan, rows: &[usize]) -> Result<Self> {
        let pool: BTreeSet<usize> = plan.pool().collect();
        if let Some(bad) = rows.iter().find(|r| !pool.contains(r)) {
            return Err(Error::Leakage(format!(
                "row {bad} is not a healthy training row"
            )));
        }
        Ok(Self(rows.to_vec()))
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }
}

pub fn fit_scaler(matrix: &Matrix, rows: &TrainRows) -> Result<ScalerParams> {
    let rows = rows.indices();
    if rows.is_empty() {
        return Err(Error::validation("scaler fitting set is empty"));
    }
    let c = matrix.cols();
    let mut min = vec![f64::INFINITY; c];
    let mut max = vec![f64::NEG_INFINITY; c];
    for &r in rows {
        if r >= matrix.rows() {
            return Err(Error::shape(format!("row {r} out of range")));
        }
        for (j, &v) in matrix.row(r).iter().enumerate() {
            min[j] = min[j].min(v);
            max[j] = max[j].max(v);
        }
    }
    Ok(ScalerParams {
        min,
        max,
        fitted_on: rows.len(),
    })
}

impl ScalerParams {
    fn check(&self, m: &Matrix) -> Result<()> {
        if m.cols() != self.min.len() {
            return Err(Error::shape(format!(
                "scaler fitted on {} channels, got {}",
                self.min.len(),
                m.cols()
            )));
        }
        Ok(())
    }

    /// `(x − min)/(max − min)`, unclamped; constant channels map to 0.
    pub fn apply(&self, m: &Matrix) -> Result<Matrix> {
        self.check(m)?;
        let mut out = m.clone();
        let c = m.cols();
        for (k, v) in out.data_mut().iter_mut().enumerate() {
            let j = k % c;
            let span = self.max[j] - self.min[j];
            *v = if span > 0.0 {
                (*v - self.min[j]) / span
            } else {
                0.0
            };
        }
        Ok(out)
    }

    /// Inverse of [`apply`](Self::apply) for non-constant channels; constant channels return `min`.
    pub fn invert(&self, m: &Matrix) -> Result<Matrix> {
        self.check(m)?;
        let mut out = m.clone();
        let c = m.cols();
        for (k, v) in out.data_mut().iter_mut().enumerate() {
            let j = k % c;
            *v = self.min[j] + *v * (self.max[j] - self.min[j]);
        }
        Ok(out)
    }
}

pub fn apply_scaler(matrix: &Matrix, params: &ScalerParams) -> Result<Matrix> {
    params.apply(matrix)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Train,
    Val,
    Test,
}

impl Partition {
    pub fn as_str(self) -> &'static str {
        match self {
            Partition::Train => "train",
            Partition::Val => "val",
            Partition::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Partition::Train),
            "val" | "validation" => Some(Partition::Val),
            "test" => Some(Partition::Test),
            _ => None,
        }
    }
}

/// Disjoint row-index partitions of a log. All index lists are ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPlan {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitPlan {
    /// Healthy training pool: train ∪ validation, ascending.
    pub fn pool(&self) -> impl Iterator<Item = usize> + '_ {
        let set: BTreeSet<usize> = self.train.iter().chain(&self.validation).copied().collect();
        set.into_iter()
    }

    pub fn fitting_rows(&self) -> TrainRows {
        TrainRows(self.pool().collect())
    }

    pub fn n_rows(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }

    pub fn partition_of(&self) -> Vec<(usize, Partition)> {
        let mut all: Vec<(usize, Partition)> = self
            .train
            .iter()
            .map(|&i| (i, Partition::Train))
            .chain(self.validation.iter().map(|&i| (i, Partition::Val)))
            .chain(self.test.iter().map(|&i| (i, Partition::Test)))
            .collect();
        all.sort_unstable();
        all
    }

    /// Checks disjointness and that no fault row sits in train or validation.
    pub fn validate(&self, labels: &LabelVector) -> Result<()> {
        let mut seen = BTreeSet::new();
        for (i, part) in self.partition_of() {
            if !seen.insert(i) {
                return Err(Error::validation(format!("row {i} is in more than one partition")));
            }
            if i >= labels.len() {
                return Err(Error::validation(format!("row {i} is outside the log")));
            }
            if part != Partition::Test && labels.flags[i] {
                return Err(Error::Leakage(format!(
                    "fault row {i} assigned to the {} partition",
                    part.as_str()
                )));
            }
        }
        Ok(())
    }
}

fn ratio_count(n: usize, ratio: f64) -> usize {
    (n as f64 * ratio + 1e-9).floor() as usize
}

/// Chronological healthy split with a seeded random validation carve-out.
pub fn plan_split(
    labels: &LabelVector,
    train_ratio: f64,
    validation_ratio: f64,
    seed: u64,
) -> Result<SplitPlan> {
    for (name, r) in [("train_ratio", train_ratio), ("validation_ratio", validation_ratio)] {
        if !(r > 0.0 && r < 1.0) {
            return Err(Error::validation(format!("{name} must lie in (0, 1), got {r}")));
        }
    }
    let healthy: Vec<usize> = (0..labels.len()).filter(|&i| !labels.flags[i]).collect();
    if healthy.is_empty() {
        return Err(Error::validation("no healthy samples to train on"));
    }
    let n_pool = ratio_count(healthy.len(), train_ratio);
    let pool = &healthy[..n_pool];
    let mut test: Vec<usize> = healthy[n_pool..].to_vec();
    test.extend((0..labels.len()).filter(|&i| labels.flags[i]));
    test.sort_unstable();

    let n_val = ratio_count(pool.len(), validation_ratio);
    let (train, validation) = carve(pool, n_val, seed);
    Ok(SplitPlan {
        train,
        validation,
        test,
    })
}

/// Seeded uniform sample of `n_take` entries of `items`; returns `(rest, taken)`, both in input order.
pub fn carve<T: Copy>(items: &[T], n_take: usize, seed: u64) -> (Vec<T>, Vec<T>) {
    let mut rng = seeded_rng(seed);
    let mut chosen = vec![false; items.len()];
    for k in sample(&mut rng, items.len(), n_take.min(items.len())) {
        chosen[k] = true;
    }
    let mut rest = Vec::with_capacity(items.len() - n_take);
    let mut taken = Vec::with_capacity(n_take);
    for (item, c) in items.iter().zip(chosen) {
        if c {
            taken.push(*item);
        } else {
            rest.push(*item);
        }
    }
    (rest, taken)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub length: usize,
    pub stride: usize,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self {
            length: 5,
            stride: 1,
        }
    }
}

impl WindowSpec {
    pub fn new(length: usize, stride: usize) -> Result<Self> {
        if length == 0 || stride == 0 {
            return Err(Error::validation("window length and stride must be positive"));
        }
        Ok(Self { length, stride })
    }
}

/// Windows stored item-major, each `length × width` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSet {
    pub length: usize,
    pub width: usize,
    pub data: Vec<f64>,
    pub labels: Vec<bool>,
    /// Row index of each window's last frame.
    pub end_indices: Vec<usize>,
}

impl WindowSet {
    pub fn empty(length: usize, width: usize) -> Self {
        Self {
            length,
            width,
            data: Vec::new(),
            labels: Vec::new(),
            end_indices: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn item(&self, i: usize) -> &[f64] {
        let size = self.length * self.width;
        &self.data[i * size..(i + 1) * size]
    }

    pub fn select(&self, idx: &[usize]) -> WindowSet {
        let mut out = WindowSet::empty(self.length, self.width);
        for &i in idx {
            out.data.extend_from_slice(self.item(i));
            out.labels.push(self.labels[i]);
            out.end_indices.push(self.end_indices[i]);
        }
        out
    }

    fn append(&mut self, other: WindowSet) {
        self.data.extend(other.data);
        self.labels.extend(other.labels);
        self.end_indices.extend(other.end_indices);
    }
}

/// Sliding windows over every row of `matrix`; a window's label is the OR of its frames.
pub fn make_windows(matrix: &Matrix, labels: &[bool], spec: WindowSpec) -> Result<WindowSet> {
    let n = matrix.rows();
    if labels.len() != n {
        return Err(Error::shape(format!("{} labels for {n} rows", labels.len())));
    }
    if spec.length == 0 || spec.stride == 0 {
        return Err(Error::validation("window length and stride must be positive"));
    }
    if n < spec.length {
        return Err(Error::validation(format!(
            "{n} rows cannot hold a window of {}",
            spec.length
        )));
    }
    let count = (n - spec.length) / spec.stride + 1;
    let mut out = WindowSet::empty(spec.length, matrix.cols());
    out.data.reserve(count * spec.length * matrix.cols());
    for w in 0..count {
        let start = w * spec.stride;
        let end = start + spec.length;
        for r in start..end {
            out.data.extend_from_slice(matrix.row(r));
        }
        out.labels.push(labels[start..end].iter().any(|&f| f));
        out.end_indices.push(end - 1);
    }
    Ok(out)
}

/// Windows over the contiguous runs of `rows` (ascending indices into `matrix`).
/// Runs shorter than the window length contribute nothing; end indices refer to `matrix` rows.
pub fn windows_over_rows(
    matrix: &Matrix,
    labels: &[bool],
    rows: &[usize],
    spec: WindowSpec,
) -> Result<WindowSet> {
    let mut out = WindowSet::empty(spec.length, matrix.cols());
    for run in contiguous_runs(rows) {
        if run.len() < spec.length {
            continue;
        }
        let sub = matrix.select_rows(run);
        let sub_labels: Vec<bool> = run.iter().map(|&r| labels[r]).collect();
        let mut ws = make_windows(&sub, &sub_labels, spec)?;
        for e in ws.end_indices.iter_mut() {
            *e = run[*e];
        }
        out.append(ws);
    }
    Ok(out)
}

fn contiguous_runs(rows: &[usize]) -> Vec<&[usize]> {
    let mut runs = Vec::new();
    let mut start = 0;
    for i in 1..=rows.len() {
        if i == rows.len() || rows[i] != rows[i - 1] + 1 {
            if i > start {
                runs.push(&rows[start..i]);
            }
            start = i;
        }
    }
    runs
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Prepared-matrix CSV: header of channel names, one row per sample.
pub fn write_matrix_csv(path: &Path, names: &[String], m: &Matrix) -> Result<()> {
    if names.len() != m.cols() {
        return Err(Error::shape("header length differs from column count"));
    }
    let mut out = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(out, "{}", names.join(",")).map_err(io)?;
    for r in 0..m.rows() {
        let line: Vec<String> = m.row(r).iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", line.join(",")).map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn read_matrix_csv(path: &Path) -> Result<(Vec<String>, Matrix)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let names: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let mut data = Vec::new();
    let mut rows = 0;
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        for cell in rec.iter() {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row: i + 2,
                message: format!("bad number {cell:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row: i + 2,
                    message: "non-finite value in prepared matrix".into(),
                });
            }
            data.push(v);
        }
        rows += 1;
    }
    let m = Matrix::from_vec(rows, names.len(), data)?;
    Ok((names, m))
}

/// SplitPlan CSV: `row_index,partition`.
pub fn write_split_csv(path: &Path, plan: &SplitPlan) -> Result<()> {
    let mut out = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(out, "row_index,partition").map_err(io)?;
    for (i, p) in plan.partition_of() {
        writeln!(out, "{i},{}", p.as_str()).map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn read_split_csv(path: &Path) -> Result<SplitPlan> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let mut plan = SplitPlan {
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
    };
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let bad = |m: &str| Error::Parse {
            row: i + 2,
            message: m.to_string(),
        };
        let idx: usize = rec
            .get(0)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("bad row_index"))?;
        match rec.get(1).and_then(Partition::parse) {
            Some(Partition::Train) => plan.train.push(idx),
            Some(Partition::Val) => plan.validation.push(idx),
            Some(Partition::Test) => plan.test.push(idx),
            None => return Err(bad("bad partition")),
        }
    }
    for v in [&mut plan.train, &mut plan.validation, &mut plan.test] {
        v.sort_unstable();
    }
    Ok(plan)
}

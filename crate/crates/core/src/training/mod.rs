//! The training protocol: shuffled mini-batch Adam, per-epoch validation,
//! early stopping with best-weight restore, plateau learning-rate decay, and
//! the MSE warm-up that precedes Mahalanobis training.

pub mod covariance;
pub mod loss;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use covariance::{estimate_residual_covariance, matrix_inverse_sqrt, CovarianceModel};
pub use loss::{mahalanobis_loss, mse_loss, window_mse_loss};

use crate::error::{Error, Result};
use crate::models::{Architecture, Autoencoder, DenseAE, LstmAE};
use crate::nn::init::seeded_rng;
use crate::nn::{Adam, AdamConfig, EarlyStopping, Matrix, PlateauScheduler, StopDecision};
use crate::preprocess::{Partition, WindowSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Mse,
    Mahalanobis,
}

impl LossKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LossKind::Mse => "mse",
            LossKind::Mahalanobis => "mahalanobis",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "mse" => Some(LossKind::Mse),
            "mahalanobis" => Some(LossKind::Mahalanobis),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub es_patience: usize,
    pub plateau_patience: usize,
    pub plateau_factor: f64,
    pub loss: LossKind,
    pub warmup_epochs: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn dense() -> Self {
        Self {
            max_epochs: 25,
            learning_rate: 3e-3,
            batch_size: 256,
            es_patience: 10,
            plateau_patience: 5,
            plateau_factor: 0.2,
            loss: LossKind::Mse,
            warmup_epochs: 5,
            seed: 0,
        }
    }

    pub fn lstm() -> Self {
        Self {
            learning_rate: 1e-3,
            ..Self::dense()
        }
    }

    pub fn for_architecture(arch: Architecture) -> Self {
        match arch {
            Architecture::DenseAe => Self::dense(),
            Architecture::LstmAe => Self::lstm(),
        }
    }

    pub fn validate(&self, arch: Architecture) -> Result<()> {
        if self.batch_size == 0 || self.es_patience == 0 || self.plateau_patience == 0 {
            return Err(Error::Config(
                "batch_size and patience values must be positive".into(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor < 1.0) {
            return Err(Error::Config("plateau_factor must lie in (0, 1)".into()));
        }
        if self.loss == LossKind::Mahalanobis {
            if arch != Architecture::DenseAe {
                return Err(Error::Config(
                    "the mahalanobis loss is only available for dense_ae".into(),
                ));
            }
            if self.warmup_epochs == 0 {
                return Err(Error::Config("warmup_epochs must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Training or evaluation items: snapshots (`d` values) or flattened windows (`T·d` values).
#[derive(Debug, Clone, PartialEq)]
pub struct ItemSet {
    pub partition: Partition,
    pub items: Matrix,
    pub labels: Vec<bool>,
    /// Source row of each snapshot, or end row of each window.
    pub index: Vec<usize>,
}

impl ItemSet {
    pub fn snapshots(matrix: &Matrix, labels: &[bool], rows: &[usize], partition: Partition) -> Self {
        Self {
            partition,
            items: matrix.select_rows(rows),
            labels: rows.iter().map(|&r| labels[r]).collect(),
            index: rows.to_vec(),
        }
    }

    pub fn windows(ws: WindowSet, partition: Partition) -> Result<Self> {
        let n = ws.len();
        let items = Matrix::from_vec(n, ws.length * ws.width, ws.data)?;
        Ok(Self {
            partition,
            items,
            labels: ws.labels,
            index: ws.end_indices,
        })
    }

    pub fn len(&self) -> usize {
        self.items.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.items.rows() == 0
    }

    pub fn select(&self, idx: &[usize], partition: Partition) -> Self {
        Self {
            partition,
            items: self.items.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            index: idx.iter().map(|&i| self.index[i]).collect(),
        }
    }

    /// Leakage guard: no item may carry a fault label.
    pub fn ensure_healthy(&self) -> Result<()> {
        if let Some(k) = self.labels.iter().position(|&f| f) {
            return Err(Error::Leakage(format!(
                "item {k} (row {}) in the {} set is labelled anomalous",
                self.index[k],
                self.partition.as_str()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    NoEpochs,
    MaxEpochs,
    EarlyStopping,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub learning_rate: f64,
    pub loss: LossKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    /// 1-based; 0 when no epoch ran.
    pub best_epoch: usize,
    pub stop_reason: StopReason,
}

impl TrainReport {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(out, "epoch,train_loss,val_loss,learning_rate").map_err(io)?;
        for r in &self.epochs {
            writeln!(
                out,
                "{},{},{},{}",
                r.epoch, r.train_loss, r.val_loss, r.learning_rate
            )
            .map_err(io)?;
        }
        out.flush().map_err(io)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<A> {
    pub model: A,
    pub report: TrainReport,
    pub covariance: Option<CovarianceModel>,
}

/// Training-time view of the two architectures.
pub trait Trainable: Autoencoder + Clone {
    fn architecture(&self) -> Architecture;
}

impl Trainable for DenseAE {
    fn architecture(&self) -> Architecture {
        Architecture::DenseAe
    }
}

impl Trainable for LstmAE {
    fn architecture(&self) -> Architecture {
        Architecture::LstmAe
    }
}

fn batch_loss(loss: LossKind, cov: Option<&CovarianceModel>, x: &Matrix, recon: &Matrix) -> Result<(f64, Matrix)> {
    match (loss, cov) {
        (LossKind::Mahalanobis, Some(cov)) => mahalanobis_loss(x, recon, cov),
        _ => mse_loss(x, recon),
    }
}

/// Item-weighted mean loss over a whole set, evaluated in batches.
pub fn evaluate_loss<A: Autoencoder>(
    model: &A,
    set: &ItemSet,
    loss: LossKind,
    cov: Option<&CovarianceModel>,
    batch_size: usize,
) -> Result<f64> {
    let n = set.len();
    let mut total = 0.0;
    let mut start = 0;
    while start < n {
        let end = (start + batch_size).min(n);
        let idx: Vec<usize> = (start..end).collect();
        let x = set.items.select_rows(&idx);
        let (recon, _) = model.encode_decode(&x)?;
        total += batch_loss(loss, cov, &x, &recon)?.0 * (end - start) as f64;
        start = end;
    }
    Ok(total / n as f64)
}

pub fn train<A: Trainable>(mut model: A, train_set: &ItemSet, val_set: &ItemSet, cfg: &TrainConfig) -> Result<TrainOutcome<A>> {
    cfg.validate(model.architecture())?;
    if train_set.partition != Partition::Train {
        return Err(Error::Leakage(format!(
            "training items come from the {} partition",
            train_set.partition.as_str()
        )));
    }
    if val_set.partition != Partition::Val {
        return Err(Error::Leakage(format!(
            "validation items come from the {} partition",
            val_set.partition.as_str()
        )));
    }
    train_set.ensure_healthy()?;
    val_set.ensure_healthy()?;
    for set in [train_set, val_set] {
        if set.items.cols() != model.item_len() {
            return Err(Error::shape(format!(
                "items have {} values, model expects {}",
                set.items.cols(),
                model.item_len()
            )));
        }
    }
    if cfg.max_epochs == 0 {
        return Ok(TrainOutcome {
            model,
            report: TrainReport {
                epochs: Vec::new(),
                best_epoch: 0,
                stop_reason: StopReason::NoEpochs,
            },
            covariance: None,
        });
    }
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::validation("training and validation sets must be non-empty"));
    }

    let mut rng = seeded_rng(cfg.seed);
    let mut adam = Adam::new(AdamConfig::with_learning_rate(cfg.learning_rate));
    let mut stopper = EarlyStopping::new(cfg.es_patience);
    let mut plateau = PlateauScheduler::new(cfg.plateau_patience, cfg.plateau_factor);
    let mut best = model.clone();
    let mut best_epoch = 0;
    let mut covariance: Option<CovarianceModel> = None;
    let mut epochs = Vec::new();
    let mut stop_reason = StopReason::MaxEpochs;
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=cfg.max_epochs {
        let phase = if cfg.loss == LossKind::Mahalanobis && epoch > cfg.warmup_epochs {
            LossKind::Mahalanobis
        } else {
            LossKind::Mse
        };
        if phase == LossKind::Mahalanobis && covariance.is_none() {
            covariance = Some(estimate_residual_covariance(&model, train_set)?);
            // the monitored loss changes scale here; both callbacks start over
            stopper = EarlyStopping::new(cfg.es_patience);
            plateau = PlateauScheduler::new(cfg.plateau_patience, cfg.plateau_factor);
        }
        let cov = covariance.as_ref();

        order.shuffle(&mut rng);
        let lr = adam.learning_rate();
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let x = train_set.items.select_rows(chunk);
            let (recon, cache) = model.forward_train(&x)?;
            let (loss, grad) = batch_loss(phase, cov, &x, &recon)?;
            if !loss.is_finite() {
                return Err(Error::numeric(format!("non-finite training loss in epoch {epoch}")));
            }
            let grads = model.backward(&grad, &cache)?;
            adam.step(model.tensors_mut(), &grads)?;
            total += loss * chunk.len() as f64;
        }
        let train_loss = total / train_set.len() as f64;
        let val_loss = evaluate_loss(&model, val_set, phase, cov, cfg.batch_size)?;
        if !val_loss.is_finite() {
            return Err(Error::numeric(format!("non-finite validation loss in epoch {epoch}")));
        }
        epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            learning_rate: lr,
            loss: phase,
        });

        let (decision, improved) = stopper.update(val_loss);
        if improved {
            best = model.clone();
            best_epoch = epoch;
        }
        adam.set_learning_rate(plateau.update(val_loss, lr));
        if decision == StopDecision::Stop {
            stop_reason = StopReason::EarlyStopping;
            break;
        }
    }

    if cfg.loss == LossKind::Mahalanobis && covariance.is_none() {
        // warm-up covered every epoch; estimate from the final weights
        covariance = Some(estimate_residual_covariance(&best, train_set)?);
    }
    Ok(TrainOutcome {
        model: best,
        report: TrainReport {
            epochs,
            best_epoch,
            stop_reason,
        },
        covariance,
    })
}

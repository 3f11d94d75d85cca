//! Preparation stage shared by the library pipeline and the command-line front-end.

use chrono::NaiveDateTime;

use crate::dataset::{label_samples, FaultSchedule, SensorLog};
use crate::error::{Error, Result};
use crate::nn::Matrix;
use crate::preprocess::{
    carve, drop_empty_channels, fit_scaler, impute_cascade, plan_split, windows_over_rows, Partition,
    ScalerParams, SplitPlan, WindowSpec,
};
use crate::training::ItemSet;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrepConfig {
    pub train_ratio: f64,
    pub validation_ratio: f64,
    pub seed: u64,
}

impl Default for PrepConfig {
    fn default() -> Self {
        Self {
            train_ratio: 0.9,
            validation_ratio: 0.2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrepSummary {
    pub rows: usize,
    pub channels: usize,
    pub dropped: Vec<String>,
    pub missing_before: usize,
    pub missing_after: usize,
    pub fault_rows: usize,
    pub train_rows: usize,
    pub validation_rows: usize,
    pub test_rows: usize,
}

impl PrepSummary {
    pub fn render(&self) -> String {
        let dropped = if self.dropped.is_empty() {
            "none".to_string()
        } else {
            self.dropped.join(" ")
        };
        format!(
            "rows {}\nchannels {}\ndropped_channels {dropped}\nmissing_cells_before {}\nmissing_cells_after {}\nfault_rows {}\ntrain_rows {}\nvalidation_rows {}\ntest_rows {}\n",
            self.rows,
            self.channels,
            self.missing_before,
            self.missing_after,
            self.fault_rows,
            self.train_rows,
            self.validation_rows,
            self.test_rows
        )
    }
}

/// Scaled matrix of every row, with labels and the split.
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub channels: Vec<String>,
    pub timestamps: Vec<NaiveDateTime>,
    pub scaled: Matrix,
    pub labels: Vec<bool>,
    pub plan: SplitPlan,
    pub scaler: ScalerParams,
}

pub fn prepare(log: &SensorLog, schedule: &FaultSchedule, cfg: &PrepConfig) -> Result<(Prepared, PrepSummary)> {
    let missing_before = log.missing_count();
    let (log, dropped) = drop_empty_channels(log)?;
    let log = impute_cascade(&log)?;
    let labels = label_samples(&log, schedule);
    let plan = plan_split(&labels, cfg.train_ratio, cfg.validation_ratio, cfg.seed)?;
    plan.validate(&labels)?;
    let raw = Matrix::from_vec(log.n_rows(), log.n_channels(), log.to_dense()?)?;
    let scaler = fit_scaler(&raw, &plan.fitting_rows())?;
    let scaled = scaler.apply(&raw)?;
    let summary = PrepSummary {
        rows: log.n_rows(),
        channels: log.n_channels(),
        dropped,
        missing_before,
        missing_after: log.missing_count(),
        fault_rows: labels.fault_count(),
        train_rows: plan.train.len(),
        validation_rows: plan.validation.len(),
        test_rows: plan.test.len(),
    };
    Ok((
        Prepared {
            channels: log.channel_names().to_vec(),
            timestamps: log.timestamps().to_vec(),
            scaled,
            labels: labels.flags,
            plan,
            scaler,
        },
        summary,
    ))
}

/// How items are cut from the prepared matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ItemLayout {
    Snapshot,
    Window(WindowSpec),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ItemOptions {
    pub layout: ItemLayout,
    pub validation_ratio: f64,
    pub seed: u64,
}

fn rows_of(plan: &SplitPlan, partition: Partition) -> &[usize] {
    match partition {
        Partition::Train => &plan.train,
        Partition::Val => &plan.validation,
        Partition::Test => &plan.test,
    }
}

/// Items of one partition. Windowed training and validation items are carved
/// from windows over the whole healthy pool.
pub fn partition_items(data: &Prepared, partition: Partition, opts: &ItemOptions) -> Result<ItemSet> {
    match opts.layout {
        ItemLayout::Snapshot => Ok(ItemSet::snapshots(
            &data.scaled,
            &data.labels,
            rows_of(&data.plan, partition),
            partition,
        )),
        ItemLayout::Window(spec) => {
            if partition == Partition::Test {
                let ws = windows_over_rows(&data.scaled, &data.labels, &data.plan.test, spec)?;
                return ItemSet::windows(ws, Partition::Test);
            }
            let pool: Vec<usize> = data.plan.pool().collect();
            let ws = windows_over_rows(&data.scaled, &data.labels, &pool, spec)?;
            let all = ItemSet::windows(ws, partition)?;
            let n_val = (all.len() as f64 * opts.validation_ratio + 1e-9).floor() as usize;
            let positions: Vec<usize> = (0..all.len()).collect();
            let (rest, taken) = carve(&positions, n_val, opts.seed);
            let pick = if partition == Partition::Train { rest } else { taken };
            Ok(all.select(&pick, partition))
        }
    }
}

/// Scales a fresh log with an existing scaler and cuts every row into items.
pub fn external_items(
    log: &SensorLog,
    channels: &[String],
    scaler: &ScalerParams,
    layout: ItemLayout,
) -> Result<ItemSet> {
    if log.channel_names() != channels {
        return Err(Error::validation("log channels differ from the model's channels"));
    }
    if log.n_rows() == 0 {
        return Err(Error::validation("log has no rows to score"));
    }
    let log = impute_cascade(log)?;
    let raw = Matrix::from_vec(log.n_rows(), log.n_channels(), log.to_dense()?)?;
    let scaled = scaler.apply(&raw)?;
    let rows: Vec<usize> = (0..log.n_rows()).collect();
    let labels = vec![false; log.n_rows()];
    match layout {
        ItemLayout::Snapshot => Ok(ItemSet::snapshots(&scaled, &labels, &rows, Partition::Test)),
        ItemLayout::Window(spec) => {
            ItemSet::windows(windows_over_rows(&scaled, &labels, &rows, spec)?, Partition::Test)
        }
    }
}

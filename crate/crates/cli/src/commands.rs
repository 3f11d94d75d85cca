use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDateTime;

use aewatch::dataset::{
    format_timestamp, load_fault_intervals, load_sensor_csv, parse_timestamp, write_fault_csv, write_sensor_csv,
    CsvSpec, FaultSchedule,
};
use aewatch::detector::{detect, extract_latent, fit_threshold, read_scores_csv, write_latent_csv, write_scores_csv};
use aewatch::evaluation::{confusion, metrics, MetricsReport};
use aewatch::method::{DetectionMethod, MethodRegistry};
use aewatch::models::{load_model, save_model, Model, ModelFile};
use aewatch::nn::Matrix;
use aewatch::pipeline::{external_items, partition_items, prepare, ItemLayout, ItemOptions, PrepConfig, PrepSummary, Prepared};
use aewatch::preprocess::{
    read_matrix_csv, read_split_csv, write_matrix_csv, write_split_csv, Partition, ScalerParams, WindowSpec,
};
use aewatch::synthplant::{generate, PlantConfig};
use aewatch::training::{ItemSet, TrainReport};
use aewatch::{Error, Result};

use crate::config::{RunConfig, SynthProfile};

pub const SCALED: &str = "scaled.csv";
pub const SPLIT: &str = "split.csv";
pub const LABELS: &str = "labels.csv";
pub const SCALER: &str = "scaler.json";
pub const PREP_SUMMARY: &str = "prep_summary.txt";
pub const TRAIN_REPORT: &str = "train_report.csv";
pub const SCORES: &str = "scores.csv";
pub const HOLDOUT_SCORES: &str = "holdout_scores.csv";
pub const METRICS: &str = "metrics.csv";
pub const LATENT: &str = "latent.csv";
pub const SENSOR: &str = "sensor.csv";
pub const FAULTS: &str = "faults.csv";

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn required<'a>(value: &'a Option<PathBuf>, name: &str) -> Result<&'a Path> {
    value
        .as_deref()
        .ok_or_else(|| Error::Config(format!("paths.{name} is not set")))
}

fn open_csv(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Reader::from_reader(file))
}

fn write_labels(path: &Path, data: &Prepared) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(out, "row_index,timestamp,fault").map_err(io)?;
    for (i, (t, &f)) in data.timestamps.iter().zip(&data.labels).enumerate() {
        writeln!(out, "{i},{},{}", format_timestamp(t), u8::from(f)).map_err(io)?;
    }
    out.flush().map_err(io)
}

fn read_labels(path: &Path) -> Result<(Vec<NaiveDateTime>, Vec<bool>)> {
    let mut rdr = open_csv(path)?;
    let mut times = Vec::new();
    let mut flags = Vec::new();
    for (n, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| Error::Parse {
            row: n + 2,
            message: format!("bad {what} in {}", path.display()),
        };
        if rec.get(0).and_then(|v| v.parse::<usize>().ok()) != Some(n) {
            return Err(bad("row_index"));
        }
        times.push(rec.get(1).and_then(parse_timestamp).ok_or_else(|| bad("timestamp"))?);
        flags.push(match rec.get(2) {
            Some("1") => true,
            Some("0") => false,
            _ => return Err(bad("fault flag")),
        });
    }
    Ok((times, flags))
}

/// Reloads the files written by `prepare`.
pub fn load_prepared(dir: &Path) -> Result<Prepared> {
    let (channels, scaled) = read_matrix_csv(&dir.join(SCALED))?;
    let plan = read_split_csv(&dir.join(SPLIT))?;
    let (timestamps, labels) = read_labels(&dir.join(LABELS))?;
    let scaler_path = dir.join(SCALER);
    let text = fs::read_to_string(&scaler_path).map_err(|e| Error::io(&scaler_path, e))?;
    let scaler: ScalerParams = serde_json::from_str(&text)?;
    if labels.len() != scaled.rows() || plan.n_rows() != scaled.rows() {
        return Err(Error::validation("prepared files disagree on the number of rows"));
    }
    if scaler.min.len() != channels.len() {
        return Err(Error::validation("scaler width differs from the prepared matrix"));
    }
    Ok(Prepared {
        channels,
        timestamps,
        scaled,
        labels,
        plan,
        scaler,
    })
}

pub fn cmd_prepare(cfg: &RunConfig) -> Result<PrepSummary> {
    let log = load_sensor_csv(required(&cfg.sensor_csv, "sensor_csv")?, &CsvSpec::default())?;
    let schedule = match &cfg.fault_csv {
        Some(p) => load_fault_intervals(p)?,
        None => FaultSchedule::default(),
    };
    let prep = PrepConfig {
        train_ratio: cfg.train_ratio,
        validation_ratio: cfg.validation_ratio,
        seed: cfg.seed,
    };
    let (data, summary) = prepare(&log, &schedule, &prep)?;
    ensure_dir(&cfg.out_dir)?;
    write_matrix_csv(&cfg.out(SCALED), &data.channels, &data.scaled)?;
    for (name, rows) in [
        ("train.csv", &data.plan.train),
        ("val.csv", &data.plan.validation),
        ("test.csv", &data.plan.test),
    ] {
        write_matrix_csv(&cfg.out(name), &data.channels, &data.scaled.select_rows(rows))?;
    }
    write_split_csv(&cfg.out(SPLIT), &data.plan)?;
    write_labels(&cfg.out(LABELS), &data)?;
    write_text(&cfg.out(SCALER), &(serde_json::to_string_pretty(&data.scaler)? + "\n"))?;
    write_text(&cfg.out(PREP_SUMMARY), &summary.render())?;
    Ok(summary)
}

fn item_options(cfg: &RunConfig, layout: ItemLayout) -> ItemOptions {
    ItemOptions {
        layout,
        validation_ratio: cfg.validation_ratio,
        seed: cfg.seed,
    }
}

/// Layout the saved model expects; an LSTM's window length comes from the file.
fn model_layout(method: &dyn DetectionMethod, file: &ModelFile, cfg: &RunConfig) -> ItemLayout {
    let window = WindowSpec {
        length: file.model.window().unwrap_or(cfg.window.length),
        stride: cfg.window.stride,
    };
    method.layout(window)
}

pub fn cmd_train(cfg: &RunConfig, registry: &MethodRegistry) -> Result<TrainReport> {
    let train_cfg = cfg.train_config();
    train_cfg.validate(cfg.architecture)?;
    let method = registry.resolve(cfg.architecture, cfg.loss)?;
    let data = load_prepared(&cfg.out_dir)?;
    let opts = item_options(cfg, method.layout(cfg.window));
    let train_set = partition_items(&data, Partition::Train, &opts)?;
    let val_set = partition_items(&data, Partition::Val, &opts)?;
    let trained = method.train(&train_set, &val_set, data.channels.len(), cfg.window, &train_cfg)?;
    let file = ModelFile {
        model: trained.model,
        method: method.name().to_string(),
        channels: data.channels,
        scaler: data.scaler,
        covariance: trained.covariance,
        threshold: None,
    };
    save_model(&file, &cfg.model_path())?;
    trained.report.write_csv(&cfg.out(TRAIN_REPORT))?;
    Ok(trained.report)
}

fn load_method<'r>(registry: &'r MethodRegistry, cfg: &RunConfig) -> Result<(ModelFile, &'r dyn DetectionMethod)> {
    let file = load_model(&cfg.model_path())?;
    let method = registry.get(&file.method)?;
    Ok((file, method))
}

pub fn cmd_threshold(cfg: &RunConfig, registry: &MethodRegistry) -> Result<f64> {
    aewatch::detector::check_alpha(cfg.alpha)?;
    let (mut file, method) = load_method(registry, cfg)?;
    let data = load_prepared(&cfg.out_dir)?;
    let opts = item_options(cfg, model_layout(method, &file, cfg));
    let train_set = partition_items(&data, Partition::Train, &opts)?;
    let scores = method.score(&file, &train_set)?;
    let spec = fit_threshold(&scores, cfg.alpha)?;
    let tau = spec.tau;
    file.threshold = Some(spec);
    save_model(&file, &cfg.model_path())?;
    Ok(tau)
}

/// Number of scored items and how many were flagged.
pub fn cmd_detect(cfg: &RunConfig, registry: &MethodRegistry) -> Result<(usize, usize)> {
    let (file, method) = load_method(registry, cfg)?;
    let spec = file
        .threshold
        .clone()
        .ok_or_else(|| Error::validation("model has no fitted threshold; run `threshold` first"))?;
    let layout = model_layout(method, &file, cfg);
    let (items, timestamps, out) = match &cfg.holdout_csv {
        Some(p) => {
            let log = load_sensor_csv(p, &CsvSpec::default())?;
            let items = external_items(&log, &file.channels, &file.scaler, layout)?;
            (items, log.timestamps().to_vec(), cfg.out(HOLDOUT_SCORES))
        }
        None => {
            let data = load_prepared(&cfg.out_dir)?;
            let items = partition_items(&data, Partition::Test, &item_options(cfg, layout))?;
            (items, data.timestamps, cfg.out(SCORES))
        }
    };
    if items.is_empty() {
        return Err(Error::validation("nothing to score: the item set is empty"));
    }
    let scores = method.score(&file, &items)?;
    let flags = detect(&scores, &spec)?;
    ensure_dir(&cfg.out_dir)?;
    write_scores_csv(&out, &scores, &flags, &timestamps)?;
    Ok((flags.len(), flags.iter().filter(|&&f| f).count()))
}

pub fn cmd_eval(cfg: &RunConfig, registry: &MethodRegistry) -> Result<MetricsReport> {
    let (file, method) = load_method(registry, cfg)?;
    let data = load_prepared(&cfg.out_dir)?;
    let test = partition_items(&data, Partition::Test, &item_options(cfg, model_layout(method, &file, cfg)))?;
    let rows = read_scores_csv(&cfg.out(SCORES))?;
    if rows.len() == test.len() && rows.iter().zip(&test.index).any(|(r, &i)| r.index != i) {
        return Err(Error::validation("scores file rows do not match the test items"));
    }
    let flags: Vec<bool> = rows.iter().map(|r| r.flagged).collect();
    let report = metrics(confusion(&flags, &test.labels)?);
    report.write_csv(&cfg.out(METRICS))?;
    Ok(report)
}

pub fn cmd_synth(cfg: &RunConfig) -> Result<(usize, usize)> {
    let plant = match cfg.synth_profile {
        SynthProfile::Faulty => PlantConfig::default_profile(cfg.synth_channels, cfg.synth_samples, cfg.seed),
        SynthProfile::Healthy => PlantConfig::healthy(cfg.synth_channels, cfg.synth_samples, cfg.seed),
    };
    let (log, schedule) = generate(&plant)?;
    ensure_dir(&cfg.out_dir)?;
    write_sensor_csv(&cfg.out(SENSOR), &log)?;
    write_fault_csv(&cfg.out(FAULTS), &schedule)?;
    Ok((log.n_rows(), schedule.intervals().len()))
}

fn latent_of(model: &Model, items: &Matrix) -> Result<Matrix> {
    match model {
        Model::Dense(m) => extract_latent(m, items),
        Model::Lstm(m) => extract_latent(m, items),
    }
}

pub fn cmd_export_latent(cfg: &RunConfig, registry: &MethodRegistry) -> Result<usize> {
    let (file, method) = load_method(registry, cfg)?;
    let data = load_prepared(&cfg.out_dir)?;
    let opts = item_options(cfg, model_layout(method, &file, cfg));
    let items: ItemSet = partition_items(&data, cfg.export_partition, &opts)?;
    let latent = latent_of(&file.model, &items.items)?;
    write_latent_csv(&cfg.out(LATENT), &latent, &items.index, &data.timestamps)?;
    Ok(latent.rows())
}

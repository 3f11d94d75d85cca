//! Run configuration: defaults, then an INI file, then `--section.key` flags.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use aewatch::detector::{check_alpha, DEFAULT_ALPHA};
use aewatch::models::Architecture;
use aewatch::preprocess::{Partition, WindowSpec};
use aewatch::synthplant::{DEFAULT_CHANNELS, DEFAULT_SAMPLES};
use aewatch::training::{LossKind, TrainConfig};
use aewatch::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthProfile {
    Faulty,
    Healthy,
}

/// Training fields left unset fall back to the architecture's defaults.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainOverrides {
    pub max_epochs: Option<usize>,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub es_patience: Option<usize>,
    pub plateau_patience: Option<usize>,
    pub plateau_factor: Option<f64>,
    pub warmup_epochs: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub sensor_csv: Option<PathBuf>,
    pub fault_csv: Option<PathBuf>,
    /// Healthy log scored by `detect` instead of the test partition.
    pub holdout_csv: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub out_dir: PathBuf,

    pub architecture: Architecture,
    pub loss: LossKind,
    pub alpha: f64,
    pub window: WindowSpec,
    pub train_ratio: f64,
    pub validation_ratio: f64,
    pub seed: u64,

    pub train: TrainOverrides,

    pub synth_channels: usize,
    pub synth_samples: usize,
    pub synth_profile: SynthProfile,

    pub export_partition: Partition,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            sensor_csv: None,
            fault_csv: None,
            holdout_csv: None,
            model: None,
            out_dir: PathBuf::from("out"),
            architecture: Architecture::DenseAe,
            loss: LossKind::Mse,
            alpha: DEFAULT_ALPHA,
            window: WindowSpec::default(),
            train_ratio: 0.9,
            validation_ratio: 0.2,
            seed: 0,
            train: TrainOverrides::default(),
            synth_channels: DEFAULT_CHANNELS,
            synth_samples: DEFAULT_SAMPLES,
            synth_profile: SynthProfile::Faulty,
            export_partition: Partition::Test,
        }
    }
}

fn parse<T: FromStr>(section: &str, key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{section}.{key}: cannot parse {value:?}")))
}

fn path(value: &str) -> Option<PathBuf> {
    let v = value.trim();
    (!v.is_empty()).then(|| PathBuf::from(v))
}

impl RunConfig {
    /// Sets one `section.key` value.
    pub fn set(&mut self, section: &str, key: &str, value: &str) -> Result<()> {
        let p = |v: &str| parse::<usize>(section, key, v);
        match (section, key) {
            ("paths", "sensor_csv") => self.sensor_csv = path(value),
            ("paths", "fault_csv") => self.fault_csv = path(value),
            ("paths", "holdout_csv") => self.holdout_csv = path(value),
            ("paths", "model") => self.model = path(value),
            ("paths", "out_dir") => {
                self.out_dir = path(value).ok_or_else(|| Error::Config("paths.out_dir is empty".into()))?
            }
            ("pipeline", "architecture") => {
                self.architecture = Architecture::parse(value.trim())
                    .ok_or_else(|| Error::Config(format!("unknown architecture {value:?}")))?
            }
            ("pipeline", "loss") => {
                self.loss = LossKind::parse(value.trim()).ok_or_else(|| Error::Config(format!("unknown loss {value:?}")))?
            }
            ("pipeline", "alpha") => self.alpha = parse(section, key, value)?,
            ("pipeline", "window_length") => self.window.length = p(value)?,
            ("pipeline", "window_stride") => self.window.stride = p(value)?,
            ("pipeline", "train_ratio") => self.train_ratio = parse(section, key, value)?,
            ("pipeline", "validation_ratio") => self.validation_ratio = parse(section, key, value)?,
            ("pipeline", "seed") => self.seed = parse(section, key, value)?,
            ("train", "max_epochs") => self.train.max_epochs = Some(p(value)?),
            ("train", "learning_rate") => self.train.learning_rate = Some(parse(section, key, value)?),
            ("train", "batch_size") => self.train.batch_size = Some(p(value)?),
            ("train", "es_patience") => self.train.es_patience = Some(p(value)?),
            ("train", "plateau_patience") => self.train.plateau_patience = Some(p(value)?),
            ("train", "plateau_factor") => self.train.plateau_factor = Some(parse(section, key, value)?),
            ("train", "warmup_epochs") => self.train.warmup_epochs = Some(p(value)?),
            ("synth", "channels") => self.synth_channels = p(value)?,
            ("synth", "samples") => self.synth_samples = p(value)?,
            ("synth", "profile") => {
                self.synth_profile = match value.trim() {
                    "faulty" | "default" => SynthProfile::Faulty,
                    "healthy" => SynthProfile::Healthy,
                    other => return Err(Error::Config(format!("unknown synth profile {other:?}"))),
                }
            }
            ("export", "partition") => {
                self.export_partition = Partition::parse(value.trim())
                    .ok_or_else(|| Error::Config(format!("unknown partition {value:?}")))?
            }
            _ => return Err(Error::Config(format!("unknown setting {section}.{key}"))),
        }
        Ok(())
    }

    /// Applies an INI document: `[section]` headers, `key = value` lines, `#` or `;` comments.
    pub fn apply_ini(&mut self, text: &str) -> Result<()> {
        let mut section: Option<String> = None;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = Some(name.trim().to_string());
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("config line {}: expected key = value", n + 1)))?;
            let section = section
                .as_deref()
                .ok_or_else(|| Error::Config(format!("config line {}: key outside a section", n + 1)))?;
            self.set(section, key.trim(), value)?;
        }
        Ok(())
    }

    pub fn load_ini(&mut self, file: &Path) -> Result<()> {
        let text = fs::read_to_string(file).map_err(|e| Error::io(file, e))?;
        self.apply_ini(&text)
    }

    /// Applies `section.key` overrides in order.
    pub fn apply_overrides(&mut self, overrides: &BTreeMap<String, String>) -> Result<()> {
        for (name, value) in overrides {
            let (section, key) = name
                .split_once('.')
                .ok_or_else(|| Error::Config(format!("override {name:?} is not section.key")))?;
            self.set(section, key, value)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        WindowSpec::new(self.window.length, self.window.stride)?;
        for (name, r) in [("train_ratio", self.train_ratio), ("validation_ratio", self.validation_ratio)] {
            if !(r > 0.0 && r < 1.0) {
                return Err(Error::Config(format!("pipeline.{name} must lie in (0, 1), got {r}")));
            }
        }
        self.train_config().validate(self.architecture)
    }

    pub fn train_config(&self) -> TrainConfig {
        let base = TrainConfig::for_architecture(self.architecture);
        let t = &self.train;
        TrainConfig {
            max_epochs: t.max_epochs.unwrap_or(base.max_epochs),
            learning_rate: t.learning_rate.unwrap_or(base.learning_rate),
            batch_size: t.batch_size.unwrap_or(base.batch_size),
            es_patience: t.es_patience.unwrap_or(base.es_patience),
            plateau_patience: t.plateau_patience.unwrap_or(base.plateau_patience),
            plateau_factor: t.plateau_factor.unwrap_or(base.plateau_factor),
            loss: self.loss,
            warmup_epochs: t.warmup_epochs.unwrap_or(base.warmup_epochs),
            seed: self.seed,
        }
    }

    pub fn model_path(&self) -> PathBuf {
        self.model.clone().unwrap_or_else(|| self.out_dir.join("model.json"))
    }

    pub fn out(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }
}

/// Splits `--section.key value` and `--section.key=value` tokens out of an argument list.
pub fn extract_overrides(args: Vec<String>) -> Result<(Vec<String>, BTreeMap<String, String>)> {
    let mut rest = Vec::with_capacity(args.len());
    let mut overrides = BTreeMap::new();
    let mut it = args.into_iter();
    while let Some(arg) = it.next() {
        let Some(flag) = arg.strip_prefix("--") else {
            rest.push(arg);
            continue;
        };
        let (name, inline) = match flag.split_once('=') {
            Some((n, v)) => (n.to_string(), Some(v.to_string())),
            None => (flag.to_string(), None),
        };
        if !name.contains('.') {
            rest.push(arg);
            continue;
        }
        let value = match inline {
            Some(v) => v,
            None => it
                .next()
                .ok_or_else(|| Error::Config(format!("--{name} needs a value")))?,
        };
        overrides.insert(name, value);
    }
    Ok((rest, overrides))
}

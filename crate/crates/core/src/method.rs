//! Detection methods behind one trait, looked up by name.

use std::collections::BTreeMap;

use crate::detector::{score_mahalanobis, score_pointwise_mse, score_window_mse, ScoreKind, ScoreSeries};
use crate::error::{Error, Result};
use crate::models::{Architecture, DenseAE, LstmAE, Model, ModelFile};
use crate::pipeline::ItemLayout;
use crate::preprocess::WindowSpec;
use crate::training::{train, CovarianceModel, ItemSet, LossKind, TrainConfig, TrainReport};

#[derive(Debug, Clone)]
pub struct Trained {
    pub model: Model,
    pub covariance: Option<CovarianceModel>,
    pub report: TrainReport,
}

pub trait DetectionMethod: Send + Sync {
    /// Registry key, `<architecture>.<loss>`.
    fn name(&self) -> &'static str;

    fn architecture(&self) -> Architecture;

    fn loss(&self) -> LossKind;

    fn score_kind(&self) -> ScoreKind;

    fn layout(&self, window: WindowSpec) -> ItemLayout;

    fn train(&self, train_set: &ItemSet, val_set: &ItemSet, features: usize, window: WindowSpec, cfg: &TrainConfig) -> Result<Trained>;

    fn score(&self, file: &ModelFile, items: &ItemSet) -> Result<ScoreSeries>;
}

fn dense_of(file: &ModelFile) -> Result<&DenseAE> {
    match &file.model {
        Model::Dense(m) => Ok(m),
        Model::Lstm(_) => Err(Error::Config(format!(
            "method {} needs a dense_ae model",
            file.method
        ))),
    }
}

fn train_dense(train_set: &ItemSet, val_set: &ItemSet, features: usize, cfg: &TrainConfig) -> Result<Trained> {
    let out = train(DenseAE::new(features, cfg.seed), train_set, val_set, cfg)?;
    Ok(Trained {
        model: Model::Dense(out.model),
        covariance: out.covariance,
        report: out.report,
    })
}

pub struct DenseMse;

impl DetectionMethod for DenseMse {
    fn name(&self) -> &'static str {
        "dense_ae.mse"
    }

    fn architecture(&self) -> Architecture {
        Architecture::DenseAe
    }

    fn loss(&self) -> LossKind {
        LossKind::Mse
    }

    fn score_kind(&self) -> ScoreKind {
        ScoreKind::MsePoint
    }

    fn layout(&self, _window: WindowSpec) -> ItemLayout {
        ItemLayout::Snapshot
    }

    fn train(&self, train_set: &ItemSet, val_set: &ItemSet, features: usize, _window: WindowSpec, cfg: &TrainConfig) -> Result<Trained> {
        let cfg = TrainConfig {
            loss: LossKind::Mse,
            ..cfg.clone()
        };
        train_dense(train_set, val_set, features, &cfg)
    }

    fn score(&self, file: &ModelFile, items: &ItemSet) -> Result<ScoreSeries> {
        score_pointwise_mse(dense_of(file)?, items)
    }
}

pub struct DenseMahalanobis;

impl DetectionMethod for DenseMahalanobis {
    fn name(&self) -> &'static str {
        "dense_ae.mahalanobis"
    }

    fn architecture(&self) -> Architecture {
        Architecture::DenseAe
    }

    fn loss(&self) -> LossKind {
        LossKind::Mahalanobis
    }

    fn score_kind(&self) -> ScoreKind {
        ScoreKind::Mahalanobis
    }

    fn layout(&self, _window: WindowSpec) -> ItemLayout {
        ItemLayout::Snapshot
    }

    fn train(&self, train_set: &ItemSet, val_set: &ItemSet, features: usize, _window: WindowSpec, cfg: &TrainConfig) -> Result<Trained> {
        let cfg = TrainConfig {
            loss: LossKind::Mahalanobis,
            ..cfg.clone()
        };
        let out = train_dense(train_set, val_set, features, &cfg)?;
        if out.covariance.is_none() && cfg.max_epochs > 0 {
            return Err(Error::numeric("training produced no residual covariance"));
        }
        Ok(out)
    }

    fn score(&self, file: &ModelFile, items: &ItemSet) -> Result<ScoreSeries> {
        let cov = file
            .covariance
            .as_ref()
            .ok_or_else(|| Error::validation("model file carries no residual covariance"))?;
        score_mahalanobis(dense_of(file)?, cov, items)
    }
}

pub struct LstmMse;

impl DetectionMethod for LstmMse {
    fn name(&self) -> &'static str {
        "lstm_ae.mse"
    }

    fn architecture(&self) -> Architecture {
        Architecture::LstmAe
    }

    fn loss(&self) -> LossKind {
        LossKind::Mse
    }

    fn score_kind(&self) -> ScoreKind {
        ScoreKind::MseWindow
    }

    fn layout(&self, window: WindowSpec) -> ItemLayout {
        ItemLayout::Window(window)
    }

    fn train(&self, train_set: &ItemSet, val_set: &ItemSet, features: usize, window: WindowSpec, cfg: &TrainConfig) -> Result<Trained> {
        let cfg = TrainConfig {
            loss: LossKind::Mse,
            ..cfg.clone()
        };
        let out = train(LstmAE::new(features, window.length, cfg.seed), train_set, val_set, &cfg)?;
        Ok(Trained {
            model: Model::Lstm(out.model),
            covariance: None,
            report: out.report,
        })
    }

    fn score(&self, file: &ModelFile, items: &ItemSet) -> Result<ScoreSeries> {
        match &file.model {
            Model::Lstm(m) => score_window_mse(m, items),
            Model::Dense(_) => Err(Error::Config("lstm_ae.mse needs an lstm_ae model".into())),
        }
    }
}

pub fn method_key(architecture: Architecture, loss: LossKind) -> String {
    format!("{}.{}", architecture.as_str(), loss.as_str())
}

pub struct MethodRegistry {
    methods: BTreeMap<&'static str, Box<dyn DetectionMethod>>,
}

impl MethodRegistry {
    pub fn empty() -> Self {
        Self {
            methods: BTreeMap::new(),
        }
    }

    pub fn with_defaults() -> Self {
        let mut r = Self::empty();
        r.register(Box::new(DenseMse));
        r.register(Box::new(DenseMahalanobis));
        r.register(Box::new(LstmMse));
        r
    }

    /// Replaces any method already registered under the same name.
    pub fn register(&mut self, method: Box<dyn DetectionMethod>) {
        self.methods.insert(method.name(), method);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.methods.keys().copied().collect()
    }

    pub fn get(&self, name: &str) -> Result<&dyn DetectionMethod> {
        self.methods.get(name).map(|m| m.as_ref()).ok_or_else(|| {
            Error::Config(format!(
                "unknown detection method `{name}` (available: {})",
                self.names().join(", ")
            ))
        })
    }

    pub fn resolve(&self, architecture: Architecture, loss: LossKind) -> Result<&dyn DetectionMethod> {
        self.get(&method_key(architecture, loss))
    }
}

impl Default for MethodRegistry {
    fn default() -> Self {
        Self::with_defaults()
    }
}

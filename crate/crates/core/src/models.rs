//! The dense and LSTM autoencoders, and the JSON model file that carries
//! them together with the scaler, covariance and fitted threshold.
//!
//! Both architectures consume *items* as rows of a matrix: a snapshot is a
//! row of `d` values, a window is a row of `T·d` values (time-major).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::detector::ThresholdSpec;
use crate::error::{Error, Result};
use crate::nn::init::seeded_rng;
use crate::nn::{
    repeat_vector, repeat_vector_backward, Activation, DenseCache, DenseLayer, LstmCache,
    LstmLayer, Matrix, Sequence, TimeDistributed,
};
use crate::preprocess::ScalerParams;
use crate::training::CovarianceModel;

pub const LATENT_DIM: usize = 8;
pub const DENSE_HIDDEN: [usize; 5] = [36, 12, LATENT_DIM, 12, 36];
pub const LSTM_ENCODER_UNITS: [usize; 2] = [16, LATENT_DIM];
pub const SCHEMA_VERSION: u32 = 1;

/// Shared surface the training loop and scorers need from an autoencoder.
pub trait Autoencoder {
    type Cache;

    /// Values per item (`d` or `T·d`).
    fn item_len(&self) -> usize;

    /// Reconstruction and latent code for a batch of items.
    fn encode_decode(&self, x: &Matrix) -> Result<(Matrix, Matrix)>;

    fn forward_train(&self, x: &Matrix) -> Result<(Matrix, Self::Cache)>;

    /// Parameter gradients, in [`tensors`](Self::tensors) order, for a gradient w.r.t. the reconstruction.
    fn backward(&self, grad_recon: &Matrix, cache: &Self::Cache) -> Result<Vec<Vec<f64>>>;

    fn tensors(&self) -> Vec<&[f64]>;

    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}

fn check_items(x: &Matrix, expected: usize) -> Result<()> {
    if x.cols() != expected {
        return Err(Error::shape(format!(
            "model expects items of {expected} values, got {}",
            x.cols()
        )));
    }
    Ok(())
}

/// `d → 36 → 12 → 8 → 12 → 36 → d`, tanh everywhere.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseAE {
    layers: Vec<DenseLayer>,
    features: usize,
}

impl DenseAE {
    pub fn new(features: usize, seed: u64) -> Self {
        let mut rng = seeded_rng(seed);
        let widths = Self::widths(features);
        let layers = widths
            .windows(2)
            .map(|w| DenseLayer::init(w[0], w[1], Activation::Tanh, &mut rng))
            .collect();
        Self { layers, features }
    }

    pub fn zeros(features: usize) -> Self {
        let widths = Self::widths(features);
        let layers = widths
            .windows(2)
            .map(|w| DenseLayer::zeros(w[0], w[1], Activation::Tanh))
            .collect();
        Self { layers, features }
    }

    fn widths(features: usize) -> Vec<usize> {
        let mut w = vec![features];
        w.extend(DENSE_HIDDEN);
        w.push(features);
        w
    }

    /// Validates that the six layers chain `d → 36 → 12 → 8 → 12 → 36 → d`.
    pub fn from_layers(layers: Vec<DenseLayer>) -> Result<Self> {
        let features = layers.first().map_or(0, DenseLayer::inputs);
        let widths = Self::widths(features);
        if layers.len() != widths.len() - 1 {
            return Err(Error::shape(format!(
                "dense autoencoder needs {} layers, got {}",
                widths.len() - 1,
                layers.len()
            )));
        }
        for (k, (layer, w)) in layers.iter().zip(widths.windows(2)).enumerate() {
            if layer.inputs() != w[0] || layer.outputs() != w[1] || layer.bias.len() != w[1] {
                return Err(Error::shape(format!(
                    "dense layer {k} is {}→{}, expected {}→{}",
                    layer.inputs(),
                    layer.outputs(),
                    w[0],
                    w[1]
                )));
            }
        }
        Ok(Self { layers, features })
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn encoder(&self) -> &[DenseLayer] {
        &self.layers[..3]
    }

    pub fn decoder(&self) -> &[DenseLayer] {
        &self.layers[3..]
    }

    pub fn encode(&self, x: &Matrix) -> Result<Matrix> {
        check_items(x, self.features)?;
        self.encoder().iter().try_fold(x.clone(), |h, l| l.forward(&h))
    }

    pub fn decode(&self, z: &Matrix) -> Result<Matrix> {
        self.decoder().iter().try_fold(z.clone(), |h, l| l.forward(&h))
    }
}

impl Autoencoder for DenseAE {
    type Cache = Vec<DenseCache>;

    fn item_len(&self) -> usize {
        self.features
    }

    fn encode_decode(&self, x: &Matrix) -> Result<(Matrix, Matrix)> {
        let z = self.encode(x)?;
        let recon = self.decode(&z)?;
        Ok((recon, z))
    }

    fn forward_train(&self, x: &Matrix) -> Result<(Matrix, Self::Cache)> {
        check_items(x, self.features)?;
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for layer in &self.layers {
            let (y, c) = layer.forward_cached(&h)?;
            caches.push(c);
            h = y;
        }
        Ok((h, caches))
    }

    fn backward(&self, grad_recon: &Matrix, cache: &Self::Cache) -> Result<Vec<Vec<f64>>> {
        let mut grads = Vec::with_capacity(2 * self.layers.len());
        let mut g = grad_recon.clone();
        for (layer, c) in self.layers.iter().zip(cache).rev() {
            let (gi, gp) = layer.backward(&g, c)?;
            let [w, b] = gp.into_tensors();
            grads.push(b);
            grads.push(w);
            g = gi;
        }
        grads.reverse();
        Ok(grads)
    }

    fn tensors(&self) -> Vec<&[f64]> {
        self.layers.iter().flat_map(|l| l.tensors()).collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers.iter_mut().flat_map(|l| l.tensors_mut()).collect()
    }
}

/// `LSTM(16) → LSTM(8) → RepeatVector(T) → LSTM(8) → LSTM(16) → TimeDistributed(Dense(d, tanh))`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmAE {
    pub encoder_first: LstmLayer,
    pub encoder_last: LstmLayer,
    pub decoder_first: LstmLayer,
    pub decoder_last: LstmLayer,
    pub head: TimeDistributed,
    steps: usize,
    features: usize,
}

pub struct LstmAECache {
    enc1: LstmCache,
    enc2: LstmCache,
    dec1: LstmCache,
    dec2: LstmCache,
    head: crate::nn::sequence::TimeDistributedCache,
}

impl LstmAE {
    pub fn new(features: usize, steps: usize, seed: u64) -> Self {
        let mut rng = seeded_rng(seed);
        let [u1, u2] = LSTM_ENCODER_UNITS;
        Self {
            encoder_first: LstmLayer::init(features, u1, true, &mut rng),
            encoder_last: LstmLayer::init(u1, u2, false, &mut rng),
            decoder_first: LstmLayer::init(u2, u2, true, &mut rng),
            decoder_last: LstmLayer::init(u2, u1, true, &mut rng),
            head: TimeDistributed::new(DenseLayer::init(u1, features, Activation::Tanh, &mut rng)),
            steps,
            features,
        }
    }

    pub fn zeros(features: usize, steps: usize) -> Self {
        let [u1, u2] = LSTM_ENCODER_UNITS;
        Self {
            encoder_first: LstmLayer::zeros(features, u1, true),
            encoder_last: LstmLayer::zeros(u1, u2, false),
            decoder_first: LstmLayer::zeros(u2, u2, true),
            decoder_last: LstmLayer::zeros(u2, u1, true),
            head: TimeDistributed::new(DenseLayer::zeros(u1, features, Activation::Tanh)),
            steps,
            features,
        }
    }

    pub fn from_parts(
        layers: [LstmLayer; 4],
        head: DenseLayer,
        steps: usize,
    ) -> Result<Self> {
        let [enc1, enc2, dec1, dec2] = layers;
        let features = enc1.inputs();
        let [u1, u2] = LSTM_ENCODER_UNITS;
        let expect = [
            (&enc1, features, u1, true),
            (&enc2, u1, u2, false),
            (&dec1, u2, u2, true),
            (&dec2, u2, u1, true),
        ];
        for (k, (layer, inputs, units, seq)) in expect.into_iter().enumerate() {
            layer.validate()?;
            if layer.inputs() != inputs || layer.units != units || layer.return_sequences != seq {
                return Err(Error::shape(format!(
                    "lstm layer {k} is {}→{} (sequences={}), expected {inputs}→{units} (sequences={seq})",
                    layer.inputs(),
                    layer.units,
                    layer.return_sequences
                )));
            }
        }
        if head.inputs() != u1 || head.outputs() != features || head.bias.len() != features {
            return Err(Error::shape("time-distributed head does not map 16 units to d"));
        }
        if steps == 0 {
            return Err(Error::shape("window length must be positive"));
        }
        Ok(Self {
            encoder_first: enc1,
            encoder_last: enc2,
            decoder_first: dec1,
            decoder_last: dec2,
            head: TimeDistributed::new(head),
            steps,
            features,
        })
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    fn to_sequence(&self, x: &Matrix) -> Result<Sequence> {
        check_items(x, self.steps * self.features)?;
        let items: Vec<&[f64]> = (0..x.rows()).map(|r| x.row(r)).collect();
        Sequence::from_items(&items, self.steps, self.features)
    }

    fn flatten(seq: &Sequence) -> Matrix {
        let batch = seq.batch();
        let len = seq.len() * seq.width();
        let mut data = Vec::with_capacity(batch * len);
        for b in 0..batch {
            data.extend(seq.item(b));
        }
        Matrix::from_vec(batch, len, data).expect("sized by construction")
    }

    /// Encoder: the final hidden state of the second LSTM.
    pub fn encode(&self, x: &Matrix) -> Result<Matrix> {
        let seq = self.to_sequence(x)?;
        let h = self.encoder_first.forward(&seq)?;
        let z = self.encoder_last.forward(&h)?;
        Ok(z.last().cloned().expect("one output step"))
    }

    pub fn decode(&self, z: &Matrix) -> Result<Matrix> {
        let rep = repeat_vector(z, self.steps);
        let h = self.decoder_first.forward(&rep)?;
        let h = self.decoder_last.forward(&h)?;
        Ok(Self::flatten(&self.head.forward(&h)?))
    }
}

impl Autoencoder for LstmAE {
    type Cache = LstmAECache;

    fn item_len(&self) -> usize {
        self.steps * self.features
    }

    fn encode_decode(&self, x: &Matrix) -> Result<(Matrix, Matrix)> {
        let z = self.encode(x)?;
        let recon = self.decode(&z)?;
        Ok((recon, z))
    }

    fn forward_train(&self, x: &Matrix) -> Result<(Matrix, Self::Cache)> {
        let seq = self.to_sequence(x)?;
        let (h1, enc1) = self.encoder_first.forward_cached(&seq)?;
        let (z, enc2) = self.encoder_last.forward_cached(&h1)?;
        let rep = repeat_vector(z.last().expect("one output step"), self.steps);
        let (d1, dec1) = self.decoder_first.forward_cached(&rep)?;
        let (d2, dec2) = self.decoder_last.forward_cached(&d1)?;
        let (out, head) = self.head.forward_cached(&d2)?;
        let cache = LstmAECache {
            enc1,
            enc2,
            dec1,
            dec2,
            head,
        };
        Ok((Self::flatten(&out), cache))
    }

    fn backward(&self, grad_recon: &Matrix, cache: &Self::Cache) -> Result<Vec<Vec<f64>>> {
        let g = self.to_sequence(grad_recon)?;
        let (g, head) = self.head.backward(&g, &cache.head)?;
        let (g, dec2) = self.decoder_last.backward(&g, &cache.dec2)?;
        let (g, dec1) = self.decoder_first.backward(&g, &cache.dec1)?;
        let gz = Sequence::new(vec![repeat_vector_backward(&g)?])?;
        let (g, enc2) = self.encoder_last.backward(&gz, &cache.enc2)?;
        let (_, enc1) = self.encoder_first.backward(&g, &cache.enc1)?;
        let mut grads = Vec::with_capacity(50);
        for lg in [enc1, enc2, dec1, dec2] {
            grads.extend(lg.into_tensors());
        }
        grads.extend(head.into_tensors());
        Ok(grads)
    }

    fn tensors(&self) -> Vec<&[f64]> {
        let mut t = Vec::with_capacity(50);
        for l in [
            &self.encoder_first,
            &self.encoder_last,
            &self.decoder_first,
            &self.decoder_last,
        ] {
            t.extend(l.tensors());
        }
        t.extend(self.head.layer.tensors());
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut t = Vec::with_capacity(50);
        t.extend(self.encoder_first.tensors_mut());
        t.extend(self.encoder_last.tensors_mut());
        t.extend(self.decoder_first.tensors_mut());
        t.extend(self.decoder_last.tensors_mut());
        t.extend(self.head.layer.tensors_mut());
        t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    DenseAe,
    LstmAe,
}

impl Architecture {
    pub fn as_str(self) -> &'static str {
        match self {
            Architecture::DenseAe => "dense_ae",
            Architecture::LstmAe => "lstm_ae",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "dense_ae" | "dense" => Some(Architecture::DenseAe),
            "lstm_ae" | "lstm" => Some(Architecture::LstmAe),
            _ => None,
        }
    }
}

/// A trained network of either architecture.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Dense(DenseAE),
    Lstm(LstmAE),
}

impl Model {
    pub fn architecture(&self) -> Architecture {
        match self {
            Model::Dense(_) => Architecture::DenseAe,
            Model::Lstm(_) => Architecture::LstmAe,
        }
    }

    pub fn features(&self) -> usize {
        match self {
            Model::Dense(m) => m.features(),
            Model::Lstm(m) => m.features(),
        }
    }

    pub fn window(&self) -> Option<usize> {
        match self {
            Model::Dense(_) => None,
            Model::Lstm(m) => Some(m.steps()),
        }
    }

    pub fn item_len(&self) -> usize {
        match self {
            Model::Dense(m) => m.item_len(),
            Model::Lstm(m) => m.item_len(),
        }
    }

    pub fn encode_decode(&self, x: &Matrix) -> Result<(Matrix, Matrix)> {
        match self {
            Model::Dense(m) => m.encode_decode(x),
            Model::Lstm(m) => m.encode_decode(x),
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Model::Dense(m) => m.param_count(),
            Model::Lstm(m) => m.param_count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum LayerRecord {
    Dense(DenseLayer),
    Lstm(LstmLayer),
    TimeDistributed(DenseLayer),
}

/// Everything needed to score new data: network, scaler, and optional covariance and threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub model: Model,
    /// Registry name of the detection method that produced the model.
    pub method: String,
    pub channels: Vec<String>,
    pub scaler: ScalerParams,
    pub covariance: Option<CovarianceModel>,
    pub threshold: Option<ThresholdSpec>,
}

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    schema_version: u32,
    architecture: Architecture,
    method: String,
    d: usize,
    #[serde(rename = "T", default, skip_serializing_if = "Option::is_none")]
    window: Option<usize>,
    channels: Vec<String>,
    layers: Vec<LayerRecord>,
    scaler: ScalerParams,
    #[serde(default)]
    threshold: Option<ThresholdSpec>,
    #[serde(default)]
    covariance: Option<CovarianceModel>,
}

impl ModelFile {
    fn to_document(&self) -> ModelDocument {
        let layers = match &self.model {
            Model::Dense(m) => m.layers().iter().cloned().map(LayerRecord::Dense).collect(),
            Model::Lstm(m) => vec![
                LayerRecord::Lstm(m.encoder_first.clone()),
                LayerRecord::Lstm(m.encoder_last.clone()),
                LayerRecord::Lstm(m.decoder_first.clone()),
                LayerRecord::Lstm(m.decoder_last.clone()),
                LayerRecord::TimeDistributed(m.head.layer.clone()),
            ],
        };
        ModelDocument {
            schema_version: SCHEMA_VERSION,
            architecture: self.model.architecture(),
            method: self.method.clone(),
            d: self.model.features(),
            window: self.model.window(),
            channels: self.channels.clone(),
            layers,
            scaler: self.scaler.clone(),
            threshold: self.threshold.clone(),
            covariance: self.covariance.clone(),
        }
    }

    fn from_document(doc: ModelDocument) -> Result<Self> {
        let model = match doc.architecture {
            Architecture::DenseAe => {
                let layers = doc
                    .layers
                    .into_iter()
                    .map(|l| match l {
                        LayerRecord::Dense(d) => Ok(d),
                        _ => Err(Error::shape("dense_ae file contains a non-dense layer")),
                    })
                    .collect::<Result<Vec<_>>>()?;
                Model::Dense(DenseAE::from_layers(layers)?)
            }
            Architecture::LstmAe => {
                let window = doc
                    .window
                    .ok_or_else(|| Error::shape("lstm_ae file lacks T"))?;
                let mut lstm = Vec::new();
                let mut head = None;
                for l in doc.layers {
                    match l {
                        LayerRecord::Lstm(x) if head.is_none() => lstm.push(x),
                        LayerRecord::TimeDistributed(x) if head.is_none() => head = Some(x),
                        _ => return Err(Error::shape("unexpected layer order in lstm_ae file")),
                    }
                }
                let layers: [LstmLayer; 4] = lstm
                    .try_into()
                    .map_err(|_| Error::shape("lstm_ae needs exactly four LSTM layers"))?;
                let head = head.ok_or_else(|| Error::shape("lstm_ae file lacks its output head"))?;
                Model::Lstm(LstmAE::from_parts(layers, head, window)?)
            }
        };
        let d = model.features();
        if doc.d != d {
            return Err(Error::shape(format!("file declares d={} but layers use {d}", doc.d)));
        }
        if doc.scaler.min.len() != d || doc.scaler.max.len() != d {
            return Err(Error::shape("scaler width differs from d"));
        }
        if !doc.channels.is_empty() && doc.channels.len() != d {
            return Err(Error::shape("channel list length differs from d"));
        }
        if let Some(cov) = &doc.covariance {
            cov.check_dim(d)?;
        }
        Ok(Self {
            model,
            method: doc.method,
            channels: doc.channels,
            scaler: doc.scaler,
            covariance: doc.covariance,
            threshold: doc.threshold,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let version = value
            .get("schema_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| Error::validation("model file lacks schema_version"))?;
        if version != u64::from(SCHEMA_VERSION) {
            return Err(Error::Version {
                found: u32::try_from(version).unwrap_or(u32::MAX),
                expected: SCHEMA_VERSION,
            });
        }
        let doc: ModelDocument = serde_json::from_value(value)?;
        Self::from_document(doc)
    }
}

pub fn save_model(file: &ModelFile, path: &Path) -> Result<()> {
    let mut text = file.to_json()?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<ModelFile> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ModelFile::from_json(&text)
}

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::init::glorot_uniform;
use super::{Activation, Matrix};
use crate::error::{Error, Result};

/// Fully connected layer `y = act(x·Wᵀ + b)`, with `W` stored out×in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

/// Forward-pass values needed by [`DenseLayer::backward`].
#[derive(Debug, Clone)]
pub struct DenseCache {
    input: Matrix,
    output: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrads {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    pub fn new(weights: Matrix, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if bias.len() != weights.rows() {
            return Err(Error::shape(format!(
                "bias length {} for {} outputs",
                bias.len(),
                weights.rows()
            )));
        }
        Ok(Self {
            weights,
            bias,
            activation,
        })
    }

    pub fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Self {
        Self {
            weights: Matrix::zeros(outputs, inputs),
            bias: vec![0.0; outputs],
            activation,
        }
    }

    pub fn init<R: Rng>(inputs: usize, outputs: usize, activation: Activation, rng: &mut R) -> Self {
        Self {
            weights: glorot_uniform(outputs, inputs, inputs, outputs, rng),
            bias: vec![0.0; outputs],
            activation,
        }
    }

    pub fn inputs(&self) -> usize {
        self.weights.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.rows()
    }

    pub fn param_count(&self) -> usize {
        self.weights.data().len() + self.bias.len()
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.inputs() {
            return Err(Error::shape(format!(
                "dense layer expects {} inputs, got {}",
                self.inputs(),
                x.cols()
            )));
        }
        let mut y = x.matmul_t(&self.weights)?;
        y.add_row_vector(&self.bias)?;
        let act = self.activation;
        y.data_mut().iter_mut().for_each(|v| *v = act.apply(*v));
        Ok(y)
    }

    pub fn forward_cached(&self, x: &Matrix) -> Result<(Matrix, DenseCache)> {
        let y = self.forward(x)?;
        let cache = DenseCache {
            input: x.clone(),
            output: y.clone(),
        };
        Ok((y, cache))
    }

    /// Returns `(grad_in, grads)` for a gradient of the loss w.r.t. the layer output.
    pub fn backward(&self, grad_out: &Matrix, cache: &DenseCache) -> Result<(Matrix, DenseGrads)> {
        if grad_out.shape() != cache.output.shape() {
            return Err(Error::shape(format!(
                "dense backward got {}x{} gradient for {}x{} output",
                grad_out.rows(),
                grad_out.cols(),
                cache.output.rows(),
                cache.output.cols()
            )));
        }
        let act = self.activation;
        let mut grad_pre = grad_out.clone();
        for (g, &y) in grad_pre.data_mut().iter_mut().zip(cache.output.data()) {
            *g *= act.derivative_from_output(y);
        }
        let weights = grad_pre.t_matmul(&cache.input)?;
        let bias = grad_pre.sum_rows();
        let grad_in = grad_pre.matmul(&self.weights)?;
        Ok((grad_in, DenseGrads { weights, bias }))
    }

    pub(crate) fn tensors(&self) -> [&[f64]; 2] {
        [self.weights.data(), &self.bias]
    }

    pub(crate) fn tensors_mut(&mut self) -> [&mut [f64]; 2] {
        [self.weights.data_mut(), &mut self.bias]
    }
}

impl DenseGrads {
    pub(crate) fn into_tensors(self) -> [Vec<f64>; 2] {
        [self.weights.into_vec(), self.bias]
    }
}

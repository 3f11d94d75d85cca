//! Batched sequences plus the RepeatVector and TimeDistributed(Dense) layers.

use serde::{Deserialize, Serialize};

use super::{DenseCache, DenseGrads, DenseLayer, Matrix};
use crate::error::{Error, Result};

/// A batch×T×k tensor stored as `T` matrices of shape batch×k.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    steps: Vec<Matrix>,
}

impl Sequence {
    pub fn new(steps: Vec<Matrix>) -> Result<Self> {
        if let Some(first) = steps.first() {
            if steps.iter().any(|m| m.shape() != first.shape()) {
                return Err(Error::shape("sequence steps differ in shape"));
            }
        }
        Ok(Self { steps })
    }

    pub fn zeros(batch: usize, len: usize, width: usize) -> Self {
        Self {
            steps: vec![Matrix::zeros(batch, width); len],
        }
    }

    /// Builds a batch from item-major blocks, each `len × width` row-major.
    pub fn from_items(items: &[&[f64]], len: usize, width: usize) -> Result<Self> {
        let mut steps = vec![Matrix::zeros(items.len(), width); len];
        for (b, item) in items.iter().enumerate() {
            if item.len() != len * width {
                return Err(Error::shape(format!(
                    "item of {} values, expected {len}x{width}",
                    item.len()
                )));
            }
            for (t, step) in steps.iter_mut().enumerate() {
                step.row_mut(b)
                    .copy_from_slice(&item[t * width..(t + 1) * width]);
            }
        }
        Ok(Self { steps })
    }

    /// Item `b` flattened to `len × width` row-major.
    pub fn item(&self, b: usize) -> Vec<f64> {
        self.steps.iter().flat_map(|m| m.row(b).iter().copied()).collect()
    }

    pub fn steps(&self) -> &[Matrix] {
        &self.steps
    }

    pub fn steps_mut(&mut self) -> &mut [Matrix] {
        &mut self.steps
    }

    pub fn into_steps(self) -> Vec<Matrix> {
        self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn batch(&self) -> usize {
        self.steps.first().map_or(0, Matrix::rows)
    }

    pub fn width(&self) -> usize {
        self.steps.first().map_or(0, Matrix::cols)
    }

    pub fn last(&self) -> Option<&Matrix> {
        self.steps.last()
    }
}

/// Copies a batch×k matrix to every one of `len` steps.
pub fn repeat_vector(x: &Matrix, len: usize) -> Sequence {
    Sequence {
        steps: vec![x.clone(); len],
    }
}

/// Gradient of [`repeat_vector`]: the sum over steps.
pub fn repeat_vector_backward(grad: &Sequence) -> Result<Matrix> {
    let mut steps = grad.steps.iter();
    let mut acc = steps
        .next()
        .cloned()
        .ok_or_else(|| Error::shape("empty sequence gradient"))?;
    for m in steps {
        acc.add_assign(m)?;
    }
    Ok(acc)
}

/// One dense layer shared across all time steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeDistributed {
    pub layer: DenseLayer,
}

#[derive(Debug, Clone)]
pub struct TimeDistributedCache {
    steps: Vec<DenseCache>,
}

impl TimeDistributed {
    pub fn new(layer: DenseLayer) -> Self {
        Self { layer }
    }

    pub fn forward(&self, x: &Sequence) -> Result<Sequence> {
        let steps = x
            .steps
            .iter()
            .map(|m| self.layer.forward(m))
            .collect::<Result<_>>()?;
        Ok(Sequence { steps })
    }

    pub fn forward_cached(&self, x: &Sequence) -> Result<(Sequence, TimeDistributedCache)> {
        let mut steps = Vec::with_capacity(x.len());
        let mut caches = Vec::with_capacity(x.len());
        for m in &x.steps {
            let (y, c) = self.layer.forward_cached(m)?;
            steps.push(y);
            caches.push(c);
        }
        Ok((Sequence { steps }, TimeDistributedCache { steps: caches }))
    }

    /// Per-step input gradients and parameter gradients summed over steps.
    pub fn backward(
        &self,
        grad_out: &Sequence,
        cache: &TimeDistributedCache,
    ) -> Result<(Sequence, DenseGrads)> {
        if grad_out.len() != cache.steps.len() {
            return Err(Error::shape(format!(
                "time-distributed backward got {} steps, cached {}",
                grad_out.len(),
                cache.steps.len()
            )));
        }
        let mut grad_in = Vec::with_capacity(grad_out.len());
        let mut total = DenseGrads {
            weights: Matrix::zeros(self.layer.outputs(), self.layer.inputs()),
            bias: vec![0.0; self.layer.outputs()],
        };
        for (g, c) in grad_out.steps.iter().zip(&cache.steps) {
            let (gi, gp) = self.layer.backward(g, c)?;
            total.weights.add_assign(&gp.weights)?;
            for (a, b) in total.bias.iter_mut().zip(&gp.bias) {
                *a += b;
            }
            grad_in.push(gi);
        }
        Ok((Sequence { steps: grad_in }, total))
    }
}

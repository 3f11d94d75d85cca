//! Hand-differentiated layers, the Adam optimizer and training callbacks.

pub mod adam;
pub mod callbacks;
pub mod dense;
pub mod gradcheck;
pub mod init;
pub mod lstm;
pub mod matrix;
pub mod sequence;

use serde::{Deserialize, Serialize};

pub use adam::{Adam, AdamConfig};
pub use callbacks::{early_stopping, reduce_lr_on_plateau, EarlyStopping, PlateauScheduler, StopDecision};
pub use dense::{DenseCache, DenseGrads, DenseLayer};
pub use lstm::{LstmCache, LstmGrads, LstmLayer};
pub use matrix::Matrix;
pub use sequence::{repeat_vector, repeat_vector_backward, Sequence, TimeDistributed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Linear,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Linear => x,
        }
    }

    /// Derivative expressed through the activation's output `y`.
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Linear => 1.0,
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

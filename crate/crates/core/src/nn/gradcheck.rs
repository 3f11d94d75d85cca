//! Central finite-difference checks of every analytic gradient in the crate.
//!
//! Each check builds a small random instance from a seed, reduces the output
//! to a scalar with a random projection, and compares analytic gradients
//! against `(f(θ+h) − f(θ−h)) / 2h` entry by entry.

use rand::Rng;

use super::init::seeded_rng;
use super::{repeat_vector, repeat_vector_backward, Activation, DenseLayer, LstmLayer, Matrix, Sequence, TimeDistributed};
use crate::error::Result;
use crate::models::{Autoencoder, DenseAE, LstmAE};
use crate::training::{mahalanobis_loss, mse_loss, CovarianceModel};

pub const STEP: f64 = 1e-5;

/// Largest relative error seen over every checked entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub entries: usize,
}

impl GradCheck {
    fn new() -> Self {
        Self {
            max_rel_error: 0.0,
            entries: 0,
        }
    }

    fn record(&mut self, analytic: f64, numeric: f64) {
        let scale = analytic.abs().max(numeric.abs()).max(1e-6);
        self.max_rel_error = self.max_rel_error.max((analytic - numeric).abs() / scale);
        self.entries += 1;
    }

    fn merge(mut self, other: GradCheck) -> Self {
        self.max_rel_error = self.max_rel_error.max(other.max_rel_error);
        self.entries += other.entries;
        self
    }
}

fn random_matrix<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
    Matrix::from_vec(rows, cols, data).expect("shape")
}

fn random_sequence<R: Rng>(batch: usize, len: usize, width: usize, rng: &mut R) -> Sequence {
    Sequence::new((0..len).map(|_| random_matrix(batch, width, rng)).collect()).expect("steps")
}

fn project(m: &Matrix, p: &Matrix) -> f64 {
    m.data().iter().zip(p.data()).map(|(a, b)| a * b).sum()
}

fn project_seq(s: &Sequence, p: &Sequence) -> f64 {
    s.steps().iter().zip(p.steps()).map(|(a, b)| project(a, b)).sum()
}

/// Compares `analytic` against central differences of `f` over the entries of `values`.
fn compare(check: &mut GradCheck, values: &mut [f64], analytic: &[f64], f: &mut dyn FnMut(&[f64]) -> f64) {
    for k in 0..values.len() {
        let orig = values[k];
        values[k] = orig + STEP;
        let up = f(values);
        values[k] = orig - STEP;
        let down = f(values);
        values[k] = orig;
        check.record(analytic[k], (up - down) / (2.0 * STEP));
    }
}

/// Runs `compare` over each parameter tensor of a model, rebuilding it for every evaluation.
fn compare_params<M: Clone>(
    check: &mut GradCheck,
    model: &M,
    tensors: fn(&mut M) -> Vec<&mut [f64]>,
    analytic: &[Vec<f64>],
    objective: &dyn Fn(&M) -> f64,
) {
    let n_tensors = tensors(&mut model.clone()).len();
    for t in 0..n_tensors {
        let mut values = tensors(&mut model.clone())[t].to_vec();
        let mut f = |v: &[f64]| {
            let mut m = model.clone();
            tensors(&mut m)[t].copy_from_slice(v);
            objective(&m)
        };
        compare(check, &mut values, &analytic[t], &mut f);
    }
}

fn dense_tensors(l: &mut DenseLayer) -> Vec<&mut [f64]> {
    l.tensors_mut().into_iter().collect()
}

fn lstm_tensors(l: &mut LstmLayer) -> Vec<&mut [f64]> {
    l.tensors_mut()
}

fn head_tensors(l: &mut TimeDistributed) -> Vec<&mut [f64]> {
    l.layer.tensors_mut().into_iter().collect()
}

pub fn check_dense(seed: u64) -> Result<GradCheck> {
    let mut rng = seeded_rng(seed);
    let mut total = GradCheck::new();
    for activation in [Activation::Tanh, Activation::Linear] {
        let layer = DenseLayer::init(4, 3, activation, &mut rng);
        let x = random_matrix(5, 4, &mut rng);
        let p = random_matrix(5, 3, &mut rng);
        let (_, cache) = layer.forward_cached(&x)?;
        let (gx, gp) = layer.backward(&p, &cache)?;
        let mut check = GradCheck::new();
        let objective = |l: &DenseLayer| project(&l.forward(&x).expect("forward"), &p);
        compare_params(&mut check, &layer, dense_tensors, &gp.into_tensors(), &objective);
        let mut xv = x.data().to_vec();
        let mut fx = |v: &[f64]| {
            let xm = Matrix::from_vec(5, 4, v.to_vec()).expect("shape");
            project(&layer.forward(&xm).expect("forward"), &p)
        };
        compare(&mut check, &mut xv, gx.data(), &mut fx);
        total = total.merge(check);
    }
    Ok(total)
}

/// LSTM with `T = 3` steps and two units, in both sequence and last-state modes.
pub fn check_lstm(seed: u64) -> Result<GradCheck> {
    let mut rng = seeded_rng(seed);
    let (batch, steps, inputs, units) = (2, 3, 3, 2);
    let mut total = GradCheck::new();
    for return_sequences in [true, false] {
        let mut layer = LstmLayer::init(inputs, units, return_sequences, &mut rng);
        // move biases off their initial constants so every path is exercised
        for g in [&mut layer.input_gate, &mut layer.forget_gate, &mut layer.candidate, &mut layer.output_gate] {
            for b in g.bias.iter_mut() {
                *b += rng.random_range(-0.5..0.5);
            }
        }
        let x = random_sequence(batch, steps, inputs, &mut rng);
        let out_len = if return_sequences { steps } else { 1 };
        let p = random_sequence(batch, out_len, units, &mut rng);
        let (_, cache) = layer.forward_cached(&x)?;
        let (gx, gp) = layer.backward(&p, &cache)?;
        let mut check = GradCheck::new();
        let objective = |l: &LstmLayer| project_seq(&l.forward(&x).expect("forward"), &p);
        compare_params(&mut check, &layer, lstm_tensors, &gp.into_tensors(), &objective);
        for t in 0..steps {
            let mut xv = x.steps()[t].data().to_vec();
            let mut fx = |v: &[f64]| {
                let mut xs = x.clone();
                xs.steps_mut()[t].data_mut().copy_from_slice(v);
                project_seq(&layer.forward(&xs).expect("forward"), &p)
            };
            compare(&mut check, &mut xv, gx.steps()[t].data(), &mut fx);
        }
        total = total.merge(check);
    }
    Ok(total)
}

pub fn check_repeat(seed: u64) -> Result<GradCheck> {
    let mut rng = seeded_rng(seed);
    let (batch, width, len) = (3, 4, 5);
    let x = random_matrix(batch, width, &mut rng);
    let p = random_sequence(batch, len, width, &mut rng);
    let gx = repeat_vector_backward(&p)?;
    let mut check = GradCheck::new();
    let mut xv = x.data().to_vec();
    let mut f = |v: &[f64]| {
        let xm = Matrix::from_vec(batch, width, v.to_vec()).expect("shape");
        project_seq(&repeat_vector(&xm, len), &p)
    };
    compare(&mut check, &mut xv, gx.data(), &mut f);
    Ok(check)
}

pub fn check_time_distributed(seed: u64) -> Result<GradCheck> {
    let mut rng = seeded_rng(seed);
    let (batch, len, inputs, outputs) = (2, 4, 3, 5);
    let head = TimeDistributed::new(DenseLayer::init(inputs, outputs, Activation::Tanh, &mut rng));
    let x = random_sequence(batch, len, inputs, &mut rng);
    let p = random_sequence(batch, len, outputs, &mut rng);
    let (_, cache) = head.forward_cached(&x)?;
    let (gx, gp) = head.backward(&p, &cache)?;
    let mut check = GradCheck::new();
    let objective = |h: &TimeDistributed| project_seq(&h.forward(&x).expect("forward"), &p);
    compare_params(&mut check, &head, head_tensors, &gp.into_tensors(), &objective);
    for t in 0..len {
        let mut xv = x.steps()[t].data().to_vec();
        let mut fx = |v: &[f64]| {
            let mut xs = x.clone();
            xs.steps_mut()[t].data_mut().copy_from_slice(v);
            project_seq(&head.forward(&xs).expect("forward"), &p)
        };
        compare(&mut check, &mut xv, gx.steps()[t].data(), &mut fx);
    }
    Ok(check)
}

pub fn check_mse(seed: u64) -> Result<GradCheck> {
    let mut rng = seeded_rng(seed);
    let x = random_matrix(6, 4, &mut rng);
    let recon = random_matrix(6, 4, &mut rng);
    let (_, grad) = mse_loss(&x, &recon)?;
    let mut check = GradCheck::new();
    let mut rv = recon.data().to_vec();
    let mut f = |v: &[f64]| mse_loss(&x, &Matrix::from_vec(6, 4, v.to_vec()).expect("shape")).expect("loss").0;
    compare(&mut check, &mut rv, grad.data(), &mut f);
    Ok(check)
}

pub fn check_mahalanobis(seed: u64) -> Result<GradCheck> {
    let mut rng = seeded_rng(seed);
    let d = 4;
    let a = random_matrix(d, d, &mut rng);
    let mut sigma = a.t_matmul(&a)?;
    let t = sigma.transpose();
    for (v, w) in sigma.data_mut().iter_mut().zip(t.data()) {
        *v = 0.5 * (*v + w);
    }
    let cov = CovarianceModel::from_sigma(sigma, 0.1)?;
    let x = random_matrix(6, d, &mut rng);
    let recon = random_matrix(6, d, &mut rng);
    let (_, grad) = mahalanobis_loss(&x, &recon, &cov)?;
    let mut check = GradCheck::new();
    let mut rv = recon.data().to_vec();
    let mut f = |v: &[f64]| {
        mahalanobis_loss(&x, &Matrix::from_vec(6, d, v.to_vec()).expect("shape"), &cov)
            .expect("loss")
            .0
    };
    compare(&mut check, &mut rv, grad.data(), &mut f);
    Ok(check)
}

fn ae_tensors<A: Autoencoder>(m: &mut A) -> Vec<&mut [f64]> {
    m.tensors_mut()
}

fn check_autoencoder<A: Autoencoder + Clone>(model: A, x: Matrix, p: Matrix) -> Result<GradCheck> {
    let (_, cache) = model.forward_train(&x)?;
    let grads = model.backward(&p, &cache)?;
    let mut check = GradCheck::new();
    let objective = |m: &A| project(&m.encode_decode(&x).expect("forward").0, &p);
    compare_params(&mut check, &model, ae_tensors::<A>, &grads, &objective);
    Ok(check)
}

/// Whole dense autoencoder, all parameters.
pub fn check_dense_autoencoder(seed: u64) -> Result<GradCheck> {
    let mut rng = seeded_rng(seed);
    let d = 5;
    let x = random_matrix(3, d, &mut rng);
    let p = random_matrix(3, d, &mut rng);
    check_autoencoder(DenseAE::new(d, seed), x, p)
}

/// Whole LSTM autoencoder with `T = 3`, all parameters.
pub fn check_lstm_autoencoder(seed: u64) -> Result<GradCheck> {
    let mut rng = seeded_rng(seed);
    let (d, steps) = (2, 3);
    let x = random_matrix(2, d * steps, &mut rng);
    let p = random_matrix(2, d * steps, &mut rng);
    check_autoencoder(LstmAE::new(d, steps, seed), x, p)
}

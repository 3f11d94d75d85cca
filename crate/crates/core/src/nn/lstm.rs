//! LSTM layer with an analytic backward pass (backpropagation through time).
//!
//! Per step, with `a_* = x·W_*ᵀ + h·U_*ᵀ + b_*`:
//!
//! ```text
//! i = σ(a_i)   f = σ(a_f)   o = σ(a_o)   g = tanh(a_g)
//! c ← f⊙c + i⊙g
//! h ← o⊙tanh(c)
//! ```
//!
//! The initial state is `h₀ = c₀ = 0`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::init::glorot_uniform;
use super::{sigmoid, Matrix, Sequence};
use crate::error::{Error, Result};

/// Weights of one gate: `input` is units×in, `recurrent` is units×units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub input: Matrix,
    pub recurrent: Matrix,
    pub bias: Vec<f64>,
}

impl Gate {
    fn zeros(inputs: usize, units: usize) -> Self {
        Self {
            input: Matrix::zeros(units, inputs),
            recurrent: Matrix::zeros(units, units),
            bias: vec![0.0; units],
        }
    }

    fn init<R: Rng>(inputs: usize, units: usize, bias: f64, rng: &mut R) -> Self {
        Self {
            input: glorot_uniform(units, inputs, inputs, units, rng),
            recurrent: glorot_uniform(units, units, units, units, rng),
            bias: vec![bias; units],
        }
    }

    fn preactivation(&self, x: &Matrix, h: &Matrix) -> Result<Matrix> {
        let mut a = x.matmul_t(&self.input)?;
        a.add_assign(&h.matmul_t(&self.recurrent)?)?;
        a.add_row_vector(&self.bias)?;
        Ok(a)
    }

    fn check(&self, inputs: usize, units: usize) -> Result<()> {
        if self.input.shape() != (units, inputs)
            || self.recurrent.shape() != (units, units)
            || self.bias.len() != units
        {
            return Err(Error::shape(format!(
                "gate shapes inconsistent with {units} units and {inputs} inputs"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmLayer {
    pub input_gate: Gate,
    pub forget_gate: Gate,
    pub candidate: Gate,
    pub output_gate: Gate,
    pub units: usize,
    pub return_sequences: bool,
}

#[derive(Debug, Clone)]
struct StepCache {
    x: Matrix,
    h_prev: Matrix,
    c_prev: Matrix,
    i: Matrix,
    f: Matrix,
    g: Matrix,
    o: Matrix,
    tanh_c: Matrix,
}

#[derive(Debug, Clone)]
pub struct LstmCache {
    steps: Vec<StepCache>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateGrads {
    pub input: Matrix,
    pub recurrent: Matrix,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmGrads {
    pub input_gate: GateGrads,
    pub forget_gate: GateGrads,
    pub candidate: GateGrads,
    pub output_gate: GateGrads,
}

impl LstmLayer {
    pub fn zeros(inputs: usize, units: usize, return_sequences: bool) -> Self {
        Self {
            input_gate: Gate::zeros(inputs, units),
            forget_gate: Gate::zeros(inputs, units),
            candidate: Gate::zeros(inputs, units),
            output_gate: Gate::zeros(inputs, units),
            units,
            return_sequences,
        }
    }

    /// Glorot-uniform weights, forget-gate bias 1, other biases 0.
    pub fn init<R: Rng>(inputs: usize, units: usize, return_sequences: bool, rng: &mut R) -> Self {
        Self {
            input_gate: Gate::init(inputs, units, 0.0, rng),
            forget_gate: Gate::init(inputs, units, 1.0, rng),
            candidate: Gate::init(inputs, units, 0.0, rng),
            output_gate: Gate::init(inputs, units, 0.0, rng),
            units,
            return_sequences,
        }
    }

    pub fn inputs(&self) -> usize {
        self.input_gate.input.cols()
    }

    pub fn param_count(&self) -> usize {
        4 * (self.units * self.inputs() + self.units * self.units + self.units)
    }

    pub fn validate(&self) -> Result<()> {
        let (n, u) = (self.inputs(), self.units);
        for gate in self.gates() {
            gate.check(n, u)?;
        }
        Ok(())
    }

    fn gates(&self) -> [&Gate; 4] {
        [
            &self.input_gate,
            &self.forget_gate,
            &self.candidate,
            &self.output_gate,
        ]
    }

    /// All step outputs when `return_sequences`, otherwise a one-step sequence holding the final `h`.
    pub fn forward(&self, x: &Sequence) -> Result<Sequence> {
        Ok(self.forward_cached(x)?.0)
    }

    pub fn forward_cached(&self, x: &Sequence) -> Result<(Sequence, LstmCache)> {
        if x.is_empty() {
            return Err(Error::shape("lstm input has no time steps"));
        }
        if x.width() != self.inputs() {
            return Err(Error::shape(format!(
                "lstm expects {} inputs, got {}",
                self.inputs(),
                x.width()
            )));
        }
        let batch = x.batch();
        let mut h = Matrix::zeros(batch, self.units);
        let mut c = Matrix::zeros(batch, self.units);
        let mut outputs = Vec::with_capacity(x.len());
        let mut steps = Vec::with_capacity(x.len());
        for xt in x.steps() {
            let i = self.input_gate.preactivation(xt, &h)?.map(sigmoid);
            let f = self.forget_gate.preactivation(xt, &h)?.map(sigmoid);
            let g = self.candidate.preactivation(xt, &h)?.map(f64::tanh);
            let o = self.output_gate.preactivation(xt, &h)?.map(sigmoid);
            let mut c_new = f.hadamard(&c)?;
            c_new.add_assign(&i.hadamard(&g)?)?;
            let tanh_c = c_new.map(f64::tanh);
            let h_new = o.hadamard(&tanh_c)?;
            steps.push(StepCache {
                x: xt.clone(),
                h_prev: h,
                c_prev: c,
                i,
                f,
                g,
                o,
                tanh_c,
            });
            if self.return_sequences {
                outputs.push(h_new.clone());
            }
            h = h_new;
            c = c_new;
        }
        if !self.return_sequences {
            outputs.push(h);
        }
        Ok((Sequence::new(outputs)?, LstmCache { steps }))
    }

    /// BPTT. `grad_out` has one step per output of the matching forward call.
    pub fn backward(&self, grad_out: &Sequence, cache: &LstmCache) -> Result<(Sequence, LstmGrads)> {
        let t_len = cache.steps.len();
        let expected = if self.return_sequences { t_len } else { 1 };
        if grad_out.len() != expected {
            return Err(Error::shape(format!(
                "lstm backward expects {expected} gradient steps, got {}",
                grad_out.len()
            )));
        }
        let batch = cache.steps[0].x.rows();
        if grad_out.batch() != batch || grad_out.width() != self.units {
            return Err(Error::shape(format!(
                "lstm backward gradient is {}x{}, expected {batch}x{}",
                grad_out.batch(),
                grad_out.width(),
                self.units
            )));
        }
        let inputs = self.inputs();
        let zero_gate = || GateGrads {
            input: Matrix::zeros(self.units, inputs),
            recurrent: Matrix::zeros(self.units, self.units),
            bias: vec![0.0; self.units],
        };
        let mut grads = LstmGrads {
            input_gate: zero_gate(),
            forget_gate: zero_gate(),
            candidate: zero_gate(),
            output_gate: zero_gate(),
        };
        let mut grad_x = vec![Matrix::zeros(batch, inputs); t_len];
        let mut dh_next = Matrix::zeros(batch, self.units);
        let mut dc_next = Matrix::zeros(batch, self.units);

        for t in (0..t_len).rev() {
            let s = &cache.steps[t];
            let mut dh = dh_next;
            if self.return_sequences {
                dh.add_assign(&grad_out.steps()[t])?;
            } else if t == t_len - 1 {
                dh.add_assign(&grad_out.steps()[0])?;
            }
            let n = batch * self.units;
            let mut da_i = Matrix::zeros(batch, self.units);
            let mut da_f = Matrix::zeros(batch, self.units);
            let mut da_g = Matrix::zeros(batch, self.units);
            let mut da_o = Matrix::zeros(batch, self.units);
            let mut dc_prev = Matrix::zeros(batch, self.units);
            for k in 0..n {
                let (i, f, g, o, tc) = (
                    s.i.data()[k],
                    s.f.data()[k],
                    s.g.data()[k],
                    s.o.data()[k],
                    s.tanh_c.data()[k],
                );
                let dh_k = dh.data()[k];
                let dc = dh_k * o * (1.0 - tc * tc) + dc_next.data()[k];
                da_o.data_mut()[k] = dh_k * tc * o * (1.0 - o);
                da_i.data_mut()[k] = dc * g * i * (1.0 - i);
                da_f.data_mut()[k] = dc * s.c_prev.data()[k] * f * (1.0 - f);
                da_g.data_mut()[k] = dc * i * (1.0 - g * g);
                dc_prev.data_mut()[k] = dc * f;
            }
            let mut dh_prev = Matrix::zeros(batch, self.units);
            for (gate, gg, da) in [
                (&self.input_gate, &mut grads.input_gate, &da_i),
                (&self.forget_gate, &mut grads.forget_gate, &da_f),
                (&self.candidate, &mut grads.candidate, &da_g),
                (&self.output_gate, &mut grads.output_gate, &da_o),
            ] {
                gg.input.add_assign(&da.t_matmul(&s.x)?)?;
                gg.recurrent.add_assign(&da.t_matmul(&s.h_prev)?)?;
                for (b, v) in gg.bias.iter_mut().zip(da.sum_rows()) {
                    *b += v;
                }
                grad_x[t].add_assign(&da.matmul(&gate.input)?)?;
                dh_prev.add_assign(&da.matmul(&gate.recurrent)?)?;
            }
            dh_next = dh_prev;
            dc_next = dc_prev;
        }
        Ok((Sequence::new(grad_x)?, grads))
    }

    /// Tensor order: for each gate (input, forget, candidate, output): W, U, b.
    pub(crate) fn tensors(&self) -> Vec<&[f64]> {
        self.gates()
            .into_iter()
            .flat_map(|g| [g.input.data(), g.recurrent.data(), g.bias.as_slice()])
            .collect()
    }

    pub(crate) fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        [
            &mut self.input_gate,
            &mut self.forget_gate,
            &mut self.candidate,
            &mut self.output_gate,
        ]
        .into_iter()
        .flat_map(|g| {
            [
                g.input.data_mut(),
                g.recurrent.data_mut(),
                g.bias.as_mut_slice(),
            ]
        })
        .collect()
    }
}

impl LstmGrads {
    pub(crate) fn into_tensors(self) -> Vec<Vec<f64>> {
        [
            self.input_gate,
            self.forget_gate,
            self.candidate,
            self.output_gate,
        ]
        .into_iter()
        .flat_map(|g| [g.input.into_vec(), g.recurrent.into_vec(), g.bias])
        .collect()
    }
}

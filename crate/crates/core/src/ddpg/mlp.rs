//! Fully connected network with ReLU hidden layers and a linear output.
//!
//! Weights are stored row-major (`outputs x inputs`). Batches are flat
//! slices with one row per sample.

use super::DdpgError;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Layer {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            biases: vec![0.0; outputs],
        }
    }

    /// `out[b] = W in[b] + bias` for every row of the batch.
    fn affine(&self, input: &[f64], batch: usize) -> Vec<f64> {
        let mut out = vec![0.0; batch * self.outputs];
        for b in 0..batch {
            let x = &input[b * self.inputs..(b + 1) * self.inputs];
            let y = &mut out[b * self.outputs..(b + 1) * self.outputs];
            for (o, yo) in y.iter_mut().enumerate() {
                let w = &self.weights[o * self.inputs..(o + 1) * self.inputs];
                *yo = self.biases[o] + dot(w, x);
            }
        }
        out
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Weights and biases of one network; also used as the gradient container.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub layers: Vec<Layer>,
}

/// Weight initialisation scheme.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "scheme")]
pub enum Init {
    /// Uniform in `[-range, range]`.
    Uniform { range: f64 },
    /// Uniform in `[low, high]` for every weight and bias.
    UniformBetween { low: f64, high: f64 },
}

/// Activations recorded by a batched forward pass.
pub struct Tape {
    batch: usize,
    /// `acts[0]` is the input; `acts[l + 1]` the output of layer `l`.
    acts: Vec<Vec<f64>>,
}

impl Tape {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("tape has an input")
    }
}

/// Result of a reverse pass.
pub struct Gradients {
    pub params: MlpParams,
    /// Gradient with respect to the input batch.
    pub input: Vec<f64>,
}

impl MlpParams {
    /// Layer sizes `[in, h1, ..., out]`, all parameters zero.
    pub fn zeros(sizes: &[usize]) -> Self {
        MlpParams {
            layers: sizes.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect(),
        }
    }

    pub fn init<R: Rng>(sizes: &[usize], init: Init, rng: &mut R) -> Self {
        let mut p = Self::zeros(sizes);
        let (lo, hi) = match init {
            Init::Uniform { range } => (-range, range),
            Init::UniformBetween { low, high } => (low, high),
        };
        for v in p.values_mut() {
            *v = rng.random_range(lo..=hi);
        }
        p
    }

    pub fn input_len(&self) -> usize {
        self.layers.first().map_or(0, |l| l.inputs)
    }

    pub fn output_len(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_len()];
        s.extend(self.layers.iter().map(|l| l.outputs));
        s
    }

    pub fn same_shape(&self, other: &MlpParams) -> bool {
        self.sizes() == other.sizes()
    }

    pub fn len(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All parameters, layer by layer, weights before biases.
    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.biases))
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.biases.iter_mut()))
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(|v| v.is_finite())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, DdpgError> {
        Ok(self.forward_batch(x, 1)?.acts.pop().unwrap_or_default())
    }

    pub fn forward_batch(&self, x: &[f64], batch: usize) -> Result<Tape, DdpgError> {
        if x.len() != batch * self.input_len() {
            return Err(DdpgError::ShapeMismatch(format!(
                "input of length {} for batch {batch} x {} inputs",
                x.len(),
                self.input_len()
            )));
        }
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        let last = self.layers.len().saturating_sub(1);
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = layer.affine(&acts[l], batch);
            if l < last {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(z);
        }
        Ok(Tape { batch, acts })
    }

    /// Reverse pass for `sum_b output[b] . upstream[b]`.
    ///
    /// Hidden units with a non-positive output pass no gradient.
    pub fn backward(&self, tape: &Tape, upstream: &[f64]) -> Result<Gradients, DdpgError> {
        let batch = tape.batch;
        if upstream.len() != batch * self.output_len() {
            return Err(DdpgError::ShapeMismatch(format!(
                "upstream of length {} for batch {batch} x {} outputs",
                upstream.len(),
                self.output_len()
            )));
        }
        let mut grads = MlpParams::zeros(&self.sizes());
        let mut delta = upstream.to_vec();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let input = &tape.acts[l];
            let g = &mut grads.layers[l];
            let mut next = vec![0.0; batch * layer.inputs];
            for b in 0..batch {
                let x = &input[b * layer.inputs..(b + 1) * layer.inputs];
                let d = &delta[b * layer.outputs..(b + 1) * layer.outputs];
                let dx = &mut next[b * layer.inputs..(b + 1) * layer.inputs];
                for (o, &dv) in d.iter().enumerate() {
                    if dv == 0.0 {
                        continue;
                    }
                    g.biases[o] += dv;
                    axpy(dv, x, &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs]);
                    axpy(dv, &layer.weights[o * layer.inputs..(o + 1) * layer.inputs], dx);
                }
            }
            if l > 0 {
                // through the ReLU that produced this layer's input
                for (dv, a) in next.iter_mut().zip(input) {
                    if *a <= 0.0 {
                        *dv = 0.0;
                    }
                }
            }
            delta = next;
        }
        Ok(Gradients {
            params: grads,
            input: delta,
        })
    }

    /// `self -= lr * grads`.
    pub fn descend(&mut self, grads: &MlpParams, lr: f64) {
        for (p, g) in self.values_mut().zip(grads.values()) {
            *p -= lr * g;
        }
    }
}

/// Exact gradients of `output(x) . upstream` for a single input.
pub fn mlp_gradients(p: &MlpParams, x: &[f64], upstream: &[f64]) -> Result<Gradients, DdpgError> {
    let tape = p.forward_batch(x, 1)?;
    p.backward(&tape, upstream)
}

/// Target tracking `target <- (1 - tau) behaviour + tau target`.
pub fn soft_update(behaviour: &MlpParams, target: &MlpParams, tau: f64) -> Result<MlpParams, DdpgError> {
    if !behaviour.same_shape(target) {
        return Err(DdpgError::ShapeMismatch(format!(
            "behaviour {:?} vs target {:?}",
            behaviour.sizes(),
            target.sizes()
        )));
    }
    let mut out = target.clone();
    for (t, b) in out.values_mut().zip(behaviour.values()) {
        *t = (1.0 - tau) * b + tau * *t;
    }
    Ok(out)
}

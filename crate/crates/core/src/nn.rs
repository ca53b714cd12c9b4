//! Small dense networks with hand-written batched backpropagation.
//!
//! Weights are stored input-major (`w[i * out + o]`) so the forward pass and
//! the weight gradient are both contiguous axpy loops over the output units.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub activation: Activation,
}

/// Feed-forward network: tanh hidden layers, configurable output activation.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

/// Post-activation outputs of every layer for one batch.
#[derive(Debug, Clone, Default)]
pub struct Cache {
    input: Vec<f64>,
    outputs: Vec<Vec<f64>>,
    batch: usize,
}

/// Parameter gradients, laid out like the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zero(&mut self) {
        for v in self.w.iter_mut().chain(self.b.iter_mut()) {
            v.iter_mut().for_each(|x| *x = 0.0);
        }
    }
}

impl Mlp {
    /// Fan-in uniform initialization; the last layer is scaled by `out_scale`.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], output: Activation, out_scale: f64, rng: &mut R) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Config(format!("invalid layer sizes {sizes:?}")));
        }
        let n = sizes.len() - 1;
        let mut layers = Vec::with_capacity(n);
        for k in 0..n {
            let (fan_in, fan_out) = (sizes[k], sizes[k + 1]);
            let last = k + 1 == n;
            let bound = if last { out_scale } else { 1.0 } / libm::sqrt(fan_in as f64);
            let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
            layers.push(Layer {
                inputs: fan_in,
                outputs: fan_out,
                w: (0..fan_in * fan_out).map(|_| dist.sample(rng)).collect(),
                b: (0..fan_out).map(|_| if last { 0.0 } else { dist.sample(rng) }).collect(),
                activation: if last { output } else { Activation::Tanh },
            });
        }
        Ok(Self { layers })
    }

    pub fn inputs(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn outputs(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn zero_gradients(&self) -> Gradients {
        Gradients {
            w: self.layers.iter().map(|l| vec![0.0; l.w.len()]).collect(),
            b: self.layers.iter().map(|l| vec![0.0; l.b.len()]).collect(),
        }
    }

    /// Single-sample forward pass.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.inputs() {
            return Err(Error::Dimension { expected: self.inputs(), got: x.len() });
        }
        let mut cache = Cache::default();
        Ok(self.forward_batch(x, 1, &mut cache).to_vec())
    }

    /// Forward pass over `batch` row-major samples, keeping activations in `cache`.
    pub fn forward_batch<'c>(&self, x: &[f64], batch: usize, cache: &'c mut Cache) -> &'c [f64] {
        debug_assert_eq!(x.len(), batch * self.inputs());
        cache.batch = batch;
        cache.input.clear();
        cache.input.extend_from_slice(x);
        cache.outputs.resize(self.layers.len(), Vec::new());
        for (k, layer) in self.layers.iter().enumerate() {
            let (before, after) = cache.outputs.split_at_mut(k);
            let input: &[f64] = if k == 0 { &cache.input } else { &before[k - 1] };
            let out = &mut after[0];
            out.clear();
            out.resize(batch * layer.outputs, 0.0);
            for s in 0..batch {
                let xs = &input[s * layer.inputs..(s + 1) * layer.inputs];
                let ys = &mut out[s * layer.outputs..(s + 1) * layer.outputs];
                ys.copy_from_slice(&layer.b);
                for (i, &xi) in xs.iter().enumerate() {
                    let row = &layer.w[i * layer.outputs..(i + 1) * layer.outputs];
                    for (y, w) in ys.iter_mut().zip(row) {
                        *y += xi * w;
                    }
                }
                if layer.activation == Activation::Tanh {
                    ys.iter_mut().for_each(|y| *y = libm::tanh(*y));
                }
            }
        }
        &cache.outputs[self.layers.len() - 1]
    }

    /// Backpropagates `grad_out` (∂loss/∂output, batch-major) through the
    /// cached batch. Parameter gradients are added to `grads`; the input
    /// gradient is written to `grad_input` when given.
    pub fn backward(
        &self,
        cache: &Cache,
        grad_out: &[f64],
        grads: &mut Gradients,
        grad_input: Option<&mut Vec<f64>>,
    ) {
        let batch = cache.batch;
        let mut delta = grad_out.to_vec();
        let mut next = Vec::new();
        let want_input = grad_input.is_some();
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            let out = &cache.outputs[k];
            if layer.activation == Activation::Tanh {
                for (d, y) in delta.iter_mut().zip(out) {
                    *d *= 1.0 - y * y;
                }
            }
            let input: &[f64] = if k == 0 { &cache.input } else { &cache.outputs[k - 1] };
            let (gw, gb) = (&mut grads.w[k], &mut grads.b[k]);
            let need_prev = k > 0 || want_input;
            if need_prev {
                next.clear();
                next.resize(batch * layer.inputs, 0.0);
            }
            for s in 0..batch {
                let ds = &delta[s * layer.outputs..(s + 1) * layer.outputs];
                let xs = &input[s * layer.inputs..(s + 1) * layer.inputs];
                for (g, d) in gb.iter_mut().zip(ds) {
                    *g += d;
                }
                for (i, &xi) in xs.iter().enumerate() {
                    let row = i * layer.outputs..(i + 1) * layer.outputs;
                    for (g, d) in gw[row.clone()].iter_mut().zip(ds) {
                        *g += xi * d;
                    }
                    if need_prev {
                        next[s * layer.inputs + i] = dot(&layer.w[row], ds);
                    }
                }
            }
            if need_prev {
                core::mem::swap(&mut delta, &mut next);
            }
        }
        if let Some(gi) = grad_input {
            gi.clear();
            gi.extend_from_slice(&delta);
        }
    }

    /// All parameters flattened layer by layer (weights, then biases).
    pub fn parameters(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            v.extend_from_slice(&l.w);
            v.extend_from_slice(&l.b);
        }
        v
    }

    pub fn set_parameters(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.param_count() {
            return Err(Error::Dimension { expected: self.param_count(), got: p.len() });
        }
        let mut at = 0;
        for l in &mut self.layers {
            let nw = l.w.len();
            l.w.copy_from_slice(&p[at..at + nw]);
            at += nw;
            let nb = l.b.len();
            l.b.copy_from_slice(&p[at..at + nb]);
            at += nb;
        }
        Ok(())
    }

    /// target ← rate·online + (1 − rate)·target.
    pub fn soft_update_from(&mut self, online: &Mlp, rate: f64) {
        for (t, o) in self.layers.iter_mut().zip(&online.layers) {
            for (a, b) in t.w.iter_mut().zip(&o.w).chain(t.b.iter_mut().zip(&o.b)) {
                *a = rate * b + (1.0 - rate) * *a;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.w.iter().chain(&l.b).all(|x| x.is_finite()))
    }
}

/// Four-way unrolled dot product.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        for k in 0..4 {
            acc[k] += a[4 * c + k] * b[4 * c + k];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for k in 4 * chunks..a.len() {
        s += a[k] * b[k];
    }
    s
}

/// Gradient descent with momentum: v ← μv + g, θ ← θ − lr·v.
#[derive(Debug, Clone, PartialEq)]
pub struct Momentum {
    pub lr: f64,
    pub mu: f64,
    velocity: Gradients,
}

impl Momentum {
    pub fn new(net: &Mlp, lr: f64, mu: f64) -> Self {
        Self { lr, mu, velocity: net.zero_gradients() }
    }

    /// Applies `grads` scaled by `scale` (e.g. 1/batch).
    pub fn step(&mut self, net: &mut Mlp, grads: &Gradients, scale: f64) {
        for (k, layer) in net.layers.iter_mut().enumerate() {
            for (p, (v, g)) in layer.w.iter_mut().zip(self.velocity.w[k].iter_mut().zip(&grads.w[k])) {
                *v = self.mu * *v + g * scale;
                *p -= self.lr * *v;
            }
            for (p, (v, g)) in layer.b.iter_mut().zip(self.velocity.b[k].iter_mut().zip(&grads.b[k])) {
                *v = self.mu * *v + g * scale;
                *p -= self.lr * *v;
            }
        }
    }

    pub fn velocity(&self) -> &Gradients {
        &self.velocity
    }
}

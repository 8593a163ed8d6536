//! Minimal dense-network engine with exact reverse-mode gradients.
//!
//! Serves both the generator and the adversary: a stack of affine layers with
//! ReLU hidden activations and an identity output layer (the adversary maps
//! into feature space without a squashing nonlinearity). Training uses Adam
//! with bias correction; the adversary ascends, the generator descends.

use alloc::{vec, vec::Vec};
use ndarray::{Array1, Array2, Axis};
#[allow(unused_imports)]
use num_traits::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::orthonormalize_columns;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    /// Derivative; the ReLU subgradient at exactly 0 is 0.
    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// One affine layer: `y = act(x W^T + b)` with `W` of shape `out x in`.
#[derive(Debug, Clone)]
pub struct Layer {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

/// A feedforward network. Layer dimensions chain; the final activation is
/// identity.
#[derive(Debug, Clone)]
pub struct DenseNet {
    layers: Vec<Layer>,
    version: u64,
}

impl DenseNet {
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidInput("network needs at least one layer".into()));
        }
        for w in layers.windows(2) {
            if w[1].weight.ncols() != w[0].weight.nrows() {
                return Err(Error::ShapeMismatch {
                    context: "layer chaining",
                    expected: (w[0].weight.nrows(), w[1].weight.ncols()),
                    got: (w[1].weight.ncols(), w[0].weight.nrows()),
                });
            }
        }
        for (idx, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.weight.nrows() {
                return Err(Error::ShapeMismatch {
                    context: "layer bias",
                    expected: (layer.weight.nrows(), 1),
                    got: (layer.bias.len(), 1),
                });
            }
            if layer
                .weight
                .iter()
                .chain(layer.bias.iter())
                .any(|x| !x.is_finite())
            {
                return Err(Error::NonFiniteGradient { layer: idx });
            }
        }
        if layers.last().map(|l| l.activation) != Some(Activation::Identity) {
            return Err(Error::InvalidInput(
                "final layer activation must be identity".into(),
            ));
        }
        Ok(Self { layers, version: 0 })
    }

    /// An MLP with ReLU hidden layers and an identity output layer, weights
    /// zero (callers typically follow up with [`orthogonal_init`]).
    pub fn mlp(input_dim: usize, hidden: &[usize], output_dim: usize) -> Result<Self> {
        let mut dims = vec![input_dim];
        dims.extend_from_slice(hidden);
        dims.push(output_dim);
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            if fan_in == 0 || fan_out == 0 {
                return Err(Error::InvalidInput("zero-width layer".into()));
            }
            layers.push(Layer {
                weight: Array2::zeros((fan_out, fan_in)),
                bias: Array1::zeros(fan_out),
                activation: Activation::Relu,
            });
        }
        layers.last_mut().expect("nonempty").activation = Activation::Identity;
        Self::from_layers(layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map(|l| l.weight.ncols()).unwrap_or(0)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(|l| l.weight.nrows()).unwrap_or(0)
    }

    /// Parameter version; bumped on every update so stale tapes are detected.
    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }
}

/// Activation cache from a forward pass, consumed by [`backward`].
#[derive(Debug, Clone)]
pub struct Tape {
    inputs: Vec<Array2<f64>>,
    preacts: Vec<Array2<f64>>,
    net_version: u64,
}

/// Per-layer parameter gradients, shaped like the owning network.
#[derive(Debug, Clone)]
pub struct GradientSet {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl GradientSet {
    pub fn zeros_like(net: &DenseNet) -> Self {
        Self {
            weights: net
                .layers
                .iter()
                .map(|l| Array2::zeros(l.weight.dim()))
                .collect(),
            biases: net.layers.iter().map(|l| Array1::zeros(l.bias.len())).collect(),
        }
    }

    /// `self += other * factor`.
    pub fn add_scaled(&mut self, other: &GradientSet, factor: f64) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            a.scaled_add(factor, b);
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            a.scaled_add(factor, b);
        }
    }

    pub fn max_abs(&self) -> f64 {
        let mut m = 0.0f64;
        for w in &self.weights {
            for x in w.iter() {
                m = m.max(x.abs());
            }
        }
        for b in &self.biases {
            for x in b.iter() {
                m = m.max(x.abs());
            }
        }
        m
    }
}

/// Replaces every weight matrix with a semi-orthogonal one obtained by
/// orthonormalizing a seeded Gaussian draw (tall: orthonormal columns, wide:
/// orthonormal rows); biases are zeroed. Deterministic per seed.
pub fn orthogonal_init(net: &mut DenseNet, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for layer in &mut net.layers {
        let (out, inp) = layer.weight.dim();
        let draw = |rng: &mut ChaCha8Rng, r: usize, c: usize| {
            Array2::from_shape_fn((r, c), |_| StandardNormal.sample(rng))
        };
        if out >= inp {
            let mut g = draw(&mut rng, out, inp);
            orthonormalize_columns(&mut g);
            layer.weight = g;
        } else {
            // Orthonormalize the rows via the transpose.
            let mut g = draw(&mut rng, inp, out);
            orthonormalize_columns(&mut g);
            layer.weight = g.t().to_owned();
        }
        layer.bias.fill(0.0);
    }
    net.version += 1;
}

/// Forward pass on a batch (`batch x input_dim`), returning the output and
/// the activation tape for the backward pass.
pub fn forward(net: &DenseNet, x: &Array2<f64>) -> Result<(Array2<f64>, Tape)> {
    if x.ncols() != net.input_dim() {
        return Err(Error::ShapeMismatch {
            context: "forward input",
            expected: (x.nrows(), net.input_dim()),
            got: x.dim(),
        });
    }
    let mut inputs = Vec::with_capacity(net.layers.len());
    let mut preacts = Vec::with_capacity(net.layers.len());
    let mut h = x.clone();
    for layer in &net.layers {
        inputs.push(h.clone());
        let mut z = h.dot(&layer.weight.t());
        z += &layer.bias;
        preacts.push(z.clone());
        h = z.mapv(|v| layer.activation.apply(v));
    }
    Ok((
        h,
        Tape {
            inputs,
            preacts,
            net_version: net.version,
        },
    ))
}

/// Reverse-mode pass: exact gradients of `sum(upstream o output)` with
/// respect to the parameters and the input batch. Fails on a tape recorded
/// before the last parameter update.
pub fn backward(
    net: &DenseNet,
    tape: &Tape,
    upstream: &Array2<f64>,
) -> Result<(GradientSet, Array2<f64>)> {
    if tape.net_version != net.version {
        return Err(Error::StaleTape);
    }
    let batch = tape.inputs[0].nrows();
    if upstream.dim() != (batch, net.output_dim()) {
        return Err(Error::ShapeMismatch {
            context: "backward upstream",
            expected: (batch, net.output_dim()),
            got: upstream.dim(),
        });
    }
    let mut grads = GradientSet::zeros_like(net);
    let mut delta = upstream.clone();
    for (idx, layer) in net.layers.iter().enumerate().rev() {
        let pre = &tape.preacts[idx];
        let mut dz = delta;
        dz.zip_mut_with(pre, |d, &z| *d *= layer.activation.derivative(z));
        grads.weights[idx] = dz.t().dot(&tape.inputs[idx]);
        grads.biases[idx] = dz.sum_axis(Axis(0));
        delta = dz.dot(&layer.weight);
    }
    Ok((grads, delta))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Descend,
    Ascend,
}

/// Adam optimizer state (first/second moments plus step counter).
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m_weights: Vec<Array2<f64>>,
    pub v_weights: Vec<Array2<f64>>,
    pub m_biases: Vec<Array1<f64>>,
    pub v_biases: Vec<Array1<f64>>,
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_hat: f64,
}

impl AdamState {
    /// Paper settings: `lr = 2e-4`, `beta1 = 0.5`, `beta2 = 0.99`.
    pub fn new(net: &DenseNet, lr: f64) -> Self {
        Self {
            m_weights: net
                .layers
                .iter()
                .map(|l| Array2::zeros(l.weight.dim()))
                .collect(),
            v_weights: net
                .layers
                .iter()
                .map(|l| Array2::zeros(l.weight.dim()))
                .collect(),
            m_biases: net.layers.iter().map(|l| Array1::zeros(l.bias.len())).collect(),
            v_biases: net.layers.iter().map(|l| Array1::zeros(l.bias.len())).collect(),
            step: 0,
            lr,
            beta1: 0.5,
            beta2: 0.99,
            eps_hat: 1e-8,
        }
    }
}

/// One Adam update with bias correction. `Ascend` negates the step (the
/// adversary maximizes its regularized objective).
pub fn adam_step(
    net: &mut DenseNet,
    grads: &GradientSet,
    state: &mut AdamState,
    direction: Direction,
) -> Result<()> {
    for (idx, g) in grads.weights.iter().enumerate() {
        if g.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteGradient { layer: idx });
        }
    }
    for (idx, g) in grads.biases.iter().enumerate() {
        if g.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteGradient { layer: idx });
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    let sign = match direction {
        Direction::Descend => 1.0,
        Direction::Ascend => -1.0,
    };
    let (b1, b2, lr, eps) = (state.beta1, state.beta2, state.lr, state.eps_hat);

    for (idx, layer) in net.layers.iter_mut().enumerate() {
        let gw = &grads.weights[idx];
        let m = &mut state.m_weights[idx];
        let v = &mut state.v_weights[idx];
        ndarray::Zip::from(&mut layer.weight)
            .and(m)
            .and(v)
            .and(gw)
            .for_each(|w, m, v, &g| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *w -= sign * lr * m_hat / (v_hat.sqrt() + eps);
            });
        let gb = &grads.biases[idx];
        let mb = &mut state.m_biases[idx];
        let vb = &mut state.v_biases[idx];
        ndarray::Zip::from(&mut layer.bias)
            .and(mb)
            .and(vb)
            .and(gb)
            .for_each(|w, m, v, &g| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *w -= sign * lr * m_hat / (v_hat.sqrt() + eps);
            });
    }
    net.version += 1;
    Ok(())
}

/// Samples a `batch x dim` matrix of standard normal noise.
pub fn sample_noise(rng: &mut ChaCha8Rng, batch: usize, dim: usize) -> Array2<f64> {
    Array2::from_shape_fn((batch, dim), |_| StandardNormal.sample(rng))
}

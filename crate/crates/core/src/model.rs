//! Flat-parameter classifiers (softmax regression and ReLU MLPs) with
//! hand-written backpropagation, utility evaluation and local SGD.
//!
//! Parameter layout: for each layer, the `out x in` weight matrix in
//! row-major order followed by the `out` biases. Softmax regression is the
//! MLP with no hidden layers.

use std::ops::{Add, Index, Sub};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{config, contract, Result};
use crate::rng::{self, Purpose};

/// Flat model parameters (or a displacement between two models).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &ParamVector) {
        debug_assert_eq!(self.dim(), other.dim());
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += alpha * b;
        }
    }

    pub fn scaled(&self, alpha: f64) -> ParamVector {
        ParamVector(self.0.iter().map(|x| alpha * x).collect())
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }
}

impl Index<usize> for ParamVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl Add for &ParamVector {
    type Output = ParamVector;
    fn add(self, rhs: &ParamVector) -> ParamVector {
        ParamVector(self.0.iter().zip(&rhs.0).map(|(a, b)| a + b).collect())
    }
}

impl Sub for &ParamVector {
    type Output = ParamVector;
    fn sub(self, rhs: &ParamVector) -> ParamVector {
        ParamVector(self.0.iter().zip(&rhs.0).map(|(a, b)| a - b).collect())
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    LogisticRegression,
    Mlp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Hidden layer widths; ignored for logistic regression.
    #[serde(default)]
    pub layer_widths: Vec<usize>,
    pub input_dim: usize,
    pub num_classes: usize,
    #[serde(default = "default_activation")]
    pub activation: Activation,
}

fn default_activation() -> Activation {
    Activation::Relu
}

impl ModelSpec {
    pub fn logistic(input_dim: usize, num_classes: usize) -> Self {
        Self {
            kind: ModelKind::LogisticRegression,
            layer_widths: Vec::new(),
            input_dim,
            num_classes,
            activation: Activation::Relu,
        }
    }

    pub fn mlp(input_dim: usize, hidden: &[usize], num_classes: usize) -> Self {
        Self {
            kind: ModelKind::Mlp,
            layer_widths: hidden.to_vec(),
            input_dim,
            num_classes,
            activation: Activation::Relu,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(config("model input_dim must be positive"));
        }
        if self.num_classes < 2 {
            return Err(config("model needs at least 2 classes"));
        }
        if self.kind == ModelKind::Mlp {
            if self.layer_widths.is_empty() {
                return Err(config("an MLP needs at least one hidden layer"));
            }
            if self.layer_widths.contains(&0) {
                return Err(config("MLP layer widths must be positive"));
            }
        }
        Ok(())
    }

    /// Layer sizes from input to output.
    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim];
        if self.kind == ModelKind::Mlp {
            dims.extend_from_slice(&self.layer_widths);
        }
        dims.push(self.num_classes);
        dims
    }

    pub fn param_dim(&self) -> usize {
        self.layer_dims().windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    fn check(&self, model: &ParamVector, data: &Dataset) -> Result<()> {
        if model.dim() != self.param_dim() {
            return Err(contract(format!(
                "model has {} parameters, spec expects {}",
                model.dim(),
                self.param_dim()
            )));
        }
        if data.num_features != self.input_dim {
            return Err(contract(format!(
                "data has {} features, model expects {}",
                data.num_features, self.input_dim
            )));
        }
        if data.is_empty() {
            return Err(contract("dataset is empty"));
        }
        Ok(())
    }
}

/// Scalar utility of a model on held-out data. Both variants are "higher is better".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UtilitySpec {
    /// Negated mean cross-entropy.
    NegLoss,
    /// Fraction of rows whose argmax prediction (lowest index on ties) is correct.
    Accuracy,
}

/// Glorot-uniform weights and zero biases.
pub fn init_model(spec: &ModelSpec, seed: u64) -> Result<ParamVector> {
    spec.validate()?;
    let mut rng = rng::stream(seed, Purpose::ModelInit, 0, 0);
    let mut params = Vec::with_capacity(spec.param_dim());
    for w in spec.layer_dims().windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        for _ in 0..fan_in * fan_out {
            params.push(rng.random_range(-limit..limit));
        }
        params.extend(std::iter::repeat_n(0.0, fan_out));
    }
    Ok(ParamVector(params))
}

/// Forward pass of one row. Returns per-layer activations, the last entry
/// holding the logits.
fn forward(dims: &[usize], params: &[f64], x: &[f64]) -> Vec<Vec<f64>> {
    let mut acts = vec![x.to_vec()];
    let mut offset = 0;
    let layers = dims.len() - 1;
    for l in 0..layers {
        let (n_in, n_out) = (dims[l], dims[l + 1]);
        let weights = &params[offset..offset + n_in * n_out];
        let bias = &params[offset + n_in * n_out..offset + n_in * n_out + n_out];
        offset += n_in * n_out + n_out;
        let input = &acts[l];
        let mut out: Vec<f64> = (0..n_out)
            .map(|o| {
                let row = &weights[o * n_in..(o + 1) * n_in];
                bias[o] + row.iter().zip(input).map(|(w, a)| w * a).sum::<f64>()
            })
            .collect();
        if l + 1 < layers {
            out.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        acts.push(out);
    }
    acts
}

/// Stable log-softmax.
fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Mean cross-entropy of `model` on the rows `rows` of `data`, and its gradient.
pub fn loss_and_gradient(
    model: &ParamVector,
    spec: &ModelSpec,
    data: &Dataset,
    rows: &[usize],
) -> Result<(f64, ParamVector)> {
    spec.check(model, data)?;
    let dims = spec.layer_dims();
    let mut grad = vec![0.0; model.dim()];
    let mut loss = 0.0;
    for &r in rows {
        loss += accumulate_row(&dims, &model.0, data.row(r), data.labels[r], &mut grad);
    }
    let inv = 1.0 / rows.len() as f64;
    grad.iter_mut().for_each(|g| *g *= inv);
    Ok((loss * inv, ParamVector(grad)))
}

/// Adds the cross-entropy gradient of one row into `grad`; returns the row loss.
fn accumulate_row(dims: &[usize], params: &[f64], x: &[f64], y: usize, grad: &mut [f64]) -> f64 {
    let acts = forward(dims, params, x);
    let logp = log_softmax(acts.last().expect("at least one layer"));
    let loss = -logp[y];
    // d loss / d logits = softmax - onehot
    let mut delta: Vec<f64> = logp.iter().map(|l| l.exp()).collect();
    delta[y] -= 1.0;

    let layers = dims.len() - 1;
    let mut offsets = Vec::with_capacity(layers);
    let mut off = 0;
    for l in 0..layers {
        offsets.push(off);
        off += dims[l] * dims[l + 1] + dims[l + 1];
    }
    for l in (0..layers).rev() {
        let (n_in, n_out) = (dims[l], dims[l + 1]);
        let w_off = offsets[l];
        let b_off = w_off + n_in * n_out;
        let input = &acts[l];
        for o in 0..n_out {
            let d = delta[o];
            if d == 0.0 {
                continue;
            }
            let row = &mut grad[w_off + o * n_in..w_off + (o + 1) * n_in];
            for (g, a) in row.iter_mut().zip(input) {
                *g += d * a;
            }
            grad[b_off + o] += d;
        }
        if l > 0 {
            let weights = &params[w_off..w_off + n_in * n_out];
            let mut prev = vec![0.0; n_in];
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                for (p, w) in prev.iter_mut().zip(&weights[o * n_in..(o + 1) * n_in]) {
                    *p += d * w;
                }
            }
            // ReLU derivative on the hidden activation
            for (p, a) in prev.iter_mut().zip(input) {
                if *a <= 0.0 {
                    *p = 0.0;
                }
            }
            delta = prev;
        }
    }
    loss
}

/// Evaluates `utility` of `model` on `data`. Pure.
pub fn evaluate_utility(
    model: &ParamVector,
    spec: &ModelSpec,
    data: &Dataset,
    utility: UtilitySpec,
) -> Result<f64> {
    spec.check(model, data)?;
    let dims = spec.layer_dims();
    let n = data.len();
    match utility {
        UtilitySpec::NegLoss => {
            let total: f64 = (0..n)
                .map(|r| {
                    let acts = forward(&dims, &model.0, data.row(r));
                    -log_softmax(acts.last().unwrap())[data.labels[r]]
                })
                .sum();
            Ok(-(total / n as f64))
        }
        UtilitySpec::Accuracy => {
            let correct = (0..n)
                .filter(|&r| {
                    let acts = forward(&dims, &model.0, data.row(r));
                    argmax(acts.last().unwrap()) == data.labels[r]
                })
                .count();
            Ok(correct as f64 / n as f64)
        }
    }
}

/// Local optimisation settings for one client update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub local_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            local_epochs: 10,
            batch_size: 64,
            learning_rate: 0.05,
        }
    }
}

/// Runs `cfg.local_epochs` passes of mini-batch SGD on cross-entropy from
/// `global` and returns the displacement `trained - global`.
///
/// Each pass draws a fresh row permutation from the stream seeded by `seed`;
/// batches are consecutive chunks of that permutation (the last may be short).
pub fn local_train(
    global: &ParamVector,
    spec: &ModelSpec,
    data: &Dataset,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<ParamVector> {
    spec.check(global, data)?;
    if cfg.local_epochs == 0 || cfg.learning_rate == 0.0 {
        return Ok(ParamVector::zeros(global.dim()));
    }
    let batch = cfg.batch_size.max(1);
    let mut rng = rng::stream(seed, Purpose::LocalTraining, 0, 0);
    let mut model = global.clone();
    let mut order: Vec<usize> = (0..data.len()).collect();
    for _ in 0..cfg.local_epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            let (_, grad) = loss_and_gradient(&model, spec, data, chunk)?;
            model.axpy(-cfg.learning_rate, &grad);
        }
    }
    Ok(&model - global)
}

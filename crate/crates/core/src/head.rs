//! Softmax classification head trained over frozen embeddings with
//! mean cross-entropy and bias-corrected Adam.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{embed, EmbeddingError, EmbeddingProvider, EmbeddingVector};
use crate::taxonomy::IsicCode;

#[derive(Debug, Error)]
pub enum HeadError {
    #[error("dimension mismatch: head expects {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite input")]
    NonFinite,
    #[error("non-finite gradient entry")]
    NonFiniteGradient,
    #[error("duplicate label {0}")]
    DuplicateLabel(String),
    #[error("empty label list")]
    NoLabels,
    #[error("dimension must be at least 1")]
    ZeroDimension,
    #[error("class index {index} out of range for {classes} classes")]
    IndexOutOfRange { index: usize, classes: usize },
    #[error("label {0} is not in the head's label list")]
    UnknownLabel(String),
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("top_n must be at least 1")]
    ZeroTopN,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

fn default_learning_rate() -> f64 {
    0.001
}
fn default_epochs() -> usize {
    30
}
fn default_batch_size() -> usize {
    32
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_epsilon() -> f64 {
    1e-8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_beta1")]
    pub adam_beta1: f64,
    #[serde(default = "default_beta2")]
    pub adam_beta2: f64,
    #[serde(default = "default_epsilon")]
    pub adam_epsilon: f64,
    #[serde(default)]
    pub shuffle_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: default_learning_rate(),
            epochs: default_epochs(),
            batch_size: default_batch_size(),
            adam_beta1: default_beta1(),
            adam_beta2: default_beta2(),
            adam_epsilon: default_epsilon(),
            shuffle_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), HeadError> {
        let bad = |m: &str| Err(HeadError::InvalidConfig(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.epochs < 1 {
            return bad("epochs must be at least 1");
        }
        if self.batch_size < 1 {
            return bad("batch_size must be at least 1");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("adam betas must lie in [0, 1)");
        }
        if !(self.adam_epsilon > 0.0 && self.adam_epsilon.is_finite()) {
            return bad("adam_epsilon must be positive");
        }
        Ok(())
    }
}

/// Affine map `W x + b` followed by softmax. `weights` is row-major `|K| x d`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadWeights {
    pub labels: Vec<IsicCode>,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub provider_id: String,
    pub dim: usize,
}

/// Gradient (or moment) buffers shaped like a head's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub d_weights: Vec<f64>,
    pub d_bias: Vec<f64>,
}

impl Gradients {
    pub fn zeros(classes: usize, dim: usize) -> Self {
        Gradients {
            d_weights: vec![0.0; classes * dim],
            d_bias: vec![0.0; classes],
        }
    }
}

pub fn init_head(
    dim: usize,
    labels: &[IsicCode],
    provider_id: &str,
) -> Result<HeadWeights, HeadError> {
    if dim == 0 {
        return Err(HeadError::ZeroDimension);
    }
    if labels.is_empty() {
        return Err(HeadError::NoLabels);
    }
    let mut seen = HashSet::new();
    if let Some(dup) = labels.iter().find(|l| !seen.insert(*l)) {
        return Err(HeadError::DuplicateLabel(dup.to_string()));
    }
    Ok(HeadWeights {
        labels: labels.to_vec(),
        weights: vec![0.0; labels.len() * dim],
        bias: vec![0.0; labels.len()],
        provider_id: provider_id.to_string(),
        dim,
    })
}

/// Numerically stable softmax (max-logit subtraction).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

impl HeadWeights {
    pub fn classes(&self) -> usize {
        self.labels.len()
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.weights[k * self.dim..(k + 1) * self.dim]
    }

    pub fn label_index(&self, code: &IsicCode) -> Option<usize> {
        self.labels.iter().position(|l| l == code)
    }

    pub fn check_shape(&self) -> Result<(), HeadError> {
        let k = self.labels.len();
        if k == 0 {
            return Err(HeadError::NoLabels);
        }
        if self.dim == 0 {
            return Err(HeadError::ZeroDimension);
        }
        if self.weights.len() != k * self.dim || self.bias.len() != k {
            return Err(HeadError::Shape(format!(
                "{k} labels x dim {} needs {} weights and {k} biases, found {} and {}",
                self.dim,
                k * self.dim,
                self.weights.len(),
                self.bias.len()
            )));
        }
        if self
            .weights
            .iter()
            .chain(&self.bias)
            .any(|v| !v.is_finite())
        {
            return Err(HeadError::NonFinite);
        }
        let mut seen = HashSet::new();
        if let Some(dup) = self.labels.iter().find(|l| !seen.insert(*l)) {
            return Err(HeadError::DuplicateLabel(dup.to_string()));
        }
        Ok(())
    }

    fn check_input(&self, x: &[f64]) -> Result<(), HeadError> {
        if x.len() != self.dim {
            return Err(HeadError::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(HeadError::NonFinite);
        }
        Ok(())
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>, HeadError> {
        self.check_input(x)?;
        Ok((0..self.classes())
            .map(|k| self.row(k).iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias[k])
            .collect())
    }

    /// Class probabilities `softmax(W x + b)`.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, HeadError> {
        Ok(softmax(&self.logits(x)?))
    }

    /// Labels with probabilities, highest first; equal probabilities rank by code.
    pub fn rank(&self, x: &[f64], top_n: usize) -> Result<Vec<(IsicCode, f64)>, HeadError> {
        if top_n == 0 {
            return Err(HeadError::ZeroTopN);
        }
        let probs = self.forward(x)?;
        let mut order: Vec<usize> = (0..self.classes()).collect();
        order.sort_by(|&a, &b| {
            probs[b]
                .total_cmp(&probs[a])
                .then_with(|| self.labels[a].cmp(&self.labels[b]))
        });
        Ok(order
            .into_iter()
            .take(top_n)
            .map(|k| (self.labels[k].clone(), probs[k]))
            .collect())
    }
}

/// Negative log-probability of the true class, with `p` floored at 1e-15.
pub fn cross_entropy(probabilities: &[f64], true_index: usize) -> Result<f64, HeadError> {
    let p = probabilities
        .get(true_index)
        .ok_or(HeadError::IndexOutOfRange {
            index: true_index,
            classes: probabilities.len(),
        })?;
    Ok(-p.max(1e-15).ln())
}

/// Closed-form gradient of the cross-entropy for one example:
/// `db = p - onehot`, `dW = outer(db, x)`.
pub fn gradients(
    weights: &HeadWeights,
    x: &[f64],
    true_index: usize,
) -> Result<Gradients, HeadError> {
    if true_index >= weights.classes() {
        return Err(HeadError::IndexOutOfRange {
            index: true_index,
            classes: weights.classes(),
        });
    }
    let mut err = weights.forward(x)?;
    err[true_index] -= 1.0;
    let d_weights = err
        .iter()
        .flat_map(|e| x.iter().map(move |v| e * v))
        .collect();
    Ok(Gradients {
        d_weights,
        d_bias: err,
    })
}

/// Mean loss and mean gradient over a batch of `(x, true_index)` pairs.
pub fn batch_gradients(
    weights: &HeadWeights,
    batch: &[(&[f64], usize)],
) -> Result<(f64, Gradients), HeadError> {
    let mut total = Gradients::zeros(weights.classes(), weights.dim);
    let mut loss = 0.0;
    for &(x, k) in batch {
        let probs = weights.forward(x)?;
        loss += cross_entropy(&probs, k)?;
        let g = gradients(weights, x, k)?;
        for (a, b) in total.d_weights.iter_mut().zip(&g.d_weights) {
            *a += b;
        }
        for (a, b) in total.d_bias.iter_mut().zip(&g.d_bias) {
            *a += b;
        }
    }
    let scale = 1.0 / batch.len() as f64;
    total.d_weights.iter_mut().for_each(|v| *v *= scale);
    total.d_bias.iter_mut().for_each(|v| *v *= scale);
    Ok((loss * scale, total))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first: Gradients,
    pub second: Gradients,
    pub step: u64,
}

impl AdamState {
    pub fn new(weights: &HeadWeights) -> Self {
        AdamState {
            first: Gradients::zeros(weights.classes(), weights.dim),
            second: Gradients::zeros(weights.classes(), weights.dim),
            step: 0,
        }
    }
}

fn adam_update(
    params: &mut [f64],
    m: &mut [f64],
    v: &mut [f64],
    grads: &[f64],
    config: &TrainConfig,
    step: u64,
) {
    let (b1, b2) = (config.adam_beta1, config.adam_beta2);
    let c1 = 1.0 - b1.powi(step as i32);
    let c2 = 1.0 - b2.powi(step as i32);
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = b1 * m[i] + (1.0 - b1) * g;
        v[i] = b2 * v[i] + (1.0 - b2) * g * g;
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        params[i] -= config.learning_rate * m_hat / (v_hat.sqrt() + config.adam_epsilon);
    }
}

/// One bias-corrected Adam step applied in place to weights and state.
pub fn adam_step(
    weights: &mut HeadWeights,
    state: &mut AdamState,
    grads: &Gradients,
    config: &TrainConfig,
) -> Result<(), HeadError> {
    let expect = (weights.weights.len(), weights.bias.len());
    for (what, got) in [
        ("gradient", (grads.d_weights.len(), grads.d_bias.len())),
        (
            "first moment",
            (state.first.d_weights.len(), state.first.d_bias.len()),
        ),
        (
            "second moment",
            (state.second.d_weights.len(), state.second.d_bias.len()),
        ),
    ] {
        if got != expect {
            return Err(HeadError::Shape(format!(
                "{what} shape {got:?} vs parameters {expect:?}"
            )));
        }
    }
    if grads
        .d_weights
        .iter()
        .chain(&grads.d_bias)
        .any(|g| !g.is_finite())
    {
        return Err(HeadError::NonFiniteGradient);
    }
    state.step += 1;
    adam_update(
        &mut weights.weights,
        &mut state.first.d_weights,
        &mut state.second.d_weights,
        &grads.d_weights,
        config,
        state.step,
    );
    adam_update(
        &mut weights.bias,
        &mut state.first.d_bias,
        &mut state.second.d_bias,
        &grads.d_bias,
        config,
        state.step,
    );
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub step_losses: Vec<f64>,
    pub epoch_train_loss: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub epoch_eval_accuracy: Vec<f64>,
}

/// Embedded examples with their labels.
pub type LabeledVectors = [(EmbeddingVector, IsicCode)];

fn to_indexed<'a>(
    weights: &HeadWeights,
    data: &'a LabeledVectors,
) -> Result<Vec<(&'a [f64], usize)>, HeadError> {
    data.iter()
        .map(|(x, label)| {
            if x.dim() != weights.dim {
                return Err(HeadError::DimensionMismatch {
                    expected: weights.dim,
                    got: x.dim(),
                });
            }
            let k = weights
                .label_index(label)
                .ok_or_else(|| HeadError::UnknownLabel(label.to_string()))?;
            Ok((x.as_slice(), k))
        })
        .collect()
}

fn indexed_accuracy(weights: &HeadWeights, data: &[(&[f64], usize)]) -> Result<f64, HeadError> {
    let mut correct = 0usize;
    for &(x, k) in data {
        if weights.rank(x, 1)?[0].0 == weights.labels[k] {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

/// Top-1 accuracy of `weights` on embedded, labeled data.
pub fn head_accuracy(weights: &HeadWeights, data: &LabeledVectors) -> Result<f64, HeadError> {
    if data.is_empty() {
        return Err(HeadError::EmptyTrainingSet);
    }
    indexed_accuracy(weights, &to_indexed(weights, data)?)
}

/// Mini-batch Adam training from a zero-initialized head.
///
/// Batches are drawn from a permutation reshuffled every epoch by a
/// `ChaCha8Rng` seeded with `config.shuffle_seed`. Each recorded step loss
/// is the batch's mean loss before that step's update.
pub fn train_head(
    train: &LabeledVectors,
    labels: &[IsicCode],
    provider_id: &str,
    config: &TrainConfig,
    eval: Option<&LabeledVectors>,
) -> Result<(HeadWeights, TrainHistory), HeadError> {
    config.validate()?;
    let dim = train.first().ok_or(HeadError::EmptyTrainingSet)?.0.dim();
    let mut weights = init_head(dim, labels, provider_id)?;
    let data = to_indexed(&weights, train)?;
    let eval = match eval {
        Some(e) if !e.is_empty() => Some(to_indexed(&weights, e)?),
        _ => None,
    };
    let mut state = AdamState::new(&weights);
    let mut rng = ChaCha8Rng::seed_from_u64(config.shuffle_seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = TrainHistory::default();
    let mut batch = Vec::with_capacity(config.batch_size);

    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| data[i]));
            let (loss, grads) = batch_gradients(&weights, &batch)?;
            adam_step(&mut weights, &mut state, &grads, config)?;
            history.step_losses.push(loss);
            epoch_loss += loss * chunk.len() as f64;
        }
        history
            .epoch_train_loss
            .push(epoch_loss / data.len() as f64);
        if let Some(eval) = &eval {
            history
                .epoch_eval_accuracy
                .push(indexed_accuracy(&weights, eval)?);
        }
    }
    Ok((weights, history))
}

/// Embed `text` and rank the head's labels.
pub fn predict<P: EmbeddingProvider + ?Sized>(
    weights: &HeadWeights,
    provider: &P,
    text: &str,
    top_n: usize,
) -> Result<Vec<(IsicCode, f64)>, HeadError> {
    if top_n == 0 {
        return Err(HeadError::ZeroTopN);
    }
    let x = embed(provider, text)?;
    weights.rank(x.as_slice(), top_n)
}

//! The audit target: feed-forward softmax classifiers trained by SGD or
//! DP-SGD, exposing predictions, per-example losses, parameters, and
//! per-example gradients to the attack module.
//!
//! Both trainers drive the same per-example gradient accumulation loop; the
//! DP mechanism only inserts clipping and noise into it. With a zero noise
//! multiplier and the no-clipping sentinel (`clip_norm = +inf`) the DP path
//! executes the exact same float operations as plain SGD, so the two produce
//! bit-identical parameters for equal seeds.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::datasets::LabeledDataset;
use crate::error::{AuditError, Result};
use crate::rng;

/// Hidden-layer nonlinearity. Only the rectifier is supported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
}

/// Parameters of a feed-forward classifier with a softmax head.
///
/// `weights[k]` has shape `layer_sizes[k+1] x layer_sizes[k]`; `biases[k]`
/// has length `layer_sizes[k+1]`. A model with a single weight matrix is a
/// multinomial logistic regression; the attack classifier reuses it.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layer_sizes: Vec<usize>,
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
    activation: Activation,
}

impl MlpModel {
    /// Build a model from explicit parameters, validating all shape and
    /// finiteness invariants.
    pub fn from_parts(
        layer_sizes: Vec<usize>,
        weights: Vec<Array2<f64>>,
        biases: Vec<Array1<f64>>,
    ) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(AuditError::InvalidArgument(
                "need at least an input and an output layer".into(),
            ));
        }
        if layer_sizes.contains(&0) {
            return Err(AuditError::InvalidArgument(
                "layer sizes must be positive".into(),
            ));
        }
        let n_layers = layer_sizes.len() - 1;
        if weights.len() != n_layers || biases.len() != n_layers {
            return Err(AuditError::ShapeMismatch(format!(
                "{} layer sizes imply {} weight matrices, got {} weights / {} biases",
                layer_sizes.len(),
                n_layers,
                weights.len(),
                biases.len()
            )));
        }
        for k in 0..n_layers {
            let (out, inp) = (layer_sizes[k + 1], layer_sizes[k]);
            if weights[k].dim() != (out, inp) {
                return Err(AuditError::ShapeMismatch(format!(
                    "layer {k}: weight shape {:?}, expected ({out}, {inp})",
                    weights[k].dim()
                )));
            }
            if biases[k].len() != out {
                return Err(AuditError::ShapeMismatch(format!(
                    "layer {k}: bias length {}, expected {out}",
                    biases[k].len()
                )));
            }
        }
        let finite = weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && biases.iter().all(|b| b.iter().all(|v| v.is_finite()));
        if !finite {
            return Err(AuditError::Numerical("non-finite model parameter".into()));
        }
        Ok(Self {
            layer_sizes,
            weights,
            biases,
            activation: Activation::Relu,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    /// Number of weight matrices.
    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Array1<f64>] {
        &self.biases
    }

    fn check_batch(&self, batch: ArrayView2<f64>) -> Result<()> {
        if batch.ncols() != self.input_dim() {
            return Err(AuditError::ShapeMismatch(format!(
                "batch has {} features, model expects {}",
                batch.ncols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    fn check_labels(&self, batch: ArrayView2<f64>, labels: &[usize]) -> Result<()> {
        if batch.nrows() != labels.len() {
            return Err(AuditError::ShapeMismatch(format!(
                "{} batch rows vs {} labels",
                batch.nrows(),
                labels.len()
            )));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= self.output_dim()) {
            return Err(AuditError::InvalidLabel(format!(
                "label {l} out of range for {} outputs",
                self.output_dim()
            )));
        }
        Ok(())
    }

    fn all_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }
}

/// DP-SGD mechanism parameters.
///
/// `clip_norm` may be `+inf`, the no-clipping sentinel; that is only legal
/// together with a zero noise multiplier, since the noise stddev is
/// `noise_multiplier * clip_norm`. Epsilon itself is derived later by the
/// accountant from these values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpParams {
    /// Per-example gradient L2 clipping bound, > 0 (possibly infinite).
    #[serde(with = "clip_norm_serde")]
    pub clip_norm: f64,
    /// Ratio of noise stddev to the clipping bound, >= 0.
    pub noise_multiplier: f64,
    /// Failure probability of the (epsilon, delta) guarantee, in (0, 1).
    pub delta: f64,
}

impl DpParams {
    pub fn validate(&self) -> Result<()> {
        if self.clip_norm.is_nan() || self.clip_norm <= 0.0 {
            return Err(AuditError::InvalidArgument(
                "clip_norm must be positive".into(),
            ));
        }
        if !self.noise_multiplier.is_finite() || self.noise_multiplier < 0.0 {
            return Err(AuditError::InvalidArgument(
                "noise_multiplier must be finite and non-negative".into(),
            ));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(AuditError::InvalidArgument(
                "delta must be in (0, 1)".into(),
            ));
        }
        if self.noise_multiplier > 0.0 && self.clip_norm.is_infinite() {
            return Err(AuditError::InvalidArgument(
                "clip_norm = inf with a positive noise multiplier leaves the noise stddev undefined"
                    .into(),
            ));
        }
        Ok(())
    }
}

// JSON has no infinity literal, so the no-clipping sentinel is written as
// the string "inf".
mod clip_norm_serde {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum NumberOrInf {
        Number(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        match NumberOrInf::deserialize(d)? {
            NumberOrInf::Number(v) => Ok(v),
            NumberOrInf::Text(t) if t == "inf" => Ok(f64::INFINITY),
            NumberOrInf::Text(t) => Err(de::Error::custom(format!(
                "clip_norm must be a number or \"inf\", got \"{t}\""
            ))),
        }
    }
}

/// Hyperparameters for one training run. The mitigation knobs an auditor
/// turns (regularization, batch size, DP) all live here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    #[serde(default)]
    pub l2_coefficient: f64,
    pub seed: u64,
    #[serde(default)]
    pub dp: Option<DpParams>,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(AuditError::InvalidArgument(
                "learning_rate must be positive and finite".into(),
            ));
        }
        if self.epochs == 0 {
            return Err(AuditError::InvalidArgument("epochs must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(AuditError::InvalidArgument(
                "batch_size must be at least 1".into(),
            ));
        }
        if !self.l2_coefficient.is_finite() || self.l2_coefficient < 0.0 {
            return Err(AuditError::InvalidArgument(
                "l2_coefficient must be finite and non-negative".into(),
            ));
        }
        if let Some(dp) = &self.dp {
            dp.validate()?;
        }
        Ok(())
    }
}

/// Per-epoch mean loss and accuracy, measured on the training subset after
/// each epoch's updates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epoch_loss: Vec<f64>,
    pub epoch_accuracy: Vec<f64>,
}

/// Parameter gradients, same shapes as the model they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl Gradients {
    pub fn zeros_like(model: &MlpModel) -> Self {
        Self {
            weights: model.weights.iter().map(|w| Array2::zeros(w.dim())).collect(),
            biases: model.biases.iter().map(|b| Array1::zeros(b.len())).collect(),
        }
    }

    /// L2 norm over all coordinates (weights and biases together).
    pub fn l2_norm(&self) -> f64 {
        let mut sum = 0.0;
        for w in &self.weights {
            for v in w.iter() {
                sum += v * v;
            }
        }
        for b in &self.biases {
            for v in b.iter() {
                sum += v * v;
            }
        }
        sum.sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for w in &mut self.weights {
            w.mapv_inplace(|v| v * factor);
        }
        for b in &mut self.biases {
            b.mapv_inplace(|v| v * factor);
        }
    }

    fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            *a += b;
        }
    }
}

/// Initialize a rectifier MLP: weights from a zero-mean Gaussian with
/// stddev `sqrt(2 / fan_in)`, biases zero. Deterministic given the seed.
pub fn init_mlp(layer_sizes: &[usize], seed: u64) -> Result<MlpModel> {
    if layer_sizes.len() < 2 {
        return Err(AuditError::InvalidArgument(
            "need at least an input and an output layer".into(),
        ));
    }
    if layer_sizes.contains(&0) {
        return Err(AuditError::InvalidArgument(
            "layer sizes must be positive".into(),
        ));
    }
    let mut rng = rng::stream(seed, "init", 0);
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for k in 0..layer_sizes.len() - 1 {
        let (out, inp) = (layer_sizes[k + 1], layer_sizes[k]);
        let stddev = (2.0 / inp as f64).sqrt();
        let mut w = Array2::<f64>::zeros((out, inp));
        w.mapv_inplace(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            stddev * z
        });
        weights.push(w);
        biases.push(Array1::zeros(out));
    }
    MlpModel::from_parts(layer_sizes.to_vec(), weights, biases)
}

fn relu_mask(a: &Array2<f64>) -> Array2<f64> {
    a.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 })
}

/// Hidden activations (post-rectifier) and output logits for a batch.
fn forward_pass(model: &MlpModel, batch: ArrayView2<f64>) -> (Vec<Array2<f64>>, Array2<f64>) {
    let n_layers = model.n_layers();
    let mut hidden: Vec<Array2<f64>> = Vec::with_capacity(n_layers - 1);
    let mut current = batch.to_owned();
    for k in 0..n_layers - 1 {
        let z = current.dot(&model.weights[k].t()) + &model.biases[k];
        let a = z.mapv(|v| v.max(0.0));
        hidden.push(a.clone());
        current = a;
    }
    let logits = current.dot(&model.weights[n_layers - 1].t()) + &model.biases[n_layers - 1];
    (hidden, logits)
}

/// Row-wise softmax with max-subtraction.
fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut probs = logits.clone();
    for mut row in probs.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    probs
}

/// Log-probability of each row's true class, computed via log-softmax so it
/// stays finite even when the softmax underflows.
fn true_class_log_probs(logits: &Array2<f64>, labels: &[usize]) -> Vec<f64> {
    logits
        .rows()
        .into_iter()
        .zip(labels)
        .map(|(row, &y)| {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            row[y] - max - lse
        })
        .collect()
}

/// Softmax class probabilities for a batch, one row per input.
pub fn forward(model: &MlpModel, batch: ArrayView2<f64>) -> Result<Array2<f64>> {
    model.check_batch(batch)?;
    let (_, logits) = forward_pass(model, batch);
    Ok(softmax_rows(&logits))
}

/// Mean cross-entropy (plus `l2/2 * ||weights||^2` when `l2 > 0`) and its
/// exact gradient for a batch.
pub fn loss_and_grads(
    model: &MlpModel,
    batch: ArrayView2<f64>,
    labels: &[usize],
    l2_coefficient: f64,
) -> Result<(f64, Gradients)> {
    model.check_batch(batch)?;
    model.check_labels(batch, labels)?;
    if labels.is_empty() {
        return Err(AuditError::EmptyDataset("empty batch".into()));
    }
    let n = labels.len() as f64;
    let (hidden, logits) = forward_pass(model, batch);
    let log_probs = true_class_log_probs(&logits, labels);
    let mut loss = -log_probs.iter().sum::<f64>() / n;
    if l2_coefficient > 0.0 {
        let sq: f64 = model.weights.iter().map(|w| w.iter().map(|v| v * v).sum::<f64>()).sum();
        loss += l2_coefficient * sq / 2.0;
    }

    // dL/dz at the softmax: (p - onehot) / n
    let mut dz = softmax_rows(&logits);
    for (i, &y) in labels.iter().enumerate() {
        dz[[i, y]] -= 1.0;
    }
    dz.mapv_inplace(|v| v / n);

    let n_layers = model.n_layers();
    let mut d_weights: Vec<Array2<f64>> = vec![Array2::zeros((0, 0)); n_layers];
    let mut d_biases: Vec<Array1<f64>> = vec![Array1::zeros(0); n_layers];
    for k in (0..n_layers).rev() {
        let a_prev = if k == 0 { batch } else { hidden[k - 1].view() };
        d_weights[k] = dz.t().dot(&a_prev);
        d_biases[k] = dz.sum_axis(Axis(0));
        if k > 0 {
            let da = dz.dot(&model.weights[k]);
            dz = da * relu_mask(&hidden[k - 1]);
        }
    }
    if l2_coefficient > 0.0 {
        for (dw, w) in d_weights.iter_mut().zip(&model.weights) {
            dw.zip_mut_with(w, |d, &v| *d += l2_coefficient * v);
        }
    }
    Ok((
        loss,
        Gradients {
            weights: d_weights,
            biases: d_biases,
        },
    ))
}

/// Single-example forward pass returning hidden activations and logits.
fn forward_example(model: &MlpModel, record: ArrayView1<f64>) -> (Vec<Array1<f64>>, Array1<f64>) {
    let n_layers = model.n_layers();
    let mut hidden: Vec<Array1<f64>> = Vec::with_capacity(n_layers - 1);
    let mut current = record.to_owned();
    for k in 0..n_layers - 1 {
        let z = model.weights[k].dot(&current) + &model.biases[k];
        let a = z.mapv(|v| v.max(0.0));
        hidden.push(a.clone());
        current = a;
    }
    let logits = model.weights[n_layers - 1].dot(&current) + &model.biases[n_layers - 1];
    (hidden, logits)
}

fn log_softmax_at(logits: &Array1<f64>, y: usize) -> f64 {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = logits.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    logits[y] - max - lse
}

/// Cross-entropy loss of one record under the model, the black-box loss
/// observable. No l2 term, no averaging.
pub fn per_example_loss(model: &MlpModel, record: ArrayView1<f64>, label: usize) -> Result<f64> {
    if record.len() != model.input_dim() {
        return Err(AuditError::ShapeMismatch(format!(
            "record has {} features, model expects {}",
            record.len(),
            model.input_dim()
        )));
    }
    if label >= model.output_dim() {
        return Err(AuditError::InvalidLabel(format!(
            "label {label} out of range for {} outputs",
            model.output_dim()
        )));
    }
    let (_, logits) = forward_example(model, record);
    Ok(-log_softmax_at(&logits, label))
}

/// Exact gradient of one example's cross-entropy loss. No l2, no averaging.
pub fn per_example_gradient(
    model: &MlpModel,
    record: ArrayView1<f64>,
    label: usize,
) -> Result<Gradients> {
    if record.len() != model.input_dim() {
        return Err(AuditError::ShapeMismatch(format!(
            "record has {} features, model expects {}",
            record.len(),
            model.input_dim()
        )));
    }
    if label >= model.output_dim() {
        return Err(AuditError::InvalidLabel(format!(
            "label {label} out of range for {} outputs",
            model.output_dim()
        )));
    }
    let (hidden, logits) = forward_example(model, record);

    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut dz = logits.mapv(|v| (v - max).exp());
    let sum = dz.sum();
    dz.mapv_inplace(|v| v / sum);
    dz[label] -= 1.0;

    let n_layers = model.n_layers();
    let mut d_weights: Vec<Array2<f64>> = vec![Array2::zeros((0, 0)); n_layers];
    let mut d_biases: Vec<Array1<f64>> = vec![Array1::zeros(0); n_layers];
    for k in (0..n_layers).rev() {
        let a_prev = if k == 0 { record } else { hidden[k - 1].view() };
        let mut dw = Array2::zeros((dz.len(), a_prev.len()));
        for (i, &d) in dz.iter().enumerate() {
            for (j, &a) in a_prev.iter().enumerate() {
                dw[[i, j]] = d * a;
            }
        }
        d_weights[k] = dw;
        d_biases[k] = dz.clone();
        if k > 0 {
            let da = model.weights[k].t().dot(&dz);
            dz = da * hidden[k - 1].mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
        }
    }
    Ok(Gradients {
        weights: d_weights,
        biases: d_biases,
    })
}

fn evaluate_arrays(model: &MlpModel, x: ArrayView2<f64>, y: &[usize]) -> (f64, f64) {
    let (_, logits) = forward_pass(model, x);
    let log_probs = true_class_log_probs(&logits, y);
    let mean_loss = -log_probs.iter().sum::<f64>() / y.len() as f64;
    let probs = softmax_rows(&logits);
    let correct = probs
        .rows()
        .into_iter()
        .zip(y)
        .filter(|(row, &label)| {
            // argmax with ties broken toward the lowest class index
            let mut best = 0;
            for (c, &p) in row.iter().enumerate() {
                if p > row[best] {
                    best = c;
                }
            }
            best == label
        })
        .count();
    (correct as f64 / y.len() as f64, mean_loss)
}

/// Accuracy (argmax, ties to the lowest class index) and mean cross-entropy
/// over a record subset. No l2 term.
pub fn evaluate(model: &MlpModel, dataset: &LabeledDataset, idx: &[usize]) -> Result<(f64, f64)> {
    if idx.is_empty() {
        return Err(AuditError::EmptyDataset("empty evaluation subset".into()));
    }
    check_subset(dataset, idx)?;
    let x = dataset.rows(idx);
    model.check_batch(x.view())?;
    let y = dataset.labels_at(idx);
    model.check_labels(x.view(), &y)?;
    Ok(evaluate_arrays(model, x.view(), &y))
}

/// `(loss_gap, acc_gap)` where `loss_gap = test_loss - train_loss` and
/// `acc_gap = train_acc - test_acc`. Large positive gaps mark the overfit
/// models most exposed to membership inference.
pub fn generalization_gap(
    model: &MlpModel,
    dataset: &LabeledDataset,
    train_idx: &[usize],
    test_idx: &[usize],
) -> Result<(f64, f64)> {
    let (train_acc, train_loss) = evaluate(model, dataset, train_idx)?;
    let (test_acc, test_loss) = evaluate(model, dataset, test_idx)?;
    Ok((test_loss - train_loss, train_acc - test_acc))
}

fn check_subset(dataset: &LabeledDataset, idx: &[usize]) -> Result<()> {
    if let Some(&i) = idx.iter().find(|&&i| i >= dataset.n_records()) {
        return Err(AuditError::InvalidArgument(format!(
            "index {i} out of range for {} records",
            dataset.n_records()
        )));
    }
    Ok(())
}

/// The shared minibatch loop. `dp` adds clipping/noise; `observe` sees every
/// post-clip per-example gradient norm while clipping is active.
fn run_training(
    model: &MlpModel,
    dataset: &LabeledDataset,
    idx: &[usize],
    config: &TrainConfig,
    dp: Option<&DpParams>,
    mut observe: Option<&mut dyn FnMut(f64)>,
) -> Result<(MlpModel, TrainHistory, usize)> {
    config.validate()?;
    if idx.is_empty() {
        return Err(AuditError::InvalidArgument("empty training data".into()));
    }
    check_subset(dataset, idx)?;
    let x = dataset.rows(idx);
    let y = dataset.labels_at(idx);
    let mut trained = model.clone();
    trained.check_batch(x.view())?;
    trained.check_labels(x.view(), &y)?;
    if trained.output_dim() != dataset.num_classes {
        return Err(AuditError::ShapeMismatch(format!(
            "model outputs {} classes, dataset has {}",
            trained.output_dim(),
            dataset.num_classes
        )));
    }

    // The infinite clip bound means "no clipping" and takes the same code
    // path as plain SGD.
    let clip = dp.and_then(|d| d.clip_norm.is_finite().then_some(d.clip_norm));
    let noise_stddev = dp
        .map(|d| d.noise_multiplier * d.clip_norm)
        .filter(|&s| s > 0.0);

    let n = idx.len();
    let batches_per_epoch = n.div_ceil(config.batch_size);
    let mut shuffle_rng = rng::stream(config.seed, "epoch-shuffle", 0);
    let mut noise_rng = rng::stream(config.seed, "dp-noise", 0);
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = TrainHistory {
        epoch_loss: Vec::with_capacity(config.epochs),
        epoch_accuracy: Vec::with_capacity(config.epochs),
    };

    for _ in 0..config.epochs {
        order.shuffle(&mut shuffle_rng);
        for chunk in order.chunks(config.batch_size) {
            let mut acc = Gradients::zeros_like(&trained);
            for &i in chunk {
                let mut g = per_example_gradient(&trained, x.row(i), y[i])?;
                if let Some(c) = clip {
                    let norm = g.l2_norm();
                    if norm > c {
                        g.scale(c / norm);
                    }
                    if let Some(obs) = observe.as_deref_mut() {
                        obs(g.l2_norm());
                    }
                }
                acc.add_assign(&g);
            }
            if let Some(stddev) = noise_stddev {
                for w in &mut acc.weights {
                    w.mapv_inplace(|v| {
                        let z: f64 = StandardNormal.sample(&mut noise_rng);
                        v + stddev * z
                    });
                }
                for b in &mut acc.biases {
                    b.mapv_inplace(|v| {
                        let z: f64 = StandardNormal.sample(&mut noise_rng);
                        v + stddev * z
                    });
                }
            }
            acc.scale(1.0 / chunk.len() as f64);
            if config.l2_coefficient > 0.0 {
                for (dw, w) in acc.weights.iter_mut().zip(&trained.weights) {
                    dw.zip_mut_with(w, |d, &v| *d += config.l2_coefficient * v);
                }
            }
            for (w, dw) in trained.weights.iter_mut().zip(&acc.weights) {
                w.zip_mut_with(dw, |v, &d| *v -= config.learning_rate * d);
            }
            for (b, db) in trained.biases.iter_mut().zip(&acc.biases) {
                b.zip_mut_with(db, |v, &d| *v -= config.learning_rate * d);
            }
        }
        let (acc_v, loss_v) = evaluate_arrays(&trained, x.view(), &y);
        history.epoch_accuracy.push(acc_v);
        history.epoch_loss.push(loss_v);
    }

    if !trained.all_finite() {
        return Err(AuditError::Numerical(
            "training diverged to non-finite parameters".into(),
        ));
    }
    Ok((trained, history, config.epochs * batches_per_epoch))
}

/// Mini-batch SGD on the given record subset. Rejects configs with DP
/// parameters; use [`train_dp_sgd`] for those.
pub fn train_sgd(
    model: &MlpModel,
    dataset: &LabeledDataset,
    idx: &[usize],
    config: &TrainConfig,
) -> Result<(MlpModel, TrainHistory)> {
    if config.dp.is_some() {
        return Err(AuditError::InvalidArgument(
            "config carries DP parameters; call train_dp_sgd".into(),
        ));
    }
    let (model, history, _) = run_training(model, dataset, idx, config, None, None)?;
    Ok((model, history))
}

/// DP-SGD: per-example gradients clipped to L2 norm `clip_norm`, summed,
/// Gaussian noise of stddev `noise_multiplier * clip_norm` added per
/// coordinate, then averaged and applied. Returns the number of noisy steps
/// taken (`epochs * ceil(n / batch_size)`, partial batches included) for the
/// accountant.
pub fn train_dp_sgd(
    model: &MlpModel,
    dataset: &LabeledDataset,
    idx: &[usize],
    config: &TrainConfig,
) -> Result<(MlpModel, TrainHistory, usize)> {
    let dp = config
        .dp
        .as_ref()
        .ok_or_else(|| AuditError::InvalidArgument("config has no DP parameters".into()))?;
    dp.validate()?;
    run_training(model, dataset, idx, config, Some(dp), None)
}

/// [`train_dp_sgd`] with a hook that observes every post-clip per-example
/// gradient norm, for instrumented verification of the clipping contract.
pub fn train_dp_sgd_traced(
    model: &MlpModel,
    dataset: &LabeledDataset,
    idx: &[usize],
    config: &TrainConfig,
    observe_clipped_norm: &mut dyn FnMut(f64),
) -> Result<(MlpModel, TrainHistory, usize)> {
    let dp = config
        .dp
        .as_ref()
        .ok_or_else(|| AuditError::InvalidArgument("config has no DP parameters".into()))?;
    dp.validate()?;
    run_training(model, dataset, idx, config, Some(dp), Some(observe_clipped_norm))
}

/// Provenance block stored alongside serialized model parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub seed: u64,
    pub config: Option<TrainConfig>,
    pub prng_version: String,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    layer_sizes: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    activation: Activation,
    meta: ModelMeta,
}

/// Write a model as JSON. Parameters round-trip exactly through
/// [`load_model`]: weight matrices are stored flat in row-major order.
pub fn save_model(model: &MlpModel, meta: &ModelMeta, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = ModelFile {
        layer_sizes: model.layer_sizes.clone(),
        weights: model
            .weights
            .iter()
            .map(|w| w.iter().copied().collect())
            .collect(),
        biases: model.biases.iter().map(|b| b.to_vec()).collect(),
        activation: model.activation,
        meta: meta.clone(),
    };
    let json = serde_json::to_string_pretty(&file)?;
    fs::write(path, json).map_err(|e| AuditError::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<(MlpModel, ModelMeta)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| AuditError::io(path, e))?;
    let file: ModelFile = serde_json::from_str(&text)?;
    let n_layers = file.layer_sizes.len().saturating_sub(1);
    if file.weights.len() != n_layers || file.biases.len() != n_layers {
        return Err(AuditError::ShapeMismatch(format!(
            "model file: {} layer sizes vs {} weights / {} biases",
            file.layer_sizes.len(),
            file.weights.len(),
            file.biases.len()
        )));
    }
    let mut weights = Vec::with_capacity(n_layers);
    let mut biases = Vec::with_capacity(n_layers);
    for k in 0..n_layers {
        let (out, inp) = (file.layer_sizes[k + 1], file.layer_sizes[k]);
        let w = Array2::from_shape_vec((out, inp), file.weights[k].clone()).map_err(|_| {
            AuditError::ShapeMismatch(format!(
                "model file: layer {k} has {} weight values, expected {}",
                file.weights[k].len(),
                out * inp
            ))
        })?;
        weights.push(w);
        biases.push(Array1::from_vec(file.biases[k].clone()));
    }
    let model = MlpModel::from_parts(file.layer_sizes, weights, biases)?;
    Ok((model, file.meta))
}

//! The black-box classifier: a ReLU MLP with a sigmoid output, trained by
//! mini-batch SGD with momentum, plus AUC and a versioned JSON model file.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::{Error, Result};

/// Hidden widths of the default architecture.
pub const HIDDEN_WIDTHS: [usize; 3] = [20, 50, 20];
pub const MOMENTUM: f64 = 0.9;
pub const THRESHOLD: f64 = 0.5;
pub const MODEL_FORMAT: &str = "robust-recourse-mlp";
pub const MODEL_VERSION: u32 = 1;

// Largest double below one; keeps the output strictly inside (0, 1).
const PROBA_MAX: f64 = 1.0 - f64::EPSILON / 2.0;

/// Dense layer `y = W x + b`, `W` stored row-major with `n_out` rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn n_out(&self) -> usize {
        self.bias.len()
    }

    fn n_in(&self) -> usize {
        self.weights.len() / self.bias.len().max(1)
    }

    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        let n_in = x.len();
        out.clear();
        out.extend(self.bias.iter().enumerate().map(|(o, b)| {
            let row = &self.weights[o * n_in..(o + 1) * n_in];
            b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
        }));
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    layers: Vec<Layer>,
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(z))` without overflow.
#[inline]
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

impl MlpModel {
    /// Builds a model from explicit layers, checking that shapes chain and
    /// the last layer has one output.
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("model needs at least one layer"));
        }
        for (k, layer) in layers.iter().enumerate() {
            if layer.bias.is_empty() || layer.weights.is_empty() || layer.weights.len() % layer.bias.len() != 0 {
                return Err(Error::invalid(format!("layer {k} has inconsistent shape")));
            }
            if k > 0 && layer.n_in() != layers[k - 1].n_out() {
                return Err(Error::DimensionMismatch {
                    expected: layers[k - 1].n_out(),
                    got: layer.n_in(),
                });
            }
            if layer.weights.iter().chain(&layer.bias).any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("layer {k} has non-finite parameters")));
            }
        }
        if layers.last().map(Layer::n_out) != Some(1) {
            return Err(Error::invalid("last layer must have a single output"));
        }
        Ok(Self { layers })
    }

    /// Glorot-uniform weights and zero biases for the given widths.
    pub fn init(widths: &[usize], seed: u64) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::invalid("widths need an input and an output, all positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = widths
            .windows(2)
            .map(|w| {
                let limit = (6.0 / (w[0] + w[1]) as f64).sqrt();
                Layer {
                    weights: (0..w[0] * w[1]).map(|_| rng.random_range(-limit..=limit)).collect(),
                    bias: vec![0.0; w[1]],
                }
            })
            .collect();
        Self::from_layers(layers)
    }

    /// The 20-50-20 architecture for `p` inputs.
    pub fn default_architecture(p: usize, seed: u64) -> Result<Self> {
        let mut widths = vec![p];
        widths.extend(HIDDEN_WIDTHS);
        widths.push(1);
        Self::init(&widths, seed)
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].n_in()
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim()];
        w.extend(self.layers.iter().map(Layer::n_out));
        w
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    fn logit(&self, x: &[f64]) -> f64 {
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            layer.apply(&cur, &mut next);
            if k < last {
                next.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            std::mem::swap(&mut cur, &mut next);
        }
        cur[0]
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("input must be finite"));
        }
        Ok(())
    }

    /// Probability of the favorable class.
    pub fn predict_proba(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.proba(x))
    }

    pub fn predict_label(&self, x: &[f64]) -> Result<u8> {
        Ok(u8::from(self.predict_proba(x)? >= THRESHOLD))
    }

    /// Unchecked forward pass. Panics if `x` has the wrong length.
    pub fn proba(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.input_dim(), "input dimension");
        sigmoid(self.logit(x)).clamp(f64::MIN_POSITIVE, PROBA_MAX)
    }

    /// Unchecked label at the 0.5 threshold.
    pub fn label(&self, x: &[f64]) -> u8 {
        u8::from(self.proba(x) >= THRESHOLD)
    }

    /// Probability and its gradient with respect to the input.
    pub fn proba_and_input_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.check_dim(x)?;
        let acts = self.forward_all(x);
        let z = acts.last().expect("nonempty")[0];
        let s = sigmoid(z);
        let mut delta = vec![s * (1.0 - s)];
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            let n_in = layer.n_in();
            let mut back = vec![0.0; n_in];
            for (o, d) in delta.iter().enumerate() {
                let row = &layer.weights[o * n_in..(o + 1) * n_in];
                for (b, w) in back.iter_mut().zip(row) {
                    *b += d * w;
                }
            }
            if k > 0 {
                for (b, a) in back.iter_mut().zip(&acts[k]) {
                    if *a <= 0.0 {
                        *b = 0.0;
                    }
                }
            }
            delta = back;
        }
        Ok((s.clamp(f64::MIN_POSITIVE, PROBA_MAX), delta))
    }

    /// Activations: `acts[0] = x`, `acts[k]` the post-ReLU output of layer
    /// `k-1`, and the last entry the raw logit.
    fn forward_all(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let last = self.layers.len() - 1;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        for (k, layer) in self.layers.iter().enumerate() {
            let mut out = Vec::new();
            layer.apply(&acts[k], &mut out);
            if k < last {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(out);
        }
        acts
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Parameters flattened as `W_0, b_0, W_1, b_1, ...`.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend(&l.weights);
            out.extend(&l.bias);
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(Error::DimensionMismatch {
                expected: self.num_params(),
                got: params.len(),
            });
        }
        let mut rest = params;
        for l in &mut self.layers {
            let (w, r) = rest.split_at(l.weights.len());
            l.weights.copy_from_slice(w);
            let (b, r) = r.split_at(l.bias.len());
            l.bias.copy_from_slice(b);
            rest = r;
        }
        Ok(())
    }

    /// Mean binary cross-entropy over `rows` plus `l2 / 2 * |W|^2`
    /// (weights only), with its gradient in [`params`](Self::params) order.
    pub fn loss_and_gradient(&self, features: &[Vec<f64>], labels: &[u8], rows: &[usize], l2: f64) -> (f64, Vec<f64>) {
        let mut grads: Vec<Layer> = self
            .layers
            .iter()
            .map(|l| Layer {
                weights: vec![0.0; l.weights.len()],
                bias: vec![0.0; l.bias.len()],
            })
            .collect();
        let mut loss = 0.0;
        for &i in rows {
            let acts = self.forward_all(&features[i]);
            let z = acts.last().expect("nonempty")[0];
            let y = f64::from(labels[i]);
            loss += softplus(z) - y * z;
            let mut delta = vec![sigmoid(z) - y];
            for k in (0..self.layers.len()).rev() {
                let layer = &self.layers[k];
                let g = &mut grads[k];
                let input = &acts[k];
                let n_in = input.len();
                for (o, d) in delta.iter().enumerate() {
                    g.bias[o] += d;
                    let row = &mut g.weights[o * n_in..(o + 1) * n_in];
                    for (gw, a) in row.iter_mut().zip(input) {
                        *gw += d * a;
                    }
                }
                if k == 0 {
                    break;
                }
                let mut back = vec![0.0; n_in];
                for (o, d) in delta.iter().enumerate() {
                    let row = &layer.weights[o * n_in..(o + 1) * n_in];
                    for (b, w) in back.iter_mut().zip(row) {
                        *b += d * w;
                    }
                }
                for (b, a) in back.iter_mut().zip(input) {
                    if *a <= 0.0 {
                        *b = 0.0;
                    }
                }
                delta = back;
            }
        }
        let scale = 1.0 / rows.len().max(1) as f64;
        loss *= scale;
        let mut flat = Vec::with_capacity(self.num_params());
        for (g, l) in grads.iter().zip(&self.layers) {
            flat.extend(g.weights.iter().zip(&l.weights).map(|(gw, w)| gw * scale + l2 * w));
            flat.extend(g.bias.iter().map(|gb| gb * scale));
            loss += 0.5 * l2 * l.weights.iter().map(|w| w * w).sum::<f64>();
        }
        (loss, flat)
    }

    /// Full-data training loss.
    pub fn loss(&self, data: &Dataset, l2: f64) -> f64 {
        let rows: Vec<usize> = (0..data.len()).collect();
        self.loss_and_gradient_value(&data.features, &data.labels, &rows, l2)
    }

    fn loss_and_gradient_value(&self, features: &[Vec<f64>], labels: &[u8], rows: &[usize], l2: f64) -> f64 {
        let mut loss = 0.0;
        for &i in rows {
            let z = self.logit(&features[i]);
            loss += softplus(z) - f64::from(labels[i]) * z;
        }
        loss /= rows.len().max(1) as f64;
        loss + 0.5 * l2 * self.layers.iter().flat_map(|l| &l.weights).map(|w| w * w).sum::<f64>()
    }

    pub fn accuracy(&self, data: &Dataset) -> f64 {
        let hits = data
            .features
            .iter()
            .zip(&data.labels)
            .filter(|(x, y)| self.label(x) == **y)
            .count();
        hits as f64 / data.len() as f64
    }

    pub fn scores(&self, data: &Dataset) -> Vec<f64> {
        data.features.iter().map(|x| self.proba(x)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub l2_penalty: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 32,
            learning_rate: 0.01,
            seed: 0,
            l2_penalty: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("epochs and batch_size must be positive"));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if !(self.l2_penalty >= 0.0) {
            return Err(Error::invalid("l2_penalty must be non-negative"));
        }
        Ok(())
    }
}

/// Trained model with the per-epoch full-data loss.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: MlpModel,
    /// Loss after each epoch; non-increasing by construction.
    pub loss_trace: Vec<f64>,
    /// Number of epochs whose update was rolled back.
    pub rejected_epochs: usize,
}

pub fn train_mlp(train: &Dataset, cfg: &TrainConfig) -> Result<MlpModel> {
    Ok(train_mlp_traced(train, cfg)?.model)
}

/// Mini-batch SGD with momentum on the 20-50-20 network.
///
/// After each epoch the full training loss is compared with the previous
/// one. An epoch that increased it is undone, the learning rate is halved
/// and the momentum buffer cleared.
pub fn train_mlp_traced(train: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    train.validate()?;
    if train.count_label(0) == 0 || train.count_label(1) == 0 {
        return Err(Error::DegenerateData("training data has a single class".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = MlpModel::default_architecture(train.dim(), rng.random())?;
    let mut params = model.params();
    let mut velocity = vec![0.0; params.len()];
    let mut lr = cfg.learning_rate;
    let mut best = model.loss(train, cfg.l2_penalty);
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut rejected = 0;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut scratch = model.clone();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut trial = params.clone();
        for batch in order.chunks(cfg.batch_size) {
            scratch.set_params(&trial)?;
            let (_, grad) = scratch.loss_and_gradient(&train.features, &train.labels, batch, cfg.l2_penalty);
            for ((v, g), p) in velocity.iter_mut().zip(&grad).zip(trial.iter_mut()) {
                *v = MOMENTUM * *v - lr * g;
                *p += *v;
            }
        }
        scratch.set_params(&trial)?;
        let loss = scratch.loss(train, cfg.l2_penalty);
        if loss.is_finite() && loss <= best {
            params = trial;
            best = loss;
        } else {
            lr *= 0.5;
            velocity.iter_mut().for_each(|v| *v = 0.0);
            rejected += 1;
        }
        trace.push(best);
    }
    model.set_params(&params)?;
    Ok(TrainOutcome {
        model,
        loss_trace: trace,
        rejected_epochs: rejected,
    })
}

/// Area under the ROC curve: the probability that a random positive
/// outscores a random negative, ties counting one half.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: labels.len(),
            got: scores.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("scores must not be NaN"));
    }
    let n_pos = labels.iter().filter(|l| **l == 1).count();
    let n_neg = labels.iter().filter(|l| **l == 0).count();
    if n_pos + n_neg != labels.len() {
        return Err(Error::invalid("labels must be 0 or 1"));
    }
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::DegenerateData("auc needs both classes".into()));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Mid-ranks, 1-based, summed over positives.
    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && scores[idx[end]] == scores[idx[start]] {
            end += 1;
        }
        let mid = 0.5 * ((start + 1) + end) as f64;
        rank_sum += mid * idx[start..end].iter().filter(|&&i| labels[i] == 1).count() as f64;
        start = end;
    }
    let (np, nn) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum - np * (np + 1.0) / 2.0) / (np * nn))
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    widths: Vec<usize>,
    layers: Vec<Layer>,
}

pub fn save_model(model: &MlpModel, path: &Path) -> Result<()> {
    let file = ModelFile {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        widths: model.widths(),
        layers: model.layers.clone(),
    };
    let text = serde_json::to_string(&file)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<MlpModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_model(&text).map_err(|e| match e {
        Error::Malformed { message, .. } => Error::Malformed {
            path: path.to_path_buf(),
            message,
        },
        other => other,
    })
}

/// Parses the model-file JSON text.
pub fn parse_model(text: &str) -> Result<MlpModel> {
    let malformed = |message: String| Error::Malformed {
        path: Default::default(),
        message,
    };
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| malformed(e.to_string()))?;
    if value.get("format").and_then(|f| f.as_str()) != Some(MODEL_FORMAT) {
        return Err(malformed("missing or unknown `format` tag".into()));
    }
    let version = value
        .get("version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| malformed("missing `version`".into()))?;
    if version != u64::from(MODEL_VERSION) {
        return Err(Error::VersionMismatch {
            expected: MODEL_VERSION,
            found: u32::try_from(version).unwrap_or(u32::MAX),
        });
    }
    let file: ModelFile = serde_json::from_value(value).map_err(|e| malformed(e.to_string()))?;
    let model = MlpModel::from_layers(file.layers).map_err(|e| malformed(e.to_string()))?;
    if model.widths() != file.widths {
        return Err(malformed("`widths` disagrees with layer shapes".into()));
    }
    Ok(model)
}

//! The action predictor `f(y, s, π) → Δ(U)`.
//!
//! Inputs are one-hot blocks for the observation and the signal followed by
//! the row-major flattened policy matrix. The network is a plain ReLU
//! multilayer perceptron with a softmax head, trained on cross-entropy with an
//! L2 penalty on the weights (biases are not penalized).

use rand::seq::SliceRandom;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::domain::{argmax, Categorical, Scenario, SignalingPolicy};
use crate::receiver::Dataset;
use crate::{Error, Result};

/// Feature vector fed to the predictor.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoding {
    features: Vec<f64>,
}

impl Encoding {
    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    /// Wraps raw features, e.g. for probing the network off the encoder's range.
    pub fn from_raw(features: Vec<f64>) -> Self {
        Self { features }
    }
}

pub fn input_dim(scenario: &Scenario) -> usize {
    scenario.n_obs() + scenario.n_signals() + scenario.n_states() * scenario.n_signals()
}

pub fn encode(
    scenario: &Scenario,
    obs: usize,
    signal: usize,
    policy: &SignalingPolicy,
) -> Result<Encoding> {
    scenario.check_index("obs", obs)?;
    scenario.check_index("signal", signal)?;
    scenario.check_policy(policy)?;
    let mut features = vec![0.0; scenario.n_obs() + scenario.n_signals()];
    features[obs] = 1.0;
    features[scenario.n_obs() + signal] = 1.0;
    features.extend(policy.rows().iter().flatten());
    Ok(Encoding { features })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Dense {
    in_dim: usize,
    out_dim: usize,
    /// `out_dim × in_dim`, row-major.
    weights: Vec<f64>,
    biases: Vec<f64>,
}

impl Dense {
    fn apply(&self, input: &[f64], out: &mut [f64]) {
        for (o, (row, b)) in out
            .iter_mut()
            .zip(self.weights.chunks_exact(self.in_dim).zip(&self.biases))
        {
            *o = b + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>();
        }
    }
}

/// Whether a forward pass applies dropout.
pub enum Mode<'a> {
    Infer,
    Train(&'a mut dyn RngCore),
}

/// Parameter gradients, laid out like the predictor's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    fn zeros_like(p: &Predictor) -> Self {
        Self {
            weights: p.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            biases: p.layers.iter().map(|l| vec![0.0; l.biases.len()]).collect(),
        }
    }

    fn scale(&mut self, k: f64) {
        for v in self.weights.iter_mut().chain(self.biases.iter_mut()) {
            v.iter_mut().for_each(|g| *g *= k);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predictor {
    layer_dims: Vec<usize>,
    dropout_rate: f64,
    layers: Vec<Dense>,
}

const CHECKPOINT_FORMAT: &str = "persuasion-predictor";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    #[serde(flatten)]
    predictor: Predictor,
}

struct Scratch {
    // activations[0] is the input; activations[l + 1] is layer l's output
    // (post-ReLU and post-dropout for hidden layers, logits for the last)
    activations: Vec<Vec<f64>>,
    masks: Vec<Vec<f64>>,
    deltas: Vec<Vec<f64>>,
}

impl Predictor {
    /// Fresh network with weights uniform in `±1/sqrt(fan_in)` and zero biases.
    pub fn new<R: Rng + ?Sized>(layer_dims: &[usize], dropout_rate: f64, rng: &mut R) -> Result<Self> {
        let mut p = Self::zeros(layer_dims, dropout_rate)?;
        for layer in &mut p.layers {
            let bound = 1.0 / (layer.in_dim as f64).sqrt();
            for w in &mut layer.weights {
                *w = rng.random_range(-bound..bound);
            }
        }
        Ok(p)
    }

    pub fn zeros(layer_dims: &[usize], dropout_rate: f64) -> Result<Self> {
        if layer_dims.len() < 2 || layer_dims.contains(&0) {
            return Err(Error::InvalidParameter(format!(
                "layer dims {layer_dims:?} need an input and an output width, all positive"
            )));
        }
        if !(0.0..1.0).contains(&dropout_rate) {
            return Err(Error::InvalidParameter(format!(
                "dropout rate {dropout_rate} outside [0, 1)"
            )));
        }
        let layers = layer_dims
            .windows(2)
            .map(|w| Dense {
                in_dim: w[0],
                out_dim: w[1],
                weights: vec![0.0; w[0] * w[1]],
                biases: vec![0.0; w[1]],
            })
            .collect();
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            dropout_rate,
            layers,
        })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn dropout_rate(&self) -> f64 {
        self.dropout_rate
    }

    pub fn with_dropout(mut self, rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::InvalidParameter(format!("dropout rate {rate} outside [0, 1)")));
        }
        self.dropout_rate = rate;
        Ok(self)
    }

    pub fn n_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    /// Weights of layer `l`, `out × in` row-major.
    pub fn weights(&self, l: usize) -> &[f64] {
        &self.layers[l].weights
    }

    pub fn biases(&self, l: usize) -> &[f64] {
        &self.layers[l].biases
    }

    pub fn weights_mut(&mut self, l: usize) -> &mut [f64] {
        &mut self.layers[l].weights
    }

    pub fn biases_mut(&mut self, l: usize) -> &mut [f64] {
        &mut self.layers[l].biases
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    /// `Σ w²` over all weights, biases excluded.
    pub fn weight_sq_norm(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| &l.weights)
            .map(|w| w * w)
            .sum()
    }

    fn scratch(&self) -> Scratch {
        Scratch {
            activations: self.layer_dims.iter().map(|&d| vec![0.0; d]).collect(),
            masks: self.layer_dims[1..].iter().map(|&d| vec![1.0; d]).collect(),
            deltas: self.layer_dims[1..].iter().map(|&d| vec![0.0; d]).collect(),
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                what: "encoding length",
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Writes logits into `scratch.activations.last()`.
    fn run(&self, x: &[f64], scratch: &mut Scratch, mut rng: Option<&mut dyn RngCore>) {
        scratch.activations[0].copy_from_slice(x);
        let last = self.layers.len() - 1;
        let keep = 1.0 - self.dropout_rate;
        for (l, layer) in self.layers.iter().enumerate() {
            let (before, after) = scratch.activations.split_at_mut(l + 1);
            let out = &mut after[0];
            layer.apply(&before[l], out);
            if l == last {
                break;
            }
            let mask = &mut scratch.masks[l];
            match rng.as_deref_mut() {
                Some(r) if self.dropout_rate > 0.0 => {
                    for m in mask.iter_mut() {
                        *m = if r.random::<f64>() < keep { 1.0 / keep } else { 0.0 };
                    }
                }
                _ => mask.iter_mut().for_each(|m| *m = 1.0),
            }
            for (o, m) in out.iter_mut().zip(mask.iter()) {
                *o = o.max(0.0) * m;
            }
        }
    }

    fn softmax(logits: &[f64]) -> Vec<f64> {
        let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|z| (z - top).exp()).collect();
        let total: f64 = exps.iter().sum();
        exps.iter().map(|e| e / total).collect()
    }

    /// Action distribution for one encoding. Dropout (with inverted scaling) is
    /// applied only in [`Mode::Train`].
    pub fn forward(&self, encoding: &Encoding, mode: Mode<'_>) -> Result<Categorical> {
        self.check_input(encoding.features())?;
        let mut scratch = self.scratch();
        let rng = match mode {
            Mode::Infer => None,
            Mode::Train(r) => Some(r),
        };
        self.run(encoding.features(), &mut scratch, rng);
        Categorical::new(Self::softmax(scratch.activations.last().unwrap()))
    }

    /// Inference-mode probabilities as a plain vector.
    pub fn probs(&self, encoding: &Encoding) -> Result<Vec<f64>> {
        Ok(self.forward(encoding, Mode::Infer)?.probs().to_vec())
    }

    /// Adds the gradient of `−log p(label)` into `grads`; returns that loss.
    fn backprop(
        &self,
        x: &[f64],
        label: usize,
        scratch: &mut Scratch,
        grads: &mut Gradients,
        rng: Option<&mut dyn RngCore>,
    ) -> f64 {
        self.run(x, scratch, rng);
        let last = self.layers.len() - 1;
        let probs = Self::softmax(&scratch.activations[last + 1]);
        let loss = -probs[label].ln();
        {
            let d = &mut scratch.deltas[last];
            d.copy_from_slice(&probs);
            d[label] -= 1.0;
        }
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let input = &scratch.activations[l];
            let (lower, upper) = scratch.deltas.split_at_mut(l);
            let delta = &upper[0];
            let gw = &mut grads.weights[l];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                grads.biases[l][o] += d;
                for (g, &xi) in gw[o * layer.in_dim..(o + 1) * layer.in_dim].iter_mut().zip(input) {
                    *g += d * xi;
                }
            }
            if l == 0 {
                break;
            }
            // through the previous hidden layer's dropout and ReLU
            let prev = &mut lower[l - 1];
            let act = &scratch.activations[l];
            let mask = &scratch.masks[l - 1];
            for (i, p) in prev.iter_mut().enumerate() {
                if act[i] <= 0.0 {
                    *p = 0.0;
                    continue;
                }
                let mut acc = 0.0;
                for (o, &d) in delta.iter().enumerate() {
                    acc += d * layer.weights[o * layer.in_dim + i];
                }
                *p = acc * mask[i];
            }
        }
        loss
    }

    fn batch_grad(
        &self,
        xs: &[&[f64]],
        labels: &[usize],
        scratch: &mut Scratch,
        mut rng: Option<&mut dyn RngCore>,
    ) -> (f64, Gradients) {
        let mut grads = Gradients::zeros_like(self);
        let mut total = 0.0;
        for (x, &u) in xs.iter().zip(labels) {
            let r = rng.as_mut().map(|r| &mut **r as &mut dyn RngCore);
            total += self.backprop(x, u, scratch, &mut grads, r);
        }
        let n = xs.len() as f64;
        grads.scale(1.0 / n);
        (total / n, grads)
    }

    fn mean_cross_entropy(&self, xs: &[&[f64]], labels: &[usize]) -> f64 {
        let mut scratch = self.scratch();
        let last = self.layers.len();
        let total: f64 = xs
            .iter()
            .zip(labels)
            .map(|(x, &u)| {
                self.run(x, &mut scratch, None);
                let z = &scratch.activations[last];
                let top = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = top + z.iter().map(|v| (v - top).exp()).sum::<f64>().ln();
                lse - z[u]
            })
            .sum();
        total / xs.len() as f64
    }

    pub fn to_checkpoint(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            predictor: self.clone(),
        })?)
    }

    pub fn from_checkpoint(text: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text)?;
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!(
                "unsupported checkpoint {} v{}",
                ck.format, ck.version
            )));
        }
        let p = ck.predictor;
        let fresh = Predictor::zeros(&p.layer_dims, p.dropout_rate)?;
        for (a, b) in p.layers.iter().zip(&fresh.layers) {
            if a.in_dim != b.in_dim
                || a.out_dim != b.out_dim
                || a.weights.len() != b.weights.len()
                || a.biases.len() != b.biases.len()
            {
                return Err(Error::Format("checkpoint layer shapes disagree with layer_dims".into()));
            }
        }
        if p.layers.len() != fresh.layers.len() {
            return Err(Error::Format("checkpoint layer count disagrees with layer_dims".into()));
        }
        Ok(p)
    }
}

fn split_batch(batch: &[(Encoding, usize)]) -> (Vec<&[f64]>, Vec<usize>) {
    batch.iter().map(|(e, u)| (e.features(), *u)).unzip()
}

/// Mean cross-entropy of the inference-mode pass plus `λ Σ w²`.
pub fn loss(predictor: &Predictor, batch: &[(Encoding, usize)], l2_coeff: f64) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Empty("loss batch"));
    }
    for (e, u) in batch {
        predictor.check_input(e.features())?;
        if *u >= predictor.output_dim() {
            return Err(Error::IndexOutOfRange {
                what: "action",
                index: *u,
                size: predictor.output_dim(),
            });
        }
    }
    let (xs, labels) = split_batch(batch);
    Ok(predictor.mean_cross_entropy(&xs, &labels) + l2_coeff * predictor.weight_sq_norm())
}

/// Exact gradient of [`loss`] for the deterministic (no-dropout) pass.
pub fn grad(predictor: &Predictor, batch: &[(Encoding, usize)], l2_coeff: f64) -> Result<Gradients> {
    if batch.is_empty() {
        return Err(Error::Empty("gradient batch"));
    }
    for (e, _) in batch {
        predictor.check_input(e.features())?;
    }
    let (xs, labels) = split_batch(batch);
    let mut scratch = predictor.scratch();
    let (_, mut g) = predictor.batch_grad(&xs, &labels, &mut scratch, None);
    for (gw, layer) in g.weights.iter_mut().zip(&predictor.layers) {
        for (gi, w) in gw.iter_mut().zip(&layer.weights) {
            *gi += 2.0 * l2_coeff * w;
        }
    }
    Ok(g)
}

/// Most likely action under the inference-mode pass, lowest index on ties.
pub fn predict_action(
    predictor: &Predictor,
    scenario: &Scenario,
    obs: usize,
    signal: usize,
    policy: &SignalingPolicy,
) -> Result<usize> {
    let enc = encode(scenario, obs, signal, policy)?;
    Ok(argmax(&predictor.probs(&enc)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Weight penalty `λ`; applied as decoupled decay of `2λ·w` per step.
    pub l2_coeff: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub lr_decay_factor: f64,
    /// Epochs without validation improvement before the learning rate decays.
    pub lr_patience: usize,
    pub val_fraction: f64,
    pub dropout: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            l2_coeff: 1e-3,
            learning_rate: 5e-3,
            batch_size: 64,
            max_epochs: 300,
            patience: 30,
            lr_decay_factor: 0.5,
            lr_patience: 10,
            val_fraction: 0.2,
            dropout: 0.3,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.l2_coeff >= 0.0 && self.l2_coeff.is_finite()) {
            return bad(format!("l2_coeff {} must be non-negative", self.l2_coeff));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate {} must be positive", self.learning_rate));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return bad("batch_size and max_epochs must be at least 1".into());
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor < 1.0) {
            return bad(format!("lr_decay_factor {} outside (0, 1)", self.lr_decay_factor));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return bad(format!("val_fraction {} outside (0, 1)", self.val_fraction));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        Ok(())
    }
}

/// Per-epoch losses of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Inference-mode cross-entropy on the training split after each epoch.
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub learning_rate: Vec<f64>,
    /// Zero-based epoch whose parameters were returned.
    pub best_epoch: usize,
}

struct AdamW {
    m: Gradients,
    v: Gradients,
    t: i32,
}

impl AdamW {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(p: &Predictor) -> Self {
        Self {
            m: Gradients::zeros_like(p),
            v: Gradients::zeros_like(p),
            t: 0,
        }
    }

    fn step(&mut self, p: &mut Predictor, g: &Gradients, lr: f64, decay: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        let update = |params: &mut [f64], grad: &[f64], m: &mut [f64], v: &mut [f64], decay: f64| {
            for i in 0..params.len() {
                m[i] = Self::BETA1 * m[i] + (1.0 - Self::BETA1) * grad[i];
                v[i] = Self::BETA2 * v[i] + (1.0 - Self::BETA2) * grad[i] * grad[i];
                let step = (m[i] / c1) / ((v[i] / c2).sqrt() + Self::EPS);
                params[i] -= lr * (step + decay * params[i]);
            }
        };
        for (l, layer) in p.layers.iter_mut().enumerate() {
            update(&mut layer.weights, &g.weights[l], &mut self.m.weights[l], &mut self.v.weights[l], decay);
            update(&mut layer.biases, &g.biases[l], &mut self.m.biases[l], &mut self.v.biases[l], 0.0);
        }
    }
}

/// Encodes every record of `dataset`.
pub fn encode_dataset(scenario: &Scenario, dataset: &Dataset) -> Result<Vec<(Encoding, usize)>> {
    dataset
        .records()
        .iter()
        .map(|r| {
            let policy = dataset.policy(&r.policy_id)?;
            Ok((encode(scenario, r.obs, r.signal, policy)?, r.action))
        })
        .collect()
}

pub fn train<R: Rng>(
    dataset: &Dataset,
    scenario: &Scenario,
    hidden: &[usize],
    config: &TrainConfig,
    rng: &mut R,
) -> Result<Predictor> {
    train_with_report(dataset, scenario, hidden, config, rng).map(|(p, _)| p)
}

/// Minibatch AdamW with plateau learning-rate decay and early stopping on the
/// validation cross-entropy. Returns the parameters of the best validation
/// epoch.
pub fn train_with_report<R: Rng>(
    dataset: &Dataset,
    scenario: &Scenario,
    hidden: &[usize],
    config: &TrainConfig,
    rng: &mut R,
) -> Result<(Predictor, TrainReport)> {
    config.validate()?;
    dataset.validate(scenario)?;
    let data = encode_dataset(scenario, dataset)?;
    let n_val = ((data.len() as f64) * config.val_fraction).round() as usize;
    if n_val == 0 || n_val >= data.len() {
        return Err(Error::InvalidParameter(format!(
            "val_fraction {} leaves {} of {} records for validation",
            config.val_fraction,
            n_val,
            data.len()
        )));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(rng);
    let (val_idx, train_idx) = order.split_at(n_val);
    let gather = |idx: &[usize]| -> (Vec<&[f64]>, Vec<usize>) {
        idx.iter().map(|&i| (data[i].0.features(), data[i].1)).unzip()
    };
    let (train_x, train_y) = gather(train_idx);
    let (val_x, val_y) = gather(val_idx);

    let mut dims = vec![input_dim(scenario)];
    dims.extend_from_slice(hidden);
    dims.push(scenario.n_actions());
    let mut model = Predictor::new(&dims, config.dropout, rng)?;
    let mut opt = AdamW::new(&model);
    let mut scratch = model.scratch();

    let mut lr = config.learning_rate;
    let mut best = (f64::INFINITY, model.clone(), 0usize);
    let mut since_best = 0usize;
    let mut since_lr = 0usize;
    let mut plateau_best = f64::INFINITY;
    let mut report = TrainReport {
        train_loss: Vec::new(),
        val_loss: Vec::new(),
        learning_rate: Vec::new(),
        best_epoch: 0,
    };
    let mut perm: Vec<usize> = (0..train_x.len()).collect();
    let mut bx: Vec<&[f64]> = Vec::with_capacity(config.batch_size);
    let mut by: Vec<usize> = Vec::with_capacity(config.batch_size);

    for epoch in 0..config.max_epochs {
        perm.shuffle(rng);
        for chunk in perm.chunks(config.batch_size) {
            bx.clear();
            by.clear();
            for &i in chunk {
                bx.push(train_x[i]);
                by.push(train_y[i]);
            }
            let (batch_loss, g) = model.batch_grad(&bx, &by, &mut scratch, Some(&mut *rng));
            if !batch_loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, loss: batch_loss });
            }
            opt.step(&mut model, &g, lr, 2.0 * config.l2_coeff);
        }
        let train_loss = model.mean_cross_entropy(&train_x, &train_y);
        let val_loss = model.mean_cross_entropy(&val_x, &val_y);
        if !val_loss.is_finite() || !train_loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, loss: val_loss });
        }
        report.train_loss.push(train_loss);
        report.val_loss.push(val_loss);
        report.learning_rate.push(lr);

        if val_loss < best.0 {
            best = (val_loss, model.clone(), epoch);
            since_best = 0;
        } else {
            since_best += 1;
        }
        if val_loss < plateau_best {
            plateau_best = val_loss;
            since_lr = 0;
        } else {
            since_lr += 1;
            if since_lr > config.lr_patience {
                lr *= config.lr_decay_factor;
                since_lr = 0;
            }
        }
        if since_best >= config.patience {
            break;
        }
    }
    report.best_epoch = best.2;
    Ok((best.1, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use approx::assert_abs_diff_eq;

    fn random_policy<R: Rng>(rng: &mut R) -> SignalingPolicy {
        let rows = (0..3)
            .map(|_| {
                let w: Vec<f64> = (0..3).map(|_| rng.random::<f64>() + 1e-3).collect();
                let t: f64 = w.iter().sum();
                w.iter().map(|v| v / t).collect()
            })
            .collect();
        SignalingPolicy::new(rows).unwrap()
    }

    #[test]
    fn encoding_layout() {
        let sc = Scenario::smart_grid();
        assert_eq!(input_dim(&sc), 15);
        let e = encode(&sc, 0, 0, &SignalingPolicy::uniform(3, 3)).unwrap();
        let mut want = vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0];
        want.extend(std::iter::repeat_n(1.0 / 3.0, 9));
        assert_eq!(e.features(), want.as_slice());
    }

    #[test]
    fn encoding_is_local_in_policy_rows() {
        let sc = Scenario::smart_grid();
        let a = SignalingPolicy::uniform(3, 3);
        let b = SignalingPolicy::new(vec![
            vec![1.0 / 3.0; 3],
            vec![0.2, 0.3, 0.5],
            vec![1.0 / 3.0; 3],
        ])
        .unwrap();
        let (ea, eb) = (encode(&sc, 1, 2, &a).unwrap(), encode(&sc, 1, 2, &b).unwrap());
        let diff: Vec<usize> = (0..15)
            .filter(|&i| ea.features()[i] != eb.features()[i])
            .collect();
        assert_eq!(diff, vec![9, 10, 11]);
    }

    #[test]
    fn zero_network_is_uniform_and_predicts_first_action() {
        let sc = Scenario::smart_grid();
        let p = Predictor::zeros(&[15, 8, 3], 0.0).unwrap();
        let e = encode(&sc, 2, 1, &SignalingPolicy::uniform(3, 3)).unwrap();
        let out = p.forward(&e, Mode::Infer).unwrap();
        for u in 0..3 {
            assert_abs_diff_eq!(out.prob(u), 1.0 / 3.0, epsilon = 1e-15);
        }
        assert_eq!(predict_action(&p, &sc, 2, 1, &SignalingPolicy::uniform(3, 3)).unwrap(), 0);
        let batch = vec![(e, 2)];
        assert_abs_diff_eq!(loss(&p, &batch, 0.0).unwrap(), 3.0f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let p = Predictor::zeros(&[15, 8, 3], 0.0).unwrap();
        assert!(matches!(
            p.forward(&Encoding::from_raw(vec![0.0; 14]), Mode::Infer),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn outputs_are_distributions_for_random_nets() {
        let sc = Scenario::smart_grid();
        let mut rng = seeded(3);
        for _ in 0..100 {
            let p = Predictor::new(&[15, 16, 8, 3], 0.0, &mut rng).unwrap();
            let pi = random_policy(&mut rng);
            let e = encode(&sc, rng.random_range(0..3), rng.random_range(0..3), &pi).unwrap();
            let out = p.forward(&e, Mode::Infer).unwrap();
            assert!((out.probs().iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert_eq!(out, p.forward(&e, Mode::Infer).unwrap());
        }
    }

    #[test]
    fn extreme_inputs_stay_finite() {
        let mut rng = seeded(4);
        let p = Predictor::new(&[15, 32, 3], 0.0, &mut rng).unwrap();
        let e = Encoding::from_raw((0..15).map(|i| if i % 2 == 0 { 1e3 } else { -1e3 }).collect());
        let out = p.forward(&e, Mode::Infer).unwrap();
        assert!(out.probs().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn perfect_predictor_has_zero_loss() {
        // A huge logit margin drives the label probability to 1 in floating point.
        let mut p = Predictor::zeros(&[2, 2], 0.0).unwrap();
        p.biases_mut(0).copy_from_slice(&[1e4, 0.0]);
        let batch = vec![(Encoding::from_raw(vec![0.0, 1.0]), 0)];
        assert_eq!(loss(&p, &batch, 0.0).unwrap(), 0.0);
        assert!(loss(&p, &[], 0.0).is_err());
    }

    #[test]
    fn l2_term_matches_independent_sum() {
        let sc = Scenario::smart_grid();
        let mut rng = seeded(5);
        let p = Predictor::new(&[15, 8, 3], 0.0, &mut rng).unwrap();
        let batch: Vec<_> = (0..5)
            .map(|i| (encode(&sc, i % 3, (i + 1) % 3, &random_policy(&mut rng)).unwrap(), i % 3))
            .collect();
        let mut sq = 0.0;
        for l in 0..p.n_layers() {
            for w in p.weights(l) {
                sq += w * w;
            }
        }
        let lam = 0.37;
        let diff = loss(&p, &batch, lam).unwrap() - loss(&p, &batch, 0.0).unwrap();
        assert_abs_diff_eq!(diff, lam * sq, epsilon = 1e-12);

        let g0 = grad(&p, &batch, 0.0).unwrap();
        let g1 = grad(&p, &batch, lam).unwrap();
        for l in 0..p.n_layers() {
            for (i, w) in p.weights(l).iter().enumerate() {
                assert_abs_diff_eq!(g1.weights[l][i] - g0.weights[l][i], 2.0 * lam * w, epsilon = 1e-12);
            }
            assert_eq!(g1.biases[l], g0.biases[l]);
        }
    }

    #[test]
    fn gradient_vanishes_as_confidence_saturates() {
        let mut p = Predictor::zeros(&[2, 3], 0.0).unwrap();
        let batch = vec![(Encoding::from_raw(vec![1.0, 0.0]), 1)];
        let mut prev = f64::INFINITY;
        for scale in [1.0, 2.0, 4.0, 8.0, 16.0] {
            p.biases_mut(0).copy_from_slice(&[0.0, scale, 0.0]);
            let g = grad(&p, &batch, 0.0).unwrap();
            let norm: f64 = g.biases[0].iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(norm < prev);
            prev = norm;
        }
        assert!(prev < 1e-6);
    }

    #[test]
    fn train_mode_dropout_is_stochastic_and_infer_is_not() {
        let sc = Scenario::smart_grid();
        let mut rng = seeded(6);
        let p = Predictor::new(&[15, 64, 3], 0.5, &mut rng).unwrap();
        let e = encode(&sc, 0, 1, &SignalingPolicy::uniform(3, 3)).unwrap();
        let a = p.forward(&e, Mode::Train(&mut rng)).unwrap();
        let b = p.forward(&e, Mode::Train(&mut rng)).unwrap();
        assert_ne!(a, b);
        assert_eq!(p.forward(&e, Mode::Infer).unwrap(), p.forward(&e, Mode::Infer).unwrap());
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let mut rng = seeded(7);
        let p = Predictor::new(&[15, 12, 7, 3], 0.3, &mut rng).unwrap();
        let text = p.to_checkpoint().unwrap();
        assert_eq!(Predictor::from_checkpoint(&text).unwrap(), p);
        let bad = text.replace("\"version\": 1", "\"version\": 9");
        assert!(Predictor::from_checkpoint(&bad).is_err());
    }

    #[test]
    fn train_config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            lr_decay_factor: 1.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            val_fraction: 0.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}

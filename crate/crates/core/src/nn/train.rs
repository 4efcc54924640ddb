//! Cross-entropy training with Adam and early stopping.

use log::debug;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{backward_acts, forward_acts, softmax_f64, Network};
use crate::error::{invalid, Error, Result};
use crate::tensor::Tensor;

/// Anything that pairs an input image with a class label.
pub trait LabeledImage {
    fn image(&self) -> &Tensor;
    fn label(&self) -> usize;
}

impl LabeledImage for (Tensor, usize) {
    fn image(&self) -> &Tensor {
        &self.0
    }
    fn label(&self) -> usize {
        self.1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub flip_probability: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            weight_decay: 1e-8,
            max_epochs: 100,
            patience: 10,
            flip_probability: 0.5,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl TrainConfig {
    // negated comparisons also reject NaN
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(invalid("learning_rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(invalid("beta1 and beta2 must lie in [0, 1)"));
        }
        if self.patience < 1 || self.batch_size < 1 {
            return Err(invalid("patience and batch_size must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.flip_probability) {
            return Err(invalid("flip_probability must lie in [0, 1]"));
        }
        if self.weight_decay < 0.0 {
            return Err(invalid("weight_decay must be non-negative"));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamParams {
        AdamParams {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: 1e-8,
            weight_decay: self.weight_decay,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamParams {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// L2 penalty folded into the gradient.
    pub weight_decay: f64,
}

/// Adam with bias correction; moments are kept in `f64`.
#[derive(Clone, Debug)]
pub struct Adam {
    params: AdamParams,
    t: i32,
    moments: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Adam {
    pub fn new(params: AdamParams) -> Self {
        Self {
            params,
            t: 0,
            moments: Vec::new(),
        }
    }

    /// One update over a list of parameter slices and their gradients.
    pub fn step(&mut self, params: &mut [&mut [f32]], grads: &[&[f32]]) {
        assert_eq!(params.len(), grads.len());
        if self.moments.is_empty() {
            self.moments = params
                .iter()
                .map(|p| (vec![0.0; p.len()], vec![0.0; p.len()]))
                .collect();
        }
        self.t += 1;
        let AdamParams {
            learning_rate,
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.params;
        let c1 = 1.0 - beta1.powi(self.t);
        let c2 = 1.0 - beta2.powi(self.t);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(&mut self.moments) {
            for i in 0..p.len() {
                let theta = p[i] as f64;
                let grad = g[i] as f64 + weight_decay * theta;
                m[i] = beta1 * m[i] + (1.0 - beta1) * grad;
                v[i] = beta2 * v[i] + (1.0 - beta2) * grad * grad;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] = (theta - learning_rate * m_hat / (v_hat.sqrt() + eps)) as f32;
            }
        }
    }

    /// Applies one step to every parameter tensor of `net`.
    pub fn step_network(&mut self, net: &mut Network, grads: &[(Vec<f32>, Vec<f32>)]) {
        let mut slots: Vec<&mut [f32]> = Vec::new();
        let mut gslots: Vec<&[f32]> = Vec::new();
        for (p, (gw, gb)) in net.params_mut().iter_mut().zip(grads) {
            if let Some(p) = p {
                slots.push(p.weight.data_mut());
                gslots.push(gw);
                slots.push(p.bias.data_mut());
                gslots.push(gb);
            }
        }
        self.step(&mut slots, &gslots);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_balanced_accuracy: f64,
}

#[derive(Clone, Debug, Default)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
}

pub fn predict(net: &Network, x: &Tensor) -> Result<usize> {
    Ok(net.forward(x)?.argmax())
}

/// Mean per-class recall over the classes present in `labels`.
pub fn balanced_accuracy<S: LabeledImage>(net: &Network, samples: &[S]) -> Result<f64> {
    let k = net.num_outputs();
    let mut hits = vec![0usize; k];
    let mut totals = vec![0usize; k];
    for s in samples {
        let label = s.label();
        net.check_class(label)?;
        totals[label] += 1;
        if predict(net, s.image())? == label {
            hits[label] += 1;
        }
    }
    let present: Vec<f64> = (0..k)
        .filter(|&c| totals[c] > 0)
        .map(|c| hits[c] as f64 / totals[c] as f64)
        .collect();
    if present.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    Ok(present.iter().sum::<f64>() / present.len() as f64)
}

/// Zero-initialised gradient buffers matching `net`'s parameters.
pub(crate) fn grad_buffers(net: &Network) -> Vec<(Vec<f32>, Vec<f32>)> {
    net.params()
        .iter()
        .map(|p| {
            p.as_ref()
                .map(|p| (vec![0.0; p.weight.len()], vec![0.0; p.bias.len()]))
                .unwrap_or_default()
        })
        .collect()
}

/// Trains `net` with softmax cross-entropy and returns the weights of the
/// epoch with the best validation balanced accuracy.
pub fn train_classifier<S: LabeledImage>(
    net: Network,
    train: &[S],
    val: &[S],
    cfg: &TrainConfig,
) -> Result<(Network, TrainHistory)> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Empty("training fold"));
    }
    if val.is_empty() {
        return Err(Error::Empty("validation fold"));
    }
    for s in train.iter().chain(val) {
        net.check_input(s.image())?;
        net.check_class(s.label())?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = net;
    let mut adam = Adam::new(cfg.adam());
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best = (f64::NEG_INFINITY, net.clone());
    let mut history = TrainHistory::default();
    let mut stale = 0;

    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut grads = grad_buffers(&net);
            for &i in batch {
                let sample = &train[i];
                let hflip = rng.gen_bool(cfg.flip_probability);
                let vflip = rng.gen_bool(cfg.flip_probability);
                let x = sample.image().flip(hflip, vflip)?;
                let acts = forward_acts(&net, x.into_data());
                let logits: Vec<f64> = acts.last().expect("non-empty").iter().map(|&v| v as f64).collect();
                let p = softmax_f64(&logits);
                let label = sample.label();
                loss_sum += -p[label].max(1e-300).ln();
                let scale = 1.0 / batch.len() as f64;
                let g: Vec<f32> = p
                    .iter()
                    .enumerate()
                    .map(|(k, &pk)| ((pk - if k == label { 1.0 } else { 0.0 }) * scale) as f32)
                    .collect();
                backward_acts(&net, &acts, g, Some(&mut grads));
            }
            adam.step_network(&mut net, &grads);
        }
        let train_loss = loss_sum / train.len() as f64;
        if !train_loss.is_finite() || !net.params().iter().flatten().all(|p| p.weight.is_finite()) {
            return Err(Error::Diverged { epoch });
        }
        let val_ba = balanced_accuracy(&net, val)?;
        debug!("epoch {epoch}: loss {train_loss:.4} val balanced accuracy {val_ba:.4}");
        history.epochs.push(EpochStats {
            epoch,
            train_loss,
            val_balanced_accuracy: val_ba,
        });
        if val_ba > best.0 {
            best = (val_ba, net.clone());
            history.best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    Ok((best.1, history))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_matches_scalar_reference() {
        let params = AdamParams {
            learning_rate: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-3,
        };
        let mut adam = Adam::new(params);
        let mut theta = [1.5f32];
        // reference: minimise (θ - 0.3)^2 with the textbook update
        let (mut rt, mut m, mut v) = (1.5f64, 0.0f64, 0.0f64);
        for t in 1..=50 {
            let g = 2.0 * (theta[0] as f64 - 0.3);
            adam.step(&mut [&mut theta[..]], &[&[g as f32][..]]);
            let rg = 2.0 * (rt - 0.3) + 1e-3 * rt;
            m = 0.9 * m + 0.1 * rg;
            v = 0.999 * v + 0.001 * rg * rg;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            rt -= 1e-2 * mh / (vh.sqrt() + 1e-8);
            assert!((theta[0] as f64 - rt).abs() < 1e-6, "step {t}");
        }
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            learning_rate: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            beta1: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}

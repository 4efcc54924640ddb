//! Explainer network: a mask predictor trained against a frozen classifier.

mod losses;

use log::debug;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

pub use losses::{
    aggregate_masks, area_loss_grad, classification_from_probs, classification_loss_grad, explainer_total_loss,
    loss_area, loss_classification, loss_negative_classification, loss_negative_entropy, loss_tv,
    negative_classification_from_probs, negative_classification_loss_grad, negative_entropy_from_probs,
    negative_entropy_loss_grad, total_loss_grad, tv_grad, AggregatedMasks, ClassMaskSet, LossComponents, LossWeights,
    PROB_FLOOR,
};

use crate::attribution::AttributionMap;
use crate::error::{invalid, Error, Result};
use crate::nn::network::{backward_acts, forward_acts};
use crate::nn::train::grad_buffers;
use crate::nn::{Adam, LabeledImage, LayerSpec, Network, TrainConfig};
use crate::tensor::Tensor;

/// Learning rate of the explainer at full scale.
pub const EXPLAINER_LEARNING_RATE: f64 = 1e-5;

/// Default explainer training configuration.
pub fn explainer_train_config() -> TrainConfig {
    TrainConfig {
        learning_rate: EXPLAINER_LEARNING_RATE,
        ..TrainConfig::default()
    }
}

/// Encoder-decoder: the classifier's conv trunk, then three nearest-neighbour
/// upsampling stages back to input resolution and a sigmoid head with one
/// channel per positive class.
pub fn explainer_network(input_shape: &[usize], positive_classes: usize, seed: u64) -> Result<Network> {
    let [c, h, w] = input_shape[..] else {
        return Err(invalid("explainer expects a [C, H, W] input"));
    };
    if h % 8 != 0 || w % 8 != 0 || positive_classes == 0 {
        return Err(invalid(
            "explainer needs spatial sizes divisible by 8 and at least one class",
        ));
    }
    let up = LayerSpec::Upsample2d { factor: 2 };
    let layers = vec![
        LayerSpec::centre(),
        LayerSpec::conv3x3(c, 8),
        LayerSpec::Relu,
        LayerSpec::maxpool2(),
        LayerSpec::conv3x3(8, 16),
        LayerSpec::Relu,
        LayerSpec::maxpool2(),
        LayerSpec::conv3x3(16, 32),
        LayerSpec::Relu,
        LayerSpec::maxpool2(),
        up.clone(),
        LayerSpec::conv3x3(32, 16),
        LayerSpec::Relu,
        up.clone(),
        LayerSpec::conv3x3(16, 8),
        LayerSpec::Relu,
        up,
        LayerSpec::conv3x3(8, positive_classes),
        LayerSpec::Sigmoid,
    ];
    Network::new(input_shape, layers, seed)
}

fn check_pair(e: &Network, f: &Network) -> Result<usize> {
    if e.input_shape() != f.input_shape() {
        return Err(Error::Shape {
            expected: f.input_shape().to_vec(),
            actual: e.input_shape().to_vec(),
        });
    }
    let [k, h, w] = e.output_shape()[..] else {
        return Err(invalid("explainer output must be [K, H, W]"));
    };
    let [_, ih, iw] = e.input_shape()[..] else {
        return Err(invalid("explainer input must be [C, H, W]"));
    };
    if (h, w) != (ih, iw) {
        return Err(invalid("explainer masks must match the input resolution"));
    }
    if f.num_outputs() != k + 1 {
        return Err(invalid(
            "classifier must output the negative class plus one logit per mask",
        ));
    }
    Ok(k)
}

fn split_masks(out: Tensor) -> Result<ClassMaskSet> {
    let (k, h, w) = out.chw()?;
    let data = out.into_data();
    ClassMaskSet::new(
        data.chunks(h * w)
            .take(k)
            .map(|c| Tensor::new(vec![h, w], c.to_vec()).expect("plane"))
            .collect(),
    )
}

/// The explainer's per-class masks for `x`.
pub fn predict_masks(e: &Network, x: &Tensor) -> Result<ClassMaskSet> {
    split_masks(e.forward(x)?)
}

/// The crack-class mask as an attribution map, values in `[0, 1]`.
pub fn explainer_attribution(e: &Network, x: &Tensor) -> Result<AttributionMap> {
    let s = predict_masks(e, x)?;
    let m = s.masks.into_iter().next().expect("at least one class");
    AttributionMap::new(m, "explainer", 1)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ExplainerEpoch {
    pub epoch: usize,
    pub total: f64,
    pub l_c: f64,
    pub l_nc: f64,
    pub l_a: f64,
    pub l_tv: f64,
}

/// Trains `e` on the positive samples against the frozen classifier `f`.
/// Returns the final weights and the mean loss components per epoch.
pub fn train_explainer<S: LabeledImage>(
    e: Network,
    f: &Network,
    data: &[S],
    weights: &LossWeights,
    cfg: &TrainConfig,
) -> Result<(Network, Vec<ExplainerEpoch>)> {
    cfg.validate()?;
    weights.validate()?;
    let k = check_pair(&e, f)?;
    let positives: Vec<&S> = data.iter().filter(|s| s.label() > 0).collect();
    if positives.is_empty() {
        return Err(Error::Empty("positive training set"));
    }
    for s in &positives {
        e.check_input(s.image())?;
        if s.label() > k {
            return Err(Error::InvalidClass {
                index: s.label(),
                classes: k + 1,
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut e = e;
    let mut adam = Adam::new(cfg.adam());
    let mut order: Vec<usize> = (0..positives.len()).collect();
    let mut log = Vec::with_capacity(cfg.max_epochs);
    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut sums = [0.0f64; 5];
        for batch in order.chunks(cfg.batch_size) {
            let mut grads = grad_buffers(&e);
            for &i in batch {
                let s = positives[i];
                let x = s
                    .image()
                    .flip(rng.gen_bool(cfg.flip_probability), rng.gen_bool(cfg.flip_probability))?;
                let acts = forward_acts(&e, x.data().to_vec());
                let out = Tensor::new(e.output_shape().to_vec(), acts.last().expect("non-empty").clone())
                    .expect("output shape");
                let masks = split_masks(out)?;
                let (parts, g) = total_loss_grad(&masks, f, &x, &[s.label()], weights)?;
                for (acc, v) in
                    sums.iter_mut()
                        .zip([parts.total, parts.classification, parts.negative, parts.area, parts.tv])
                {
                    *acc += v;
                }
                let scale = 1.0 / batch.len() as f64;
                let g_out: Vec<f32> = g.iter().flatten().map(|&v| (v * scale) as f32).collect();
                backward_acts(&e, &acts, g_out, Some(&mut grads));
            }
            adam.step_network(&mut e, &grads);
        }
        let n = positives.len() as f64;
        let [total, l_c, l_nc, l_a, l_tv] = sums.map(|v| v / n);
        if !total.is_finite() || !e.params().iter().flatten().all(|p| p.weight.is_finite()) {
            return Err(Error::Diverged { epoch });
        }
        debug!("explainer epoch {epoch}: loss {total:.4}");
        log.push(ExplainerEpoch {
            epoch,
            total,
            l_c,
            l_nc,
            l_a,
            l_tv,
        });
    }
    Ok((e, log))
}

use serde::{Deserialize, Serialize};

use super::{channel_sum, AttributionMap};
use crate::error::{invalid, Error, Result};
use crate::nn::layer::LayerSpec;
use crate::nn::network::{forward_acts, layer_backward_input, layer_forward, PreciseNetwork, Stack};
use crate::nn::Network;
use crate::tensor::Tensor;

/// Relevance propagation rule for one parameterized layer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum LrpRule {
    #[serde(rename = "lrp0")]
    Lrp0,
    Epsilon {
        epsilon: f64,
    },
    Gamma {
        gamma: f64,
    },
    AlphaBeta {
        alpha: f64,
        beta: f64,
    },
    /// Bounded input rule for pixels in `[low, high]`.
    #[serde(rename = "zb")]
    ZB {
        low: f64,
        high: f64,
    },
}

impl LrpRule {
    pub const DEFAULT_EPSILON: LrpRule = LrpRule::Epsilon { epsilon: 1e-6 };
    pub const DEFAULT_GAMMA: LrpRule = LrpRule::Gamma { gamma: 0.25 };
    pub const DEFAULT_ALPHA_BETA: LrpRule = LrpRule::AlphaBeta { alpha: 1.0, beta: 0.0 };
    pub const DEFAULT_ZB: LrpRule = LrpRule::ZB { low: 0.0, high: 1.0 };

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            LrpRule::Lrp0 => true,
            LrpRule::Epsilon { epsilon } => epsilon > 0.0 && epsilon.is_finite(),
            LrpRule::Gamma { gamma } => gamma >= 0.0 && gamma.is_finite(),
            LrpRule::AlphaBeta { alpha, beta } => alpha >= 1.0 && (alpha - beta - 1.0).abs() < 1e-12,
            LrpRule::ZB { low, high } => low <= high && low.is_finite() && high.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(invalid(format!("invalid LRP rule parameters: {self:?}")))
        }
    }
}

/// Which rule goes to which layer class; resolved against a concrete network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LrpPreset {
    pub first_conv: LrpRule,
    pub lower_conv: LrpRule,
    /// How many convolutions get `lower_conv`.
    pub lower_conv_count: usize,
    /// Whether the `lower_conv` layers start at the first convolution
    /// (which keeps `first_conv`) rather than after it.
    pub lower_includes_first: bool,
    pub upper_conv: LrpRule,
    pub linear: LrpRule,
}

impl Default for LrpPreset {
    fn default() -> Self {
        Self {
            first_conv: LrpRule::DEFAULT_ZB,
            lower_conv: LrpRule::DEFAULT_ALPHA_BETA,
            lower_conv_count: 2,
            lower_includes_first: false,
            upper_conv: LrpRule::DEFAULT_GAMMA,
            linear: LrpRule::DEFAULT_EPSILON,
        }
    }
}

/// One rule per parameterized layer, indexed by layer position.
#[derive(Clone, Debug, PartialEq)]
pub struct LrpRuleAssignment {
    rules: Vec<Option<LrpRule>>,
}

impl LrpRuleAssignment {
    pub fn new(rules: Vec<Option<LrpRule>>) -> Result<Self> {
        for r in rules.iter().flatten() {
            r.validate()?;
        }
        Ok(Self { rules })
    }

    pub fn from_preset(net: &Network, preset: &LrpPreset) -> Result<Self> {
        let mut conv = 0;
        let lower_start = if preset.lower_includes_first { 0 } else { 1 };
        let lower_end = lower_start + preset.lower_conv_count;
        let rules = net
            .layers()
            .iter()
            .map(|spec| match spec {
                LayerSpec::Conv2d { .. } => {
                    let k = conv;
                    conv += 1;
                    Some(if k == 0 {
                        preset.first_conv
                    } else if k < lower_end {
                        preset.lower_conv
                    } else {
                        preset.upper_conv
                    })
                }
                LayerSpec::Linear { .. } => Some(preset.linear),
                _ => None,
            })
            .collect();
        Self::new(rules)
    }

    /// The same rule on every parameterized layer.
    pub fn uniform(net: &Network, rule: LrpRule) -> Result<Self> {
        Self::new(
            net.layers()
                .iter()
                .map(|s| s.is_parameterized().then_some(rule))
                .collect(),
        )
    }

    pub fn rules(&self) -> &[Option<LrpRule>] {
        &self.rules
    }
}

fn safe_div(r: &[f64], z: &[f64]) -> Vec<f64> {
    r.iter()
        .zip(z)
        .map(|(&r, &z)| if z == 0.0 { 0.0 } else { r / z })
        .collect()
}

fn split(v: &[f64]) -> (Vec<f64>, Vec<f64>) {
    (
        v.iter().map(|&x| x.max(0.0)).collect(),
        v.iter().map(|&x| x.min(0.0)).collect(),
    )
}

fn add(a: &mut [f64], b: &[f64], scale: f64) {
    for (x, y) in a.iter_mut().zip(b) {
        *x += scale * y;
    }
}

fn hadamard(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}

/// Relevance of the inputs of parameterized layer `i` given its output relevance.
fn propagate_param(p: &PreciseNetwork, i: usize, rule: LrpRule, a: &[f64], r: &[f64]) -> Vec<f64> {
    let spec = p.spec(i);
    let (w, b) = (p.weight(i), p.bias(i));
    let (si, so) = (p.shape(i), p.shape(i + 1));
    let fwd = |w: &[f64], b: &[f64], x: &[f64]| layer_forward(spec, w, b, si, so, x);
    let bwd = |w: &[f64], g: &[f64]| layer_backward_input(spec, w, si, so, a, &[], g);
    let zero_b = vec![0.0; b.len()];
    match rule {
        LrpRule::Lrp0 | LrpRule::Epsilon { .. } | LrpRule::Gamma { .. } => {
            let (w2, b2) = match rule {
                LrpRule::Gamma { gamma } => (
                    w.iter().map(|&v| v + gamma * v.max(0.0)).collect(),
                    b.iter().map(|&v| v + gamma * v.max(0.0)).collect(),
                ),
                _ => (w.to_vec(), b.to_vec()),
            };
            let mut z = fwd(&w2, &b2, a);
            if let LrpRule::Epsilon { epsilon } = rule {
                for v in &mut z {
                    *v += if *v >= 0.0 { epsilon } else { -epsilon };
                }
            }
            hadamard(a, &bwd(&w2, &safe_div(r, &z)))
        }
        LrpRule::AlphaBeta { alpha, beta } => {
            let (wp, wn) = split(w);
            let (bp, bn) = split(b);
            let (ap, an) = split(a);
            let mut zp = fwd(&wp, &bp, &ap);
            add(&mut zp, &fwd(&wn, &zero_b, &an), 1.0);
            let mut zn = fwd(&wn, &bn, &ap);
            add(&mut zn, &fwd(&wp, &zero_b, &an), 1.0);
            let (sp, sn) = (safe_div(r, &zp), safe_div(r, &zn));
            let mut out = hadamard(&ap, &bwd(&wp, &sp));
            add(&mut out, &hadamard(&an, &bwd(&wn, &sp)), 1.0);
            for v in &mut out {
                *v *= alpha;
            }
            if beta != 0.0 {
                add(&mut out, &hadamard(&ap, &bwd(&wn, &sn)), -beta);
                add(&mut out, &hadamard(&an, &bwd(&wp, &sn)), -beta);
            }
            out
        }
        LrpRule::ZB { low, high } => {
            let (wp, wn) = split(w);
            let lo = vec![low; a.len()];
            let hi = vec![high; a.len()];
            let mut z = fwd(w, &zero_b, a);
            add(&mut z, &fwd(&wp, &zero_b, &lo), -1.0);
            add(&mut z, &fwd(&wn, &zero_b, &hi), -1.0);
            let s = safe_div(r, &z);
            let mut out = hadamard(a, &bwd(w, &s));
            add(&mut out, &hadamard(&lo, &bwd(&wp, &s)), -1.0);
            add(&mut out, &hadamard(&hi, &bwd(&wn, &s)), -1.0);
            out
        }
    }
}

/// z^B bounds are given in pixel units; carry them through any fixed
/// normalization directly in front of layer `i`.
fn input_domain(p: &PreciseNetwork, i: usize, rule: LrpRule) -> LrpRule {
    let LrpRule::ZB { mut low, mut high } = rule else {
        return rule;
    };
    for j in 0..i {
        match *p.spec(j) {
            LayerSpec::Normalize { mean, std } => {
                low = (low - mean as f64) / std as f64;
                high = (high - mean as f64) / std as f64;
            }
            _ => return rule,
        }
    }
    LrpRule::ZB { low, high }
}

pub(crate) fn lrp_raw(
    p: &PreciseNetwork,
    x: &[f64],
    class_index: usize,
    rules: &LrpRuleAssignment,
) -> Result<Vec<f64>> {
    let acts = forward_acts(p, x.to_vec());
    let logits = acts.last().expect("non-empty");
    let mut r = vec![0.0; logits.len()];
    r[class_index] = logits[class_index];
    for i in (0..p.depth()).rev() {
        let spec = p.spec(i);
        r = match spec {
            LayerSpec::Conv2d { .. } | LayerSpec::Linear { .. } => {
                let rule = rules.rules.get(i).copied().flatten().ok_or(Error::UnassignedRule(i))?;
                propagate_param(p, i, input_domain(p, i, rule), &acts[i], &r)
            }
            LayerSpec::Relu | LayerSpec::Sigmoid | LayerSpec::Flatten | LayerSpec::Normalize { .. } => r,
            // winner-takes-all and sum-back are the gradient routes of these layers
            LayerSpec::MaxPool2d { .. } | LayerSpec::Upsample2d { .. } => {
                layer_backward_input(spec, &[], p.shape(i), p.shape(i + 1), &acts[i], &acts[i + 1], &r)
            }
        };
    }
    Ok(r)
}

/// Layer-wise relevance propagation starting from the logit of `class_index`.
pub fn lrp(net: &Network, x: &Tensor, class_index: usize, rules: &LrpRuleAssignment) -> Result<AttributionMap> {
    net.check_input(x)?;
    net.check_class(class_index)?;
    if rules.rules.len() != net.layers().len() {
        return Err(invalid(format!(
            "rule assignment covers {} layers, network has {}",
            rules.rules.len(),
            net.layers().len()
        )));
    }
    let p = net.precise();
    let xs: Vec<f64> = x.data().iter().map(|&v| v as f64).collect();
    let r = lrp_raw(&p, &xs, class_index, rules)?;
    let t = Tensor::new(x.shape().to_vec(), r.iter().map(|&v| v as f32).collect()).expect("input shape");
    AttributionMap::new(channel_sum(&t)?, "lrp", class_index)
}

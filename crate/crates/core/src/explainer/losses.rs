//! Explainer objective terms and their gradients with respect to the masks.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::nn::{softmax_f64, Model};
use crate::tensor::Tensor;

/// Floor applied inside every logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub lambda_nc: f64,
    /// Weight of the negative-entropy term when `legacy_entropy` is set.
    pub lambda_e: f64,
    pub lambda_a: f64,
    pub lambda_tv: f64,
    pub a_min: f64,
    pub a_max: f64,
    /// Use the entropy term on the inverse mask instead of the negative-class term.
    pub legacy_entropy: bool,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_nc: 0.1,
            lambda_e: 0.1,
            lambda_a: 0.1,
            lambda_tv: 0.1,
            a_min: 0.001,
            a_max: 0.15,
            legacy_entropy: false,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let lambdas = [self.lambda_nc, self.lambda_e, self.lambda_a, self.lambda_tv];
        if lambdas.iter().any(|&l| !(l >= 0.0 && l.is_finite())) {
            return Err(invalid("loss weights must be finite and non-negative"));
        }
        if !(0.0 <= self.a_min && self.a_min < self.a_max && self.a_max <= 1.0) {
            return Err(invalid("area bounds need 0 ≤ a_min < a_max ≤ 1"));
        }
        Ok(())
    }
}

/// Per-class masks `S`, each `[H, W]` with values in `[0, 1]`; `masks[k - 1]` belongs to class `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassMaskSet {
    pub masks: Vec<Tensor>,
}

impl ClassMaskSet {
    pub fn new(masks: Vec<Tensor>) -> Result<Self> {
        let first = masks.first().ok_or(Error::Empty("mask set"))?;
        for m in &masks {
            first.check_same_shape(m)?;
            if m.shape().len() != 2 {
                return Err(invalid("masks are [H, W]"));
            }
            if m.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(invalid("mask values must lie in [0, 1]"));
            }
        }
        Ok(Self { masks })
    }

    pub fn classes(&self) -> usize {
        self.masks.len()
    }

    pub fn shape(&self) -> &[usize] {
        self.masks[0].shape()
    }
}

/// Target mask `m`, its inverse `1 − m` and the non-target mask `n`.
#[derive(Clone, Debug, PartialEq)]
pub struct AggregatedMasks {
    pub target: Tensor,
    pub inverse: Tensor,
    pub non_target: Tensor,
    /// Class (1-based) whose mask supplied each pixel of `target`.
    target_source: Vec<usize>,
    /// Class supplying each pixel of `non_target`, or 0 when none does.
    non_target_source: Vec<usize>,
}

fn check_targets(k: usize, targets: &[usize]) -> Result<()> {
    if targets.is_empty() {
        return Err(Error::Empty("target class set"));
    }
    if let Some(&bad) = targets.iter().find(|&&c| c == 0 || c > k) {
        return Err(Error::InvalidClass {
            index: bad,
            classes: k + 1,
        });
    }
    Ok(())
}

/// Element-wise maximum over target masks and over the remaining positive classes.
pub fn aggregate_masks(s: &ClassMaskSet, targets: &[usize]) -> Result<AggregatedMasks> {
    check_targets(s.classes(), targets)?;
    let len = s.masks[0].len();
    let mut target = vec![f32::NEG_INFINITY; len];
    let mut target_source = vec![0; len];
    let mut non_target = vec![0.0f32; len];
    let mut non_target_source = vec![0; len];
    for (i, m) in s.masks.iter().enumerate() {
        let class = i + 1;
        let (vals, src) = if targets.contains(&class) {
            (&mut target, &mut target_source)
        } else {
            (&mut non_target, &mut non_target_source)
        };
        for ((v, sv), &x) in vals.iter_mut().zip(src.iter_mut()).zip(m.data()) {
            // strict: ties keep the lowest class, and zeros never claim n
            if x > *v {
                *v = x;
                *sv = class;
            }
        }
    }
    let shape = s.shape().to_vec();
    let inverse = target.iter().map(|&v| 1.0 - v).collect();
    Ok(AggregatedMasks {
        target: Tensor::new(shape.clone(), target).expect("mask shape"),
        inverse: Tensor::new(shape.clone(), inverse).expect("mask shape"),
        non_target: Tensor::new(shape, non_target).expect("mask shape"),
        target_source,
        non_target_source,
    })
}

fn ln(p: f64) -> f64 {
    p.max(PROB_FLOOR).ln()
}

/// `d ln(max(p, floor)) / dp`.
fn dln(p: f64) -> f64 {
    if p > PROB_FLOOR {
        1.0 / p
    } else {
        0.0
    }
}

/// Classification loss on probabilities over `[negative, class 1, …, class K]`.
pub fn classification_from_probs(p: &[f64], targets: &[usize]) -> (f64, Vec<f64>) {
    let k = p.len() - 1;
    let mut grad = vec![0.0; p.len()];
    let mut loss = 0.0;
    for c in 1..=k {
        if targets.contains(&c) {
            loss -= ln(p[c]);
            grad[c] -= dln(p[c]);
        } else {
            loss -= ln(1.0 - p[c]);
            grad[c] += dln(1.0 - p[c]);
        }
    }
    let inv_k = 1.0 / k as f64;
    (loss * inv_k, grad.iter().map(|g| g * inv_k).collect())
}

/// Negative entropy `(1/K) Σ_k p[k] ln p[k]` over the positive classes.
pub fn negative_entropy_from_probs(p: &[f64]) -> (f64, Vec<f64>) {
    let k = p.len() - 1;
    let inv_k = 1.0 / k as f64;
    let mut grad = vec![0.0; p.len()];
    let mut loss = 0.0;
    for c in 1..=k {
        loss += p[c] * ln(p[c]);
        grad[c] = inv_k * (ln(p[c]) + p[c] * dln(p[c]));
    }
    (loss * inv_k, grad)
}

/// Cross-entropy against the negative class: `−ln p[0] − (1/K) Σ_k ln(1 − p[k])`.
pub fn negative_classification_from_probs(p: &[f64]) -> (f64, Vec<f64>) {
    let k = p.len() - 1;
    let inv_k = 1.0 / k as f64;
    let mut grad = vec![0.0; p.len()];
    let mut loss = -ln(p[0]);
    grad[0] = -dln(p[0]);
    for c in 1..=k {
        loss -= inv_k * ln(1.0 - p[c]);
        grad[c] = inv_k * dln(1.0 - p[c]);
    }
    (loss, grad)
}

/// Pulls a gradient on probabilities back through the softmax to the logits.
fn softmax_vjp(p: &[f64], gp: &[f64]) -> Vec<f64> {
    let dot: f64 = p.iter().zip(gp).map(|(a, b)| a * b).sum();
    p.iter().zip(gp).map(|(pk, gk)| pk * (gk - dot)).collect()
}

/// Evaluates `term(softmax(F(x ⊙ mask)))` and its gradient with respect to the
/// `[H, W]` mask, which is broadcast over channels.
fn masked_term<M: Model + ?Sized>(
    f: &M,
    x: &[f64],
    mask: &[f64],
    term: impl Fn(&[f64]) -> (f64, Vec<f64>),
) -> Result<(f64, Vec<f64>)> {
    let plane = mask.len();
    if !x.len().is_multiple_of(plane) || x.len() != f.input_len() {
        return Err(invalid("mask does not tile the classifier input"));
    }
    let masked: Vec<f64> = x.iter().enumerate().map(|(i, &v)| v * mask[i % plane]).collect();
    let logits = f.logits(&masked);
    let p = softmax_f64(&logits);
    if p.iter().any(|v| !v.is_finite()) {
        return Err(invalid("non-finite probabilities"));
    }
    let (loss, gp) = term(&p);
    let g_in = f.logits_vjp(&masked, &softmax_vjp(&p, &gp));
    let mut g_mask = vec![0.0; plane];
    for (i, (&gi, &xi)) in g_in.iter().zip(x).enumerate() {
        g_mask[i % plane] += gi * xi;
    }
    Ok((loss, g_mask))
}

fn to_f64(t: &Tensor) -> Vec<f64> {
    t.data().iter().map(|&v| v as f64).collect()
}

/// `L_C` with the gradient with respect to the target mask.
pub fn classification_loss_grad<M: Model + ?Sized>(
    f: &M,
    x: &[f64],
    targets: &[usize],
    m: &[f64],
) -> Result<(f64, Vec<f64>)> {
    masked_term(f, x, m, |p| classification_from_probs(p, targets))
}

/// `L_NC` on the inverse mask, with the gradient with respect to the target mask.
pub fn negative_classification_loss_grad<M: Model + ?Sized>(f: &M, x: &[f64], m: &[f64]) -> Result<(f64, Vec<f64>)> {
    let inv: Vec<f64> = m.iter().map(|v| 1.0 - v).collect();
    let (l, g) = masked_term(f, x, &inv, negative_classification_from_probs)?;
    Ok((l, g.into_iter().map(|v| -v).collect()))
}

/// `L_E` on the inverse mask, with the gradient with respect to the target mask.
pub fn negative_entropy_loss_grad<M: Model + ?Sized>(f: &M, x: &[f64], m: &[f64]) -> Result<(f64, Vec<f64>)> {
    let inv: Vec<f64> = m.iter().map(|v| 1.0 - v).collect();
    let (l, g) = masked_term(f, x, &inv, negative_entropy_from_probs)?;
    Ok((l, g.into_iter().map(|v| -v).collect()))
}

pub fn loss_classification<M: Model + ?Sized>(f: &M, x: &Tensor, targets: &[usize], m: &Tensor) -> Result<f64> {
    Ok(classification_loss_grad(f, &to_f64(x), targets, &to_f64(m))?.0)
}

/// `L_E(x, m̃)`, taking the inverse mask itself.
pub fn loss_negative_entropy<M: Model + ?Sized>(f: &M, x: &Tensor, inverse: &Tensor) -> Result<f64> {
    Ok(masked_term(f, &to_f64(x), &to_f64(inverse), negative_entropy_from_probs)?.0)
}

/// `L_NC(x, m̃)`, taking the inverse mask itself.
pub fn loss_negative_classification<M: Model + ?Sized>(f: &M, x: &Tensor, inverse: &Tensor) -> Result<f64> {
    Ok(masked_term(f, &to_f64(x), &to_f64(inverse), negative_classification_from_probs)?.0)
}

/// Area hinge on `mean(m)` plus `mean(n)`, with gradients for `m` and `n`.
pub fn area_loss_grad(m: &[f64], n: &[f64], a_min: f64, a_max: f64) -> (f64, Vec<f64>, Vec<f64>) {
    let inv = 1.0 / m.len() as f64;
    let area = m.iter().sum::<f64>() * inv;
    let mut loss = n.iter().sum::<f64>() * inv;
    let mut slope = 0.0;
    if area > a_max {
        loss += area - a_max;
        slope = inv;
    } else if area < a_min {
        loss += a_min - area;
        slope = -inv;
    }
    (loss, vec![slope; m.len()], vec![inv; n.len()])
}

pub fn loss_area(m: &Tensor, n: &Tensor, a_min: f64, a_max: f64) -> f64 {
    area_loss_grad(&to_f64(m), &to_f64(n), a_min, a_max).0
}

/// Anisotropic total variation of one `[H, W]` mask, averaged over pixels, with its subgradient.
pub fn tv_grad(m: &[f64], h: usize, w: usize) -> (f64, Vec<f64>) {
    let inv = 1.0 / (h * w) as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; m.len()];
    let mut edge = |a: usize, b: usize, grad: &mut [f64]| {
        let d = m[b] - m[a];
        loss += d.abs();
        let s = if d > 0.0 {
            inv
        } else if d < 0.0 {
            -inv
        } else {
            0.0
        };
        grad[b] += s;
        grad[a] -= s;
    };
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if y + 1 < h {
                edge(i, i + w, &mut grad);
            }
            if x + 1 < w {
                edge(i, i + 1, &mut grad);
            }
        }
    }
    (loss * inv, grad)
}

/// `TV(m) + TV(n)`.
pub fn loss_tv(m: &Tensor, n: &Tensor) -> Result<f64> {
    m.check_same_shape(n)?;
    let (_, h, w) = m.chw()?;
    Ok(tv_grad(&to_f64(m), h, w).0 + tv_grad(&to_f64(n), h, w).0)
}

/// Total objective and its parts; `negative` holds `L_NC`, or `L_E` in legacy mode.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LossComponents {
    pub total: f64,
    pub classification: f64,
    pub negative: f64,
    pub area: f64,
    pub tv: f64,
}

/// The explainer objective and its gradient with respect to every class mask.
pub fn total_loss_grad<M: Model + ?Sized>(
    s: &ClassMaskSet,
    f: &M,
    x: &Tensor,
    targets: &[usize],
    w: &LossWeights,
) -> Result<(LossComponents, Vec<Vec<f64>>)> {
    w.validate()?;
    if f.logits(&vec![0.0; f.input_len()]).len() != s.classes() + 1 {
        return Err(invalid(
            "classifier outputs must be the negative class plus one per mask",
        ));
    }
    let agg = aggregate_masks(s, targets)?;
    let (_, h, wd) = agg.target.chw()?;
    let xs = to_f64(x);
    let m = to_f64(&agg.target);
    let n = to_f64(&agg.non_target);
    let (l_c, g_c) = classification_loss_grad(f, &xs, targets, &m)?;
    let (l_neg, g_neg, lambda_neg) = if w.legacy_entropy {
        let (l, g) = negative_entropy_loss_grad(f, &xs, &m)?;
        (l, g, w.lambda_e)
    } else {
        let (l, g) = negative_classification_loss_grad(f, &xs, &m)?;
        (l, g, w.lambda_nc)
    };
    let (l_a, ga_m, ga_n) = area_loss_grad(&m, &n, w.a_min, w.a_max);
    let (tv_m, gtv_m) = tv_grad(&m, h, wd);
    let (tv_n, gtv_n) = tv_grad(&n, h, wd);
    let l_tv = tv_m + tv_n;
    let total = l_c + lambda_neg * l_neg + w.lambda_a * l_a + w.lambda_tv * l_tv;
    let parts = LossComponents {
        total,
        classification: l_c,
        negative: l_neg,
        area: l_a,
        tv: l_tv,
    };
    let mut grads = vec![vec![0.0; m.len()]; s.classes()];
    for i in 0..m.len() {
        let gm = g_c[i] + lambda_neg * g_neg[i] + w.lambda_a * ga_m[i] + w.lambda_tv * gtv_m[i];
        grads[agg.target_source[i] - 1][i] += gm;
        if agg.non_target_source[i] > 0 {
            grads[agg.non_target_source[i] - 1][i] += w.lambda_a * ga_n[i] + w.lambda_tv * gtv_n[i];
        }
    }
    Ok((parts, grads))
}

pub fn explainer_total_loss<M: Model + ?Sized>(
    s: &ClassMaskSet,
    f: &M,
    x: &Tensor,
    targets: &[usize],
    w: &LossWeights,
) -> Result<LossComponents> {
    Ok(total_loss_grad(s, f, x, targets, w)?.0)
}

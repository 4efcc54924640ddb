use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::mask::BinaryMask;
use crate::tensor::Tensor;

fn spatial(map: &Tensor) -> Result<(usize, usize)> {
    let (c, h, w) = map.chw()?;
    if c != 1 {
        return Err(invalid("attribution maps must be single-channel"));
    }
    if !map.is_finite() {
        return Err(invalid("attribution map has non-finite values"));
    }
    Ok((h, w))
}

/// Keeps pixels above `μ + κσ` of the map with negatives clamped to zero.
pub fn threshold_simple(map: &Tensor, kappa: f64) -> Result<BinaryMask> {
    let (h, w) = spatial(map)?;
    let vals: Vec<f64> = map.data().iter().map(|&v| (v as f64).max(0.0)).collect();
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let t = mean + kappa * var.sqrt();
    BinaryMask::from_vec(h, w, vals.iter().map(|&v| v > t).collect())
}

/// A two-component one-dimensional Gaussian mixture.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gmm1d {
    pub weights: [f64; 2],
    pub means: [f64; 2],
    pub variances: [f64; 2],
    pub iterations: usize,
    pub log_likelihood: f64,
}

const MIN_VARIANCE: f64 = 1e-12;
const MAX_ITERATIONS: usize = 100;
const TOLERANCE: f64 = 1e-6;

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn log_density(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * ((x - mean).powi(2) / var + (2.0 * std::f64::consts::PI * var).ln())
}

impl Gmm1d {
    /// Responsibility of component `k` for value `x`.
    pub fn posterior(&self, x: f64, k: usize) -> f64 {
        let l0 = self.weights[0].ln() + log_density(x, self.means[0], self.variances[0]);
        let l1 = self.weights[1].ln() + log_density(x, self.means[1], self.variances[1]);
        let m = l0.max(l1);
        let (e0, e1) = ((l0 - m).exp(), (l1 - m).exp());
        [e0, e1][k] / (e0 + e1)
    }

    pub fn high_component(&self) -> usize {
        if self.means[1] >= self.means[0] {
            1
        } else {
            0
        }
    }
}

/// EM fit: means start at the 20th and 95th percentiles, equal weights and
/// the pooled variance; stops after 100 iterations or a log-likelihood gain
/// below 1e-6.
pub fn gmm_fit_1d(values: &[f64]) -> Result<Gmm1d> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(invalid("non-finite value"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    if sorted.len() < 2 || sorted[0] == sorted[sorted.len() - 1] {
        return Err(invalid("GMM fit needs at least two distinct values"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let pooled = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).max(MIN_VARIANCE);
    let mut g = Gmm1d {
        weights: [0.5, 0.5],
        means: [percentile(&sorted, 0.20), percentile(&sorted, 0.95)],
        variances: [pooled, pooled],
        iterations: 0,
        log_likelihood: f64::NEG_INFINITY,
    };
    let mut resp = vec![0.0; values.len()];
    for it in 1..=MAX_ITERATIONS {
        // E step
        let mut ll = 0.0;
        for (r, &x) in resp.iter_mut().zip(values) {
            let l0 = g.weights[0].ln() + log_density(x, g.means[0], g.variances[0]);
            let l1 = g.weights[1].ln() + log_density(x, g.means[1], g.variances[1]);
            let m = l0.max(l1);
            let (e0, e1) = ((l0 - m).exp(), (l1 - m).exp());
            ll += m + (e0 + e1).ln();
            *r = e1 / (e0 + e1);
        }
        // M step
        let n1: f64 = resp.iter().sum();
        let n0 = n - n1;
        if n0 <= 0.0 || n1 <= 0.0 {
            break;
        }
        let m1 = resp.iter().zip(values).map(|(r, x)| r * x).sum::<f64>() / n1;
        let m0 = resp.iter().zip(values).map(|(r, x)| (1.0 - r) * x).sum::<f64>() / n0;
        let v1 = resp.iter().zip(values).map(|(r, x)| r * (x - m1).powi(2)).sum::<f64>() / n1;
        let v0 = resp
            .iter()
            .zip(values)
            .map(|(r, x)| (1.0 - r) * (x - m0).powi(2))
            .sum::<f64>()
            / n0;
        g.weights = [n0 / n, n1 / n];
        g.means = [m0, m1];
        g.variances = [v0.max(MIN_VARIANCE), v1.max(MIN_VARIANCE)];
        g.iterations = it;
        let gain = ll - g.log_likelihood;
        g.log_likelihood = ll;
        if gain.abs() < TOLERANCE {
            break;
        }
    }
    if g.weights.iter().any(|w| w.is_nan() || *w <= 0.0) {
        return Err(Error::InvalidArgument("GMM collapsed to one component".into()));
    }
    Ok(g)
}

/// Keeps pixels whose posterior for the higher-mean component is at least
/// one half. The mixture is fitted on the strictly positive attributions
/// only: clamped negatives would form a zero-variance spike that captures
/// one component, leaving every other pixel in the "high" one.
pub fn threshold_gmm(map: &Tensor) -> Result<BinaryMask> {
    let (h, w) = spatial(map)?;
    let positive: Vec<f64> = map.data().iter().filter(|&&v| v > 0.0).map(|&v| v as f64).collect();
    let gmm = match gmm_fit_1d(&positive) {
        Ok(g) => g,
        Err(e) => {
            warn!("GMM thresholding degenerate ({e}); returning an empty mask");
            return Ok(BinaryMask::new(h, w));
        }
    };
    let hi = gmm.high_component();
    BinaryMask::from_vec(
        h,
        w,
        map.data()
            .iter()
            .map(|&v| v > 0.0 && gmm.posterior(v as f64, hi) >= 0.5)
            .collect(),
    )
}

/// Binarization strategy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Threshold {
    Simple { kappa: f64 },
    Gmm,
}

impl Default for Threshold {
    fn default() -> Self {
        Threshold::Simple { kappa: 2.0 }
    }
}

impl Threshold {
    pub fn apply(&self, map: &Tensor) -> Result<BinaryMask> {
        match *self {
            Threshold::Simple { kappa } => threshold_simple(map, kappa),
            Threshold::Gmm => threshold_gmm(map),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Threshold::Simple { .. } => "simple",
            Threshold::Gmm => "gmm",
        }
    }
}

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{channel_sum, check_reference, AttributionMap};
use crate::error::{invalid, Error, Result};
use crate::nn::Network;
use crate::rng::rng_for;
use crate::tensor::Tensor;

/// `x ⊙ ∂f_c/∂x`, summed over channels.
pub fn input_x_gradient(net: &Network, x: &Tensor, class_index: usize) -> Result<AttributionMap> {
    let g = net.input_gradient(x, class_index)?;
    let prod = x.zip_with(&g, |a, b| a * b)?;
    AttributionMap::new(channel_sum(&prod)?, "input_x_gradient", class_index)
}

/// Integrated gradients along the straight path from `reference` to `x`,
/// averaged with the midpoint rule over `steps` points.
pub fn integrated_gradients(
    net: &Network,
    x: &Tensor,
    class_index: usize,
    reference: &Tensor,
    steps: usize,
) -> Result<AttributionMap> {
    if steps == 0 {
        return Err(invalid("integrated gradients needs at least one step"));
    }
    net.check_input(x)?;
    net.check_class(class_index)?;
    check_reference(x, reference)?;
    let delta: Vec<f32> = x.data().iter().zip(reference.data()).map(|(a, b)| a - b).collect();
    let mut acc = vec![0.0f64; x.len()];
    let mut point = vec![0.0f32; x.len()];
    for k in 0..steps {
        let alpha = ((k as f64 + 0.5) / steps as f64) as f32;
        for ((p, &r), &d) in point.iter_mut().zip(reference.data()).zip(&delta) {
            *p = r + alpha * d;
        }
        for (a, g) in acc.iter_mut().zip(net.input_gradient_raw(&point, class_index)) {
            *a += g as f64;
        }
    }
    let values: Vec<f32> = acc
        .iter()
        .zip(&delta)
        .map(|(&a, &d)| (d as f64 * a / steps as f64) as f32)
        .collect();
    let t = Tensor::new(x.shape().to_vec(), values).expect("input shape");
    AttributionMap::new(channel_sum(&t)?, "integrated_gradients", class_index)
}

/// Expected gradients: the mean over `n_samples` draws of
/// `(x̃ − b) ⊙ ∇f(b + α(x̃ − b))` with `b` uniform over `baselines`,
/// `α ~ U(0, 1)` and `x̃ = x + N(0, σ²)`.
pub fn gradient_shap(
    net: &Network,
    x: &Tensor,
    class_index: usize,
    baselines: &[Tensor],
    n_samples: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<AttributionMap> {
    if n_samples == 0 {
        return Err(invalid("gradient_shap needs at least one sample"));
    }
    if baselines.is_empty() {
        return Err(Error::Empty("baseline set"));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(invalid("noise sigma must be finite and non-negative"));
    }
    net.check_input(x)?;
    net.check_class(class_index)?;
    for b in baselines {
        check_reference(x, b)?;
    }
    let mut rng = rng_for(seed, &[]);
    let noise = Normal::new(0.0, noise_sigma).map_err(|e| invalid(e.to_string()))?;
    let mut acc = vec![0.0f64; x.len()];
    let mut noisy = x.data().to_vec();
    let mut point = vec![0.0f32; x.len()];
    for _ in 0..n_samples {
        let b = &baselines[rng.gen_range(0..baselines.len())];
        let alpha: f32 = rng.gen();
        if noise_sigma > 0.0 {
            for (n, &v) in noisy.iter_mut().zip(x.data()) {
                *n = v + noise.sample(&mut rng) as f32;
            }
        }
        for ((p, &bv), &nv) in point.iter_mut().zip(b.data()).zip(&noisy) {
            *p = bv + alpha * (nv - bv);
        }
        let g = net.input_gradient_raw(&point, class_index);
        for (((a, &gv), &nv), &bv) in acc.iter_mut().zip(&g).zip(&noisy).zip(b.data()) {
            *a += (nv - bv) as f64 * gv as f64;
        }
    }
    let values = acc.iter().map(|&a| (a / n_samples as f64) as f32).collect();
    let t = Tensor::new(x.shape().to_vec(), values).expect("input shape");
    AttributionMap::new(channel_sum(&t)?, "gradient_shap", class_index)
}

use super::{channel_sum, check_reference, AttributionMap};
use crate::error::{Error, Result};
use crate::nn::layer::LayerSpec;
use crate::nn::network::{forward_acts, layer_backward_input, PreciseNetwork, Stack};
use crate::nn::Network;
use crate::tensor::Tensor;

/// Below this input difference a nonlinearity uses its gradient as multiplier.
pub const RESCALE_EPS: f64 = 1e-7;

/// DeepLift multipliers `∂°f_c/∂°x` under the Rescale rule, in `f64`.
///
/// Linear layers pass multipliers like gradients. Elementwise nonlinearities
/// use `Δy/Δx`. A max-pool window whose argmax moves between `x` and the
/// reference splits `Δy` over the two argmax positions in proportion to
/// their squared input differences, so every layer sums to delta exactly.
pub(crate) fn multipliers(p: &PreciseNetwork, x: &[f64], reference: &[f64], class_index: usize) -> Vec<f64> {
    let ax = forward_acts(p, x.to_vec());
    let ar = forward_acts(p, reference.to_vec());
    let mut m = vec![0.0; ax.last().expect("non-empty").len()];
    m[class_index] = 1.0;
    for i in (0..p.depth()).rev() {
        let spec = p.spec(i);
        let (xi, ri, xo, ro) = (&ax[i], &ar[i], &ax[i + 1], &ar[i + 1]);
        m = match spec {
            LayerSpec::Relu | LayerSpec::Sigmoid => {
                let relu = matches!(spec, LayerSpec::Relu);
                (0..m.len())
                    .map(|j| {
                        let dx = xi[j] - ri[j];
                        let slope = if dx.abs() >= RESCALE_EPS {
                            (xo[j] - ro[j]) / dx
                        } else if relu {
                            if xi[j] > 0.0 {
                                1.0
                            } else {
                                0.0
                            }
                        } else {
                            xo[j] * (1.0 - xo[j])
                        };
                        m[j] * slope
                    })
                    .collect()
            }
            LayerSpec::MaxPool2d { .. } => {
                let g = spec.pool_geom(p.shape(i), p.shape(i + 1)).expect("pool");
                let (arg_x, arg_r) = (g.argmax(xi), g.argmax(ri));
                let mut out = vec![0.0; xi.len()];
                for o in 0..m.len() {
                    let (a, b) = (arg_x[o], arg_r[o]);
                    let (da, db) = (xi[a] - ri[a], xi[b] - ri[b]);
                    let den = da * da + db * db;
                    if a == b || den < RESCALE_EPS * RESCALE_EPS {
                        out[a] += m[o];
                    } else {
                        let dy = xo[o] - ro[o];
                        out[a] += m[o] * dy * da / den;
                        out[b] += m[o] * dy * db / den;
                    }
                }
                out
            }
            _ => layer_backward_input(spec, p.weight(i), p.shape(i), p.shape(i + 1), xi, xo, &m),
        };
    }
    m
}

fn to_f64(t: &Tensor) -> Vec<f64> {
    t.data().iter().map(|&v| v as f64).collect()
}

pub(crate) fn deeplift_raw(p: &PreciseNetwork, x: &[f64], reference: &[f64], class_index: usize) -> Vec<f64> {
    let m = multipliers(p, x, reference, class_index);
    m.iter().zip(x).zip(reference).map(|((m, a), b)| m * (a - b)).collect()
}

/// DeepLift (Rescale) contributions of `x − reference` to `f_c(x) − f_c(reference)`.
pub fn deeplift(net: &Network, x: &Tensor, class_index: usize, reference: &Tensor) -> Result<AttributionMap> {
    deeplift_shap(net, x, class_index, std::slice::from_ref(reference)).map(|mut a| {
        a.method = "deeplift".into();
        a
    })
}

/// Mean of DeepLift attributions over a set of references.
pub fn deeplift_shap(net: &Network, x: &Tensor, class_index: usize, references: &[Tensor]) -> Result<AttributionMap> {
    net.check_input(x)?;
    net.check_class(class_index)?;
    if references.is_empty() {
        return Err(Error::Empty("baseline set"));
    }
    for r in references {
        check_reference(x, r)?;
    }
    let p = net.precise();
    let xs = to_f64(x);
    let mut acc = vec![0.0; x.len()];
    for r in references {
        for (a, v) in acc.iter_mut().zip(deeplift_raw(&p, &xs, &to_f64(r), class_index)) {
            *a += v;
        }
    }
    let n = references.len() as f64;
    let t = Tensor::new(x.shape().to_vec(), acc.iter().map(|&v| (v / n) as f32).collect()).expect("input shape");
    AttributionMap::new(channel_sum(&t)?, "deeplift_shap", class_index)
}

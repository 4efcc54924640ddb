//! Post-hoc attribution methods producing input-resolution relevance maps.

mod augsmooth;
mod baseline;
mod deeplift;
mod gradient;
mod lrp;

use serde::{Deserialize, Serialize};

pub use augsmooth::{aug_smooth, AugSmoothConfig, Augmentation};
pub use baseline::{BaselineSpec, DEFAULT_BASELINE_SAMPLES};
pub use deeplift::{deeplift, deeplift_shap, RESCALE_EPS};
pub use gradient::{gradient_shap, input_x_gradient, integrated_gradients};
pub use lrp::{lrp, LrpPreset, LrpRule, LrpRuleAssignment};

use crate::error::{invalid, Error, Result};
use crate::nn::Network;
use crate::tensor::Tensor;

/// Signed per-pixel relevance with the input's spatial shape `[H, W]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AttributionMap {
    pub values: Tensor,
    pub method: String,
    pub class_index: usize,
}

impl AttributionMap {
    pub fn new(values: Tensor, method: &str, class_index: usize) -> Result<Self> {
        if values.shape().len() != 2 {
            return Err(invalid("attribution maps are [H, W]"));
        }
        if !values.is_finite() {
            return Err(invalid(format!("{method} produced non-finite relevance")));
        }
        Ok(Self {
            values,
            method: method.to_owned(),
            class_index,
        })
    }

    pub fn height(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.values.shape()[1]
    }

    /// Total relevance, accumulated in `f64`.
    pub fn total(&self) -> f64 {
        self.values.sum()
    }
}

/// Sums a `[C, H, W]` (or `[H, W]`) tensor over channels into `[H, W]`.
pub fn channel_sum(t: &Tensor) -> Result<Tensor> {
    let (c, h, w) = t.chw()?;
    let plane = h * w;
    let mut out = t.data()[..plane].to_vec();
    for ch in 1..c {
        for (o, &v) in out.iter_mut().zip(&t.data()[ch * plane..(ch + 1) * plane]) {
            *o += v;
        }
    }
    Ok(Tensor::new(vec![h, w], out).expect("positive dimensions"))
}

pub(crate) fn check_reference(x: &Tensor, reference: &Tensor) -> Result<()> {
    if x.shape() != reference.shape() {
        return Err(Error::Shape {
            expected: x.shape().to_vec(),
            actual: reference.shape().to_vec(),
        });
    }
    Ok(())
}

/// Unsupervised baseline: darkness `1 − gray(x)`, clamped to `[0, 1]`.
/// Three-channel inputs use Rec. 601 luma; other channel counts are averaged.
pub fn raw_intensity(x: &Tensor) -> Result<AttributionMap> {
    let (c, h, w) = x.chw()?;
    let plane = h * w;
    let weights: Vec<f32> = if c == 3 {
        vec![0.299, 0.587, 0.114]
    } else {
        vec![1.0 / c as f32; c]
    };
    let values = Tensor::from_fn(&[h, w], |i| {
        let gray: f32 = (0..c).map(|ch| weights[ch] * x.data()[ch * plane + i]).sum();
        (1.0 - gray).clamp(0.0, 1.0)
    });
    AttributionMap::new(values, "raw", 0)
}

pub const DEFAULT_IG_STEPS: usize = 50;
pub const DEFAULT_GRADIENT_SHAP_SAMPLES: usize = 5;

fn default_steps() -> usize {
    DEFAULT_IG_STEPS
}

fn default_gs_samples() -> usize {
    DEFAULT_GRADIENT_SHAP_SAMPLES
}

fn distribution() -> BaselineSpec {
    BaselineSpec::DamageFreeDistribution {
        n_samples: DEFAULT_BASELINE_SAMPLES,
        seed: 0,
    }
}

/// A configured attribution method.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum Method {
    InputXGradient,
    IntegratedGradients {
        #[serde(default = "default_steps")]
        steps: usize,
        #[serde(default)]
        baseline: BaselineSpec,
    },
    #[serde(rename = "deeplift")]
    DeepLift {
        #[serde(default)]
        baseline: BaselineSpec,
    },
    #[serde(rename = "deeplift_shap")]
    DeepLiftShap {
        #[serde(default = "distribution")]
        baseline: BaselineSpec,
    },
    GradientShap {
        #[serde(default = "distribution")]
        baseline: BaselineSpec,
        #[serde(default = "default_gs_samples")]
        n_samples: usize,
        #[serde(default)]
        noise_sigma: f64,
        #[serde(default)]
        seed: u64,
    },
    Lrp {
        #[serde(default)]
        rules: LrpPreset,
    },
    /// Mask of a trained explainer network.
    Explainer,
    /// Raw pixel darkness; needs no model.
    Raw,
    #[serde(rename = "augsmooth")]
    AugSmooth {
        base: Box<Method>,
        #[serde(default)]
        augment: AugSmoothConfig,
    },
}

impl Method {
    pub fn tag(&self) -> String {
        match self {
            Method::InputXGradient => "input_x_gradient".into(),
            Method::IntegratedGradients { .. } => "integrated_gradients".into(),
            Method::DeepLift { .. } => "deeplift".into(),
            Method::DeepLiftShap { .. } => "deeplift_shap".into(),
            Method::GradientShap { .. } => "gradient_shap".into(),
            Method::Lrp { .. } => "lrp".into(),
            Method::Explainer => "explainer".into(),
            Method::Raw => "raw".into(),
            Method::AugSmooth { base, .. } => format!("{}+augsmooth", base.tag()),
        }
    }

    /// The methods compared by the benchmark, with their default parameters.
    pub fn standard_set() -> Vec<Method> {
        vec![
            Method::InputXGradient,
            Method::IntegratedGradients {
                steps: DEFAULT_IG_STEPS,
                baseline: BaselineSpec::default(),
            },
            Method::DeepLift {
                baseline: BaselineSpec::default(),
            },
            Method::DeepLiftShap {
                baseline: distribution(),
            },
            Method::GradientShap {
                baseline: distribution(),
                n_samples: DEFAULT_GRADIENT_SHAP_SAMPLES,
                noise_sigma: 0.0,
                seed: 0,
            },
            Method::Lrp {
                rules: LrpPreset::default(),
            },
            Method::Raw,
        ]
    }

    pub fn needs_explainer(&self) -> bool {
        match self {
            Method::Explainer => true,
            Method::AugSmooth { base, .. } => base.needs_explainer(),
            _ => false,
        }
    }
}

/// Everything a method may need besides the input: the frozen classifier, the
/// damage-free pool for baselines and optionally a trained explainer.
#[derive(Clone, Copy, Debug)]
pub struct Attributor<'a> {
    pub net: &'a Network,
    pub pool: &'a [Tensor],
    pub explainer: Option<&'a Network>,
}

impl<'a> Attributor<'a> {
    pub fn new(net: &'a Network, pool: &'a [Tensor]) -> Self {
        Self {
            net,
            pool,
            explainer: None,
        }
    }

    pub fn with_explainer(mut self, explainer: &'a Network) -> Self {
        self.explainer = Some(explainer);
        self
    }

    pub fn attribute(&self, method: &Method, x: &Tensor, class_index: usize) -> Result<AttributionMap> {
        let shape = x.shape();
        match method {
            Method::InputXGradient => input_x_gradient(self.net, x, class_index),
            Method::IntegratedGradients { steps, baseline } => {
                let r = baseline.reference(shape, self.pool)?;
                integrated_gradients(self.net, x, class_index, &r, *steps)
            }
            Method::DeepLift { baseline } => deeplift(self.net, x, class_index, &baseline.reference(shape, self.pool)?),
            Method::DeepLiftShap { baseline } => {
                deeplift_shap(self.net, x, class_index, &baseline.samples(shape, self.pool)?)
            }
            Method::GradientShap {
                baseline,
                n_samples,
                noise_sigma,
                seed,
            } => {
                let b = baseline.samples(shape, self.pool)?;
                gradient_shap(self.net, x, class_index, &b, *n_samples, *noise_sigma, *seed)
            }
            Method::Lrp { rules } => lrp(
                self.net,
                x,
                class_index,
                &LrpRuleAssignment::from_preset(self.net, rules)?,
            ),
            Method::Explainer => {
                let e = self
                    .explainer
                    .ok_or_else(|| invalid("the explainer method needs a trained explainer network"))?;
                let mut map = crate::explainer::explainer_attribution(e, x)?;
                map.class_index = class_index;
                Ok(map)
            }
            Method::Raw => raw_intensity(x).map(|mut m| {
                m.class_index = class_index;
                m
            }),
            Method::AugSmooth { base, augment } => aug_smooth(x, augment, |xa| self.attribute(base, xa, class_index)),
        }
    }
}

use serde::{Deserialize, Serialize};

use super::kernels::{ConvGeom, PoolGeom, UpsampleGeom};
use crate::error::{invalid, Error, Result};

/// One layer of a sequential network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    /// Fixed elementwise `(x - mean) / std`; centres pixel intensities.
    Normalize {
        mean: f32,
        std: f32,
    },
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    Relu,
    MaxPool2d {
        window: usize,
        stride: usize,
    },
    Linear {
        in_features: usize,
        out_features: usize,
    },
    Flatten,
    /// Nearest-neighbour upsampling; used by the explainer decoder.
    Upsample2d {
        factor: usize,
    },
    /// Elementwise logistic; used as the explainer's mask head.
    Sigmoid,
}

impl LayerSpec {
    /// 3×3, stride 1, size-preserving convolution.
    pub fn conv3x3(in_channels: usize, out_channels: usize) -> Self {
        LayerSpec::Conv2d {
            in_channels,
            out_channels,
            kernel: 3,
            stride: 1,
            padding: 1,
        }
    }

    pub fn maxpool2() -> Self {
        LayerSpec::MaxPool2d { window: 2, stride: 2 }
    }

    pub fn linear(in_features: usize, out_features: usize) -> Self {
        LayerSpec::Linear {
            in_features,
            out_features,
        }
    }

    /// Maps `[0, 1]` pixels to `[-1, 1]`.
    pub fn centre() -> Self {
        LayerSpec::Normalize { mean: 0.5, std: 0.5 }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Normalize { .. } => "normalize",
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::Relu => "relu",
            LayerSpec::MaxPool2d { .. } => "maxpool2d",
            LayerSpec::Linear { .. } => "linear",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Upsample2d { .. } => "upsample2d",
            LayerSpec::Sigmoid => "sigmoid",
        }
    }

    pub fn is_parameterized(&self) -> bool {
        matches!(self, LayerSpec::Conv2d { .. } | LayerSpec::Linear { .. })
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                ..
            } => in_channels >= 1 && out_channels >= 1 && kernel >= 1 && stride >= 1,
            LayerSpec::MaxPool2d { window, stride } => window >= 1 && stride >= 1,
            LayerSpec::Linear {
                in_features,
                out_features,
            } => in_features >= 1 && out_features >= 1,
            LayerSpec::Upsample2d { factor } => factor >= 1,
            LayerSpec::Normalize { mean, std } => mean.is_finite() && std.is_finite() && std > 0.0,
            LayerSpec::Relu | LayerSpec::Flatten | LayerSpec::Sigmoid => true,
        };
        if ok {
            Ok(())
        } else {
            Err(invalid(format!("invalid layer parameters: {self:?}")))
        }
    }

    /// `(weight shape, bias shape)` for parameterized layers.
    pub fn param_shapes(&self) -> Option<(Vec<usize>, Vec<usize>)> {
        match *self {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => Some((vec![out_channels, in_channels, kernel, kernel], vec![out_channels])),
            LayerSpec::Linear {
                in_features,
                out_features,
            } => Some((vec![out_features, in_features], vec![out_features])),
            _ => None,
        }
    }

    pub fn fan_in(&self) -> usize {
        match *self {
            LayerSpec::Conv2d {
                in_channels, kernel, ..
            } => in_channels * kernel * kernel,
            LayerSpec::Linear { in_features, .. } => in_features,
            _ => 0,
        }
    }

    /// Shape produced by this layer for the given input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        self.validate()?;
        let mismatch = |expected: Vec<usize>| Error::Shape {
            expected,
            actual: input.to_vec(),
        };
        match *self {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                let [c, h, w] = input[..] else {
                    return Err(mismatch(vec![in_channels, 0, 0]));
                };
                if c != in_channels || h + 2 * padding < kernel || w + 2 * padding < kernel {
                    return Err(mismatch(vec![in_channels, h.max(kernel), w.max(kernel)]));
                }
                Ok(vec![
                    out_channels,
                    (h + 2 * padding - kernel) / stride + 1,
                    (w + 2 * padding - kernel) / stride + 1,
                ])
            }
            LayerSpec::MaxPool2d { window, stride } => {
                let [c, h, w] = input[..] else {
                    return Err(mismatch(vec![0, window, window]));
                };
                if h < window || w < window {
                    return Err(mismatch(vec![c, window, window]));
                }
                Ok(vec![c, (h - window) / stride + 1, (w - window) / stride + 1])
            }
            LayerSpec::Linear {
                in_features,
                out_features,
            } => {
                if input != [in_features] {
                    return Err(mismatch(vec![in_features]));
                }
                Ok(vec![out_features])
            }
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
            LayerSpec::Upsample2d { factor } => {
                let [c, h, w] = input[..] else {
                    return Err(mismatch(vec![0, 0, 0]));
                };
                Ok(vec![c, h * factor, w * factor])
            }
            LayerSpec::Relu | LayerSpec::Sigmoid | LayerSpec::Normalize { .. } => Ok(input.to_vec()),
        }
    }

    pub(crate) fn conv_geom(&self, input: &[usize], output: &[usize]) -> Option<ConvGeom> {
        match *self {
            LayerSpec::Conv2d {
                kernel,
                stride,
                padding,
                ..
            } => Some(ConvGeom {
                in_c: input[0],
                in_h: input[1],
                in_w: input[2],
                out_c: output[0],
                out_h: output[1],
                out_w: output[2],
                kernel,
                stride,
                padding,
            }),
            _ => None,
        }
    }

    pub(crate) fn pool_geom(&self, input: &[usize], output: &[usize]) -> Option<PoolGeom> {
        match *self {
            LayerSpec::MaxPool2d { window, stride } => Some(PoolGeom {
                channels: input[0],
                in_h: input[1],
                in_w: input[2],
                out_h: output[1],
                out_w: output[2],
                window,
                stride,
            }),
            _ => None,
        }
    }

    pub(crate) fn upsample_geom(&self, input: &[usize]) -> Option<UpsampleGeom> {
        match *self {
            LayerSpec::Upsample2d { factor } => Some(UpsampleGeom {
                channels: input[0],
                in_h: input[1],
                in_w: input[2],
                factor,
            }),
            _ => None,
        }
    }
}

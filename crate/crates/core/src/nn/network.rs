use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::kernels::{self, sigmoid};
use super::layer::LayerSpec;
use super::real::Real;
use crate::error::{invalid, Error, Result};
use crate::tensor::Tensor;

/// Weight and bias of one parameterized layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Params {
    pub weight: Tensor,
    pub bias: Tensor,
}

/// A sequential network: layer specs, their parameters and the input shape.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    input_shape: Vec<usize>,
    layers: Vec<LayerSpec>,
    params: Vec<Option<Params>>,
    /// Activation shapes; `shapes[0]` is the input, `shapes[i + 1]` layer i's output.
    shapes: Vec<Vec<usize>>,
}

/// Activations recorded during one forward pass.
#[derive(Clone, Debug)]
pub struct ActivationTrace {
    activations: Vec<Tensor>,
}

impl ActivationTrace {
    /// Number of layers covered.
    pub fn len(&self) -> usize {
        self.activations.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input(&self, layer: usize) -> &Tensor {
        &self.activations[layer]
    }

    pub fn output(&self, layer: usize) -> &Tensor {
        &self.activations[layer + 1]
    }

    pub fn logits(&self) -> &Tensor {
        self.activations.last().expect("trace is never empty")
    }
}

/// Per-layer parameter gradients, laid out like [`Network`] parameters.
#[derive(Clone, Debug)]
pub struct Gradients {
    pub layers: Vec<Option<(Vec<f32>, Vec<f32>)>>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Self {
            layers: net
                .params
                .iter()
                .map(|p| p.as_ref().map(|p| (vec![0.0; p.weight.len()], vec![0.0; p.bias.len()])))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            if let (Some((aw, ab)), Some((bw, bb))) = (a, b) {
                aw.iter_mut().zip(bw).for_each(|(x, y)| *x += y);
                ab.iter_mut().zip(bb).for_each(|(x, y)| *x += y);
            }
        }
    }

    pub fn scale(&mut self, s: f32) {
        for (w, b) in self.layers.iter_mut().flatten() {
            w.iter_mut().for_each(|x| *x *= s);
            b.iter_mut().for_each(|x| *x *= s);
        }
    }
}

/// Read access to a layer stack at some precision.
pub(crate) trait Stack<T: Real> {
    fn depth(&self) -> usize;
    fn spec(&self, i: usize) -> &LayerSpec;
    fn weight(&self, i: usize) -> &[T];
    fn bias(&self, i: usize) -> &[T];
    fn shape(&self, i: usize) -> &[usize];
}

impl Stack<f32> for Network {
    fn depth(&self) -> usize {
        self.layers.len()
    }
    fn spec(&self, i: usize) -> &LayerSpec {
        &self.layers[i]
    }
    fn weight(&self, i: usize) -> &[f32] {
        self.params[i].as_ref().map_or(&[], |p| p.weight.data())
    }
    fn bias(&self, i: usize) -> &[f32] {
        self.params[i].as_ref().map_or(&[], |p| p.bias.data())
    }
    fn shape(&self, i: usize) -> &[usize] {
        &self.shapes[i]
    }
}

/// An `f64` copy of a network, used as a reference-precision evaluator.
#[derive(Clone, Debug)]
pub struct PreciseNetwork {
    layers: Vec<LayerSpec>,
    weights: Vec<(Vec<f64>, Vec<f64>)>,
    shapes: Vec<Vec<usize>>,
}

impl Stack<f64> for PreciseNetwork {
    fn depth(&self) -> usize {
        self.layers.len()
    }
    fn spec(&self, i: usize) -> &LayerSpec {
        &self.layers[i]
    }
    fn weight(&self, i: usize) -> &[f64] {
        &self.weights[i].0
    }
    fn bias(&self, i: usize) -> &[f64] {
        &self.weights[i].1
    }
    fn shape(&self, i: usize) -> &[usize] {
        &self.shapes[i]
    }
}

impl PreciseNetwork {
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let acts = forward_acts(self, x.to_vec());
        acts.into_iter().last().expect("non-empty")
    }

    /// Gradient of logit `class` with respect to the input.
    pub fn input_gradient(&self, x: &[f64], class: usize) -> Vec<f64> {
        let acts = forward_acts(self, x.to_vec());
        let mut g = vec![0.0; acts.last().expect("non-empty").len()];
        g[class] = 1.0;
        backward_acts(self, &acts, g, None)
    }

    /// Parameter gradients of `Σ grad_out · logits`, as `(weight, bias)` per layer.
    pub fn param_gradients(&self, x: &[f64], grad_out: &[f64]) -> Vec<(Vec<f64>, Vec<f64>)> {
        let acts = forward_acts(self, x.to_vec());
        let mut grads: Vec<(Vec<f64>, Vec<f64>)> = self
            .weights
            .iter()
            .map(|(w, b)| (vec![0.0; w.len()], vec![0.0; b.len()]))
            .collect();
        backward_acts(self, &acts, grad_out.to_vec(), Some(&mut grads));
        grads
    }
}

pub(crate) fn layer_forward<T: Real>(
    spec: &LayerSpec,
    weight: &[T],
    bias: &[T],
    in_shape: &[usize],
    out_shape: &[usize],
    input: &[T],
) -> Vec<T> {
    let mut out = vec![T::zero(); out_shape.iter().product()];
    match spec {
        LayerSpec::Conv2d { .. } => {
            let g = spec.conv_geom(in_shape, out_shape).expect("conv");
            kernels::conv2d_forward(&g, input, weight, bias, &mut out);
        }
        LayerSpec::Linear { .. } => kernels::linear_forward(input, weight, bias, &mut out),
        LayerSpec::MaxPool2d { .. } => {
            let g = spec.pool_geom(in_shape, out_shape).expect("pool");
            kernels::maxpool_forward(&g, input, &mut out);
        }
        LayerSpec::Upsample2d { .. } => {
            let g = spec.upsample_geom(in_shape).expect("upsample");
            kernels::upsample_forward(&g, input, &mut out);
        }
        LayerSpec::Relu => {
            for (o, &v) in out.iter_mut().zip(input) {
                *o = v.max(T::zero());
            }
        }
        LayerSpec::Sigmoid => {
            for (o, &v) in out.iter_mut().zip(input) {
                *o = sigmoid(v);
            }
        }
        LayerSpec::Flatten => out.copy_from_slice(input),
        LayerSpec::Normalize { mean, std } => {
            let (m, inv) = (T::from_f32(*mean), T::one() / T::from_f32(*std));
            for (o, &v) in out.iter_mut().zip(input) {
                *o = (v - m) * inv;
            }
        }
    }
    out
}

/// Vector-Jacobian product of one layer with respect to its input.
///
/// `weight` may differ from the layer's own weights (used by LRP rules).
pub(crate) fn layer_backward_input<T: Real>(
    spec: &LayerSpec,
    weight: &[T],
    in_shape: &[usize],
    out_shape: &[usize],
    input: &[T],
    output: &[T],
    grad_out: &[T],
) -> Vec<T> {
    let mut grad_in = vec![T::zero(); input.len()];
    match spec {
        LayerSpec::Conv2d { .. } => {
            let g = spec.conv_geom(in_shape, out_shape).expect("conv");
            kernels::conv2d_backward_input(&g, grad_out, weight, &mut grad_in);
        }
        LayerSpec::Linear { .. } => kernels::linear_backward_input(grad_out, weight, &mut grad_in),
        LayerSpec::MaxPool2d { .. } => {
            let g = spec.pool_geom(in_shape, out_shape).expect("pool");
            kernels::maxpool_backward(&g, input, grad_out, &mut grad_in);
        }
        LayerSpec::Upsample2d { .. } => {
            let g = spec.upsample_geom(in_shape).expect("upsample");
            kernels::upsample_backward(&g, grad_out, &mut grad_in);
        }
        LayerSpec::Relu => {
            for ((gi, &x), &go) in grad_in.iter_mut().zip(input).zip(grad_out) {
                *gi = if x > T::zero() { go } else { T::zero() };
            }
        }
        LayerSpec::Sigmoid => {
            for ((gi, &y), &go) in grad_in.iter_mut().zip(output).zip(grad_out) {
                *gi = go * y * (T::one() - y);
            }
        }
        LayerSpec::Flatten => grad_in.copy_from_slice(grad_out),
        LayerSpec::Normalize { std, .. } => {
            let inv = T::one() / T::from_f32(*std);
            for (gi, &go) in grad_in.iter_mut().zip(grad_out) {
                *gi = go * inv;
            }
        }
    }
    grad_in
}

pub(crate) fn forward_acts<T: Real, S: Stack<T> + ?Sized>(s: &S, x: Vec<T>) -> Vec<Vec<T>> {
    let mut acts = Vec::with_capacity(s.depth() + 1);
    acts.push(x);
    for i in 0..s.depth() {
        let next = layer_forward(s.spec(i), s.weight(i), s.bias(i), s.shape(i), s.shape(i + 1), &acts[i]);
        acts.push(next);
    }
    acts
}

/// Backpropagates `grad` from the output to the input, optionally
/// accumulating parameter gradients.
pub(crate) fn backward_acts<T: Real, S: Stack<T> + ?Sized>(
    s: &S,
    acts: &[Vec<T>],
    mut grad: Vec<T>,
    mut params: Option<&mut [(Vec<T>, Vec<T>)]>,
) -> Vec<T> {
    for i in (0..s.depth()).rev() {
        let spec = s.spec(i);
        if let Some(grads) = params.as_deref_mut() {
            let (gw, gb) = &mut grads[i];
            match spec {
                LayerSpec::Conv2d { .. } => {
                    let g = spec.conv_geom(s.shape(i), s.shape(i + 1)).expect("conv");
                    kernels::conv2d_backward_params(&g, &acts[i], &grad, gw, gb);
                }
                LayerSpec::Linear { .. } => kernels::linear_backward_params(&acts[i], &grad, gw, gb),
                _ => {}
            }
        }
        grad = layer_backward_input(
            spec,
            s.weight(i),
            s.shape(i),
            s.shape(i + 1),
            &acts[i],
            &acts[i + 1],
            &grad,
        );
    }
    grad
}

/// A differentiable classifier seen through `f64` vectors, whatever its
/// internal precision.
pub trait Model {
    fn input_len(&self) -> usize;
    fn logits(&self, x: &[f64]) -> Vec<f64>;
    /// Vector-Jacobian product `grad_logitsᵀ · ∂logits/∂x` at `x`.
    fn logits_vjp(&self, x: &[f64], grad_logits: &[f64]) -> Vec<f64>;
}

impl Model for Network {
    fn input_len(&self) -> usize {
        self.input_shape.iter().product()
    }

    fn logits(&self, x: &[f64]) -> Vec<f64> {
        let acts = forward_acts(self, x.iter().map(|&v| v as f32).collect());
        acts.last().expect("non-empty").iter().map(|&v| v as f64).collect()
    }

    fn logits_vjp(&self, x: &[f64], grad_logits: &[f64]) -> Vec<f64> {
        let acts = forward_acts(self, x.iter().map(|&v| v as f32).collect());
        let g = grad_logits.iter().map(|&v| v as f32).collect();
        backward_acts(self, &acts, g, None)
            .into_iter()
            .map(|v| v as f64)
            .collect()
    }
}

impl Model for PreciseNetwork {
    fn input_len(&self) -> usize {
        self.shapes[0].iter().product()
    }

    fn logits(&self, x: &[f64]) -> Vec<f64> {
        self.forward(x)
    }

    fn logits_vjp(&self, x: &[f64], grad_logits: &[f64]) -> Vec<f64> {
        let acts = forward_acts(self, x.to_vec());
        backward_acts(self, &acts, grad_logits.to_vec(), None)
    }
}

/// Numerically stable softmax in `f64`.
pub fn softmax_f64(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Softmax of a logit vector, stabilized by max subtraction.
pub fn softmax(logits: &Tensor) -> Tensor {
    let p = softmax_f64(&logits.data().iter().map(|&v| v as f64).collect::<Vec<_>>());
    Tensor::new(logits.shape().to_vec(), p.into_iter().map(|v| v as f32).collect()).expect("same shape")
}

impl Network {
    /// Builds a network with Kaiming-uniform (fan-in) weights and zero biases.
    pub fn new(input_shape: &[usize], layers: Vec<LayerSpec>, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(layers.len());
        for spec in &layers {
            params.push(spec.param_shapes().map(|(ws, bs)| {
                let bound = (6.0 / spec.fan_in() as f64).sqrt() as f32;
                Params {
                    weight: Tensor::from_fn(&ws, |_| rng.gen_range(-bound..bound)),
                    bias: Tensor::zeros(&bs),
                }
            }));
        }
        Self::from_parts(input_shape, layers, params)
    }

    /// Assembles a network from explicit parameters, validating all shapes.
    pub fn from_parts(input_shape: &[usize], layers: Vec<LayerSpec>, params: Vec<Option<Params>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Empty("layer list"));
        }
        if layers.len() != params.len() {
            return Err(invalid("one parameter slot per layer required"));
        }
        if input_shape.is_empty() || input_shape.contains(&0) {
            return Err(invalid(format!("bad input shape {input_shape:?}")));
        }
        let mut shapes = vec![input_shape.to_vec()];
        for (spec, p) in layers.iter().zip(&params) {
            let next = spec.output_shape(shapes.last().expect("non-empty"))?;
            match (spec.param_shapes(), p) {
                (Some((ws, bs)), Some(p)) => {
                    if p.weight.shape() != ws || p.bias.shape() != bs {
                        return Err(Error::Shape {
                            expected: ws,
                            actual: p.weight.shape().to_vec(),
                        });
                    }
                }
                (None, None) => {}
                _ => return Err(invalid(format!("parameter presence mismatch for {}", spec.name()))),
            }
            shapes.push(next);
        }
        Ok(Self {
            input_shape: input_shape.to_vec(),
            layers,
            params,
            shapes,
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        self.shapes.last().expect("non-empty")
    }

    /// Shape of the activation entering layer `i` (`i == len` gives the output).
    pub fn activation_shape(&self, i: usize) -> &[usize] {
        &self.shapes[i]
    }

    pub fn num_outputs(&self) -> usize {
        self.output_shape().iter().product()
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn params(&self) -> &[Option<Params>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Option<Params>] {
        &mut self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params
            .iter()
            .flatten()
            .map(|p| p.weight.len() + p.bias.len())
            .sum()
    }

    /// Hash of every parameter bit pattern.
    pub fn checksum(&self) -> u64 {
        self.params.iter().flatten().fold(0u64, |h, p| {
            h.rotate_left(7) ^ p.weight.checksum() ^ p.bias.checksum().rotate_left(3)
        })
    }

    pub fn precise(&self) -> PreciseNetwork {
        PreciseNetwork {
            layers: self.layers.clone(),
            weights: (0..self.layers.len())
                .map(|i| {
                    (
                        self.weight(i).iter().map(|&v| v as f64).collect(),
                        self.bias(i).iter().map(|&v| v as f64).collect(),
                    )
                })
                .collect(),
            shapes: self.shapes.clone(),
        }
    }

    pub fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.shape() != self.input_shape.as_slice() {
            return Err(Error::Shape {
                expected: self.input_shape.clone(),
                actual: x.shape().to_vec(),
            });
        }
        Ok(())
    }

    pub fn check_class(&self, class_index: usize) -> Result<()> {
        let classes = self.num_outputs();
        if class_index >= classes {
            return Err(Error::InvalidClass {
                index: class_index,
                classes,
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let acts = forward_acts(self, x.data().to_vec());
        let out = acts.into_iter().last().expect("non-empty");
        Ok(Tensor::new(self.output_shape().to_vec(), out).expect("shape checked at build"))
    }

    pub fn forward_with_trace(&self, x: &Tensor) -> Result<(Tensor, ActivationTrace)> {
        self.check_input(x)?;
        let acts = forward_acts(self, x.data().to_vec());
        let activations: Vec<Tensor> = acts
            .into_iter()
            .zip(&self.shapes)
            .map(|(a, s)| Tensor::new(s.clone(), a).expect("shape checked at build"))
            .collect();
        let logits = activations.last().expect("non-empty").clone();
        Ok((logits, ActivationTrace { activations }))
    }

    /// Gradient of the pre-softmax logit `class_index` with respect to `x`.
    pub fn input_gradient(&self, x: &Tensor, class_index: usize) -> Result<Tensor> {
        self.check_input(x)?;
        self.check_class(class_index)?;
        Ok(Tensor::new(x.shape().to_vec(), self.input_gradient_raw(x.data(), class_index)).expect("same shape"))
    }

    pub(crate) fn input_gradient_raw(&self, x: &[f32], class_index: usize) -> Vec<f32> {
        let acts = forward_acts(self, x.to_vec());
        let mut g = vec![0.0; self.num_outputs()];
        g[class_index] = 1.0;
        backward_acts(self, &acts, g, None)
    }

    /// Backpropagates `grad_output` through a recorded trace, returning the input gradient.
    pub fn backward(&self, trace: &ActivationTrace, grad_output: &Tensor) -> Result<Tensor> {
        self.backward_inner(trace, grad_output, None)
    }

    /// Like [`Network::backward`], also accumulating parameter gradients into `grads`.
    pub fn backward_with_params(
        &self,
        trace: &ActivationTrace,
        grad_output: &Tensor,
        grads: &mut Gradients,
    ) -> Result<Tensor> {
        self.backward_inner(trace, grad_output, Some(grads))
    }

    fn backward_inner(
        &self,
        trace: &ActivationTrace,
        grad_output: &Tensor,
        grads: Option<&mut Gradients>,
    ) -> Result<Tensor> {
        if trace.len() != self.layers.len() {
            return Err(invalid("trace does not belong to this network"));
        }
        if grad_output.shape() != self.output_shape() {
            return Err(Error::Shape {
                expected: self.output_shape().to_vec(),
                actual: grad_output.shape().to_vec(),
            });
        }
        let acts: Vec<Vec<f32>> = trace.activations.iter().map(|t| t.data().to_vec()).collect();
        let g = match grads {
            None => backward_acts(self, &acts, grad_output.data().to_vec(), None),
            Some(grads) => {
                let mut local: Vec<(Vec<f32>, Vec<f32>)> =
                    grads.layers.iter_mut().map(|l| l.take().unwrap_or_default()).collect();
                let g = backward_acts(self, &acts, grad_output.data().to_vec(), Some(&mut local));
                for ((slot, (w, b)), p) in grads.layers.iter_mut().zip(local).zip(&self.params) {
                    *slot = p.as_ref().map(|_| (w, b));
                }
                g
            }
        };
        Ok(Tensor::new(self.input_shape.clone(), g).expect("input shape"))
    }
}

/// The default 64×64 classifier: three conv/ReLU/pool stages and a 128-unit head.
pub fn mini_vgg(input_shape: &[usize], classes: usize, seed: u64) -> Result<Network> {
    let [c, h, w] = input_shape[..] else {
        return Err(invalid("mini_vgg expects a [C, H, W] input"));
    };
    if h % 8 != 0 || w % 8 != 0 {
        return Err(invalid("mini_vgg needs spatial sizes divisible by 8"));
    }
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
        LayerSpec::Flatten,
        LayerSpec::linear(32 * (h / 8) * (w / 8), 128),
        LayerSpec::Relu,
        LayerSpec::linear(128, classes),
    ];
    Network::new(input_shape, layers, seed)
}

/// Uniform random tensor in `[lo, hi)`, seeded.
pub fn random_tensor(shape: &[usize], lo: f32, hi: f32, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| rng.gen_range(lo..hi))
}

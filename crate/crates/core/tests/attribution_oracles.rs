//! Attribution methods against closed forms, hand computations and each other.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xaiseg_core::attribution::{
    aug_smooth, deeplift, deeplift_shap, gradient_shap, input_x_gradient, integrated_gradients, lrp, AttributionMap,
    Attributor, AugSmoothConfig, BaselineSpec, LrpRule, LrpRuleAssignment, Method,
};
use xaiseg_core::nn::{random_tensor, LayerSpec, Network, Params};
use xaiseg_core::Tensor;

fn t(shape: &[usize], data: Vec<f32>) -> Tensor {
    Tensor::new(shape.to_vec(), data).unwrap()
}

fn max_abs_diff(a: &AttributionMap, b: &[f64]) -> f64 {
    a.values
        .data()
        .iter()
        .zip(b)
        .map(|(&x, y)| (x as f64 - y).abs())
        .fold(0.0, f64::max)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-12)
}

/// `[1, 4, 5]` input, flattened into one linear layer with random weights and bias.
fn linear_model(seed: u64) -> (Network, Vec<f32>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w: Vec<f32> = (0..40).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let b: Vec<f32> = (0..2).map(|_| rng.gen_range(-0.5..0.5)).collect();
    let net = Network::from_parts(
        &[1, 4, 5],
        vec![LayerSpec::Flatten, LayerSpec::linear(20, 2)],
        vec![
            None,
            Some(Params {
                weight: t(&[2, 20], w.clone()),
                bias: t(&[2], b),
            }),
        ],
    )
    .unwrap();
    (net, w[20..].to_vec())
}

fn toy_cnn(seed: u64) -> Network {
    Network::new(
        &[1, 8, 8],
        vec![
            LayerSpec::conv3x3(1, 4),
            LayerSpec::Relu,
            LayerSpec::maxpool2(),
            LayerSpec::conv3x3(4, 4),
            LayerSpec::Relu,
            LayerSpec::Flatten,
            LayerSpec::linear(64, 2),
        ],
        seed,
    )
    .unwrap()
}

fn logit(net: &Network, x: &Tensor, c: usize) -> f64 {
    net.precise()
        .forward(&x.data().iter().map(|&v| v as f64).collect::<Vec<_>>())[c]
}

#[test]
fn linear_models_agree_across_methods() {
    for seed in 0..20 {
        let (net, w) = linear_model(seed);
        let x = random_tensor(&[1, 4, 5], 0.0, 1.0, 100 + seed);
        let zero = Tensor::zeros(&[1, 4, 5]);
        let expect: Vec<f64> = x.data().iter().zip(&w).map(|(&a, &b)| a as f64 * b as f64).collect();
        for map in [
            input_x_gradient(&net, &x, 1).unwrap(),
            integrated_gradients(&net, &x, 1, &zero, 50).unwrap(),
            deeplift(&net, &x, 1, &zero).unwrap(),
            gradient_shap(&net, &x, 1, std::slice::from_ref(&zero), 7, 0.0, seed).unwrap(),
        ] {
            let d = max_abs_diff(&map, &expect);
            assert!(d <= 1e-5, "seed {seed} {}: max diff {d:e}", map.method);
        }
    }
}

#[test]
fn deeplift_shap_on_linear_model_uses_the_baseline_mean() {
    let (net, w) = linear_model(3);
    let x = random_tensor(&[1, 4, 5], 0.0, 1.0, 1);
    let refs: Vec<Tensor> = (0..4).map(|s| random_tensor(&[1, 4, 5], 0.0, 1.0, 50 + s)).collect();
    let mean = Tensor::mean_of(&refs).unwrap();
    let expect: Vec<f64> = x
        .data()
        .iter()
        .zip(mean.data())
        .zip(&w)
        .map(|((&a, &r), &b)| (a as f64 - r as f64) * b as f64)
        .collect();
    let d = max_abs_diff(&deeplift_shap(&net, &x, 1, &refs).unwrap(), &expect);
    assert!(d <= 1e-5, "max diff {d:e}");
}

#[test]
fn gradient_shap_converges_to_integrated_gradients() {
    let net = toy_cnn(4);
    let x = random_tensor(&[1, 8, 8], 0.0, 1.0, 8);
    let base = random_tensor(&[1, 8, 8], 0.0, 1.0, 9);
    let ig = integrated_gradients(&net, &x, 1, &base, 1024).unwrap();
    let gs = gradient_shap(&net, &x, 1, &[base], 10_000, 0.0, 2).unwrap();
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|d| d * d).sum::<f64>().sqrt();
    let diff = norm(
        &mut ig
            .values
            .data()
            .iter()
            .zip(gs.values.data())
            .map(|(&a, &b)| (a - b) as f64),
    );
    let scale = norm(&mut ig.values.data().iter().map(|&a| a as f64));
    assert!(diff / scale < 0.05, "relative L2 gap {}", diff / scale);
}

#[test]
fn integrated_gradients_completeness_on_toy_cnn() {
    let mut worst: f64 = 0.0;
    for seed in 0..10 {
        let net = toy_cnn(seed);
        let x = random_tensor(&[1, 8, 8], 0.0, 1.0, 20 + seed);
        let r = Tensor::zeros(&[1, 8, 8]);
        let total = integrated_gradients(&net, &x, 1, &r, 256).unwrap().total();
        worst = worst.max(rel(total, logit(&net, &x, 1) - logit(&net, &r, 1)));
    }
    assert!(worst <= 1e-3, "worst relative error {worst:e}");
}

#[test]
fn rescale_rule_single_relu_unit() {
    let net = Network::from_parts(
        &[1, 1, 1],
        vec![LayerSpec::Flatten, LayerSpec::linear(1, 1), LayerSpec::Relu],
        vec![
            None,
            Some(Params {
                weight: t(&[1, 1], vec![1.0]),
                bias: t(&[1], vec![-1.0]),
            }),
            None,
        ],
    )
    .unwrap();
    let a = deeplift(&net, &t(&[1, 1, 1], vec![2.0]), 0, &Tensor::zeros(&[1, 1, 1])).unwrap();
    assert!((a.values.data()[0] - 1.0).abs() < 1e-7);
}

#[test]
fn deeplift_sums_to_delta() {
    for seed in 0..100 {
        let net = toy_cnn(seed % 5);
        let x = random_tensor(&[1, 8, 8], 0.0, 1.0, 300 + seed);
        let r = random_tensor(&[1, 8, 8], 0.0, 1.0, 600 + seed);
        let total = deeplift(&net, &x, 0, &r).unwrap().total();
        let delta = logit(&net, &x, 0) - logit(&net, &r, 0);
        assert!(rel(total, delta) <= 1e-4, "seed {seed}: {total} vs {delta}");
    }
}

#[test]
fn zero_path_gives_zero_attribution() {
    let net = toy_cnn(1);
    let x = random_tensor(&[1, 8, 8], 0.0, 1.0, 5);
    for map in [
        integrated_gradients(&net, &x, 0, &x, 16).unwrap(),
        deeplift(&net, &x, 0, &x).unwrap(),
        gradient_shap(&net, &x, 0, std::slice::from_ref(&x), 4, 0.0, 0).unwrap(),
        input_x_gradient(&net, &Tensor::zeros(&[1, 8, 8]), 0).unwrap(),
    ] {
        assert!(map.values.data().iter().all(|&v| v == 0.0), "{}", map.method);
    }
}

#[test]
fn lrp0_redistributes_proportionally() {
    let net = Network::from_parts(
        &[1, 1, 2],
        vec![LayerSpec::Flatten, LayerSpec::linear(2, 1)],
        vec![
            None,
            Some(Params {
                weight: t(&[1, 2], vec![1.0, 1.0]),
                bias: t(&[1], vec![0.0]),
            }),
        ],
    )
    .unwrap();
    let rules = LrpRuleAssignment::uniform(&net, LrpRule::Lrp0).unwrap();
    let a = lrp(&net, &t(&[1, 1, 2], vec![1.0, 2.0]), 0, &rules).unwrap();
    assert_eq!(a.values.data(), &[1.0, 2.0]);
}

#[test]
fn lrp_gamma_zero_is_lrp0() {
    for seed in 0..10 {
        let net = toy_cnn(seed);
        let x = random_tensor(&[1, 8, 8], 0.0, 1.0, seed);
        let a = lrp(
            &net,
            &x,
            1,
            &LrpRuleAssignment::uniform(&net, LrpRule::Gamma { gamma: 0.0 }).unwrap(),
        )
        .unwrap();
        let b = lrp(&net, &x, 1, &LrpRuleAssignment::uniform(&net, LrpRule::Lrp0).unwrap()).unwrap();
        assert_eq!(a.values, b.values);
    }
}

#[test]
fn lrp_epsilon_conserves_relevance_without_biases() {
    let rules_for = |n: &Network| LrpRuleAssignment::uniform(n, LrpRule::Epsilon { epsilon: 1e-9 }).unwrap();
    for seed in 0..100 {
        let net = toy_cnn(seed % 7);
        let x = random_tensor(&[1, 8, 8], 0.0, 1.0, 900 + seed);
        let total = lrp(&net, &x, 1, &rules_for(&net)).unwrap().total();
        let out = logit(&net, &x, 1);
        assert!(rel(total, out) <= 1e-4, "seed {seed}: {total} vs {out}");
    }
}

#[test]
fn conv1x1_and_linear_give_the_same_attributions() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let w: Vec<f32> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let b: Vec<f32> = vec![0.1, -0.2, 0.3];
    let p = || Params {
        weight: t(&[3, 4], w.clone()),
        bias: t(&[3], b.clone()),
    };
    let head = || LayerSpec::linear(3, 2);
    let hp = || Params {
        weight: t(&[2, 3], vec![0.5, -1.0, 0.7, -0.3, 0.8, 0.2]),
        bias: t(&[2], vec![0.0, 0.1]),
    };
    let dense = Network::from_parts(
        &[4, 1, 1],
        vec![LayerSpec::Flatten, LayerSpec::linear(4, 3), LayerSpec::Relu, head()],
        vec![None, Some(p()), None, Some(hp())],
    )
    .unwrap();
    let mut cp = p();
    cp.weight = cp.weight.reshape(&[3, 4, 1, 1]).unwrap();
    let conv = Network::from_parts(
        &[4, 1, 1],
        vec![
            LayerSpec::Conv2d {
                in_channels: 4,
                out_channels: 3,
                kernel: 1,
                stride: 1,
                padding: 0,
            },
            LayerSpec::Relu,
            LayerSpec::Flatten,
            head(),
        ],
        vec![Some(cp), None, None, Some(hp())],
    )
    .unwrap();
    let x = t(&[4, 1, 1], vec![0.9, 0.2, 0.4, 0.7]);
    let r = Tensor::zeros(&[4, 1, 1]);
    let pairs = [
        (
            integrated_gradients(&dense, &x, 1, &r, 64).unwrap(),
            integrated_gradients(&conv, &x, 1, &r, 64).unwrap(),
        ),
        (
            deeplift(&dense, &x, 1, &r).unwrap(),
            deeplift(&conv, &x, 1, &r).unwrap(),
        ),
    ];
    for (a, c) in pairs {
        let d = max_abs_diff(&a, &c.values.data().iter().map(|&v| v as f64).collect::<Vec<_>>());
        assert!(d <= 1e-6, "{}: {d:e}", a.method);
    }
}

#[test]
fn identity_augmentation_is_bitwise_identical() {
    let net = toy_cnn(2);
    let pool: Vec<Tensor> = (0..4).map(|s| random_tensor(&[1, 8, 8], 0.0, 1.0, s)).collect();
    let attributor = Attributor::new(&net, &pool);
    let x = random_tensor(&[1, 8, 8], 0.0, 1.0, 31);
    for base in Method::standard_set() {
        let plain = attributor.attribute(&base, &x, 1).unwrap();
        let smoothed = aug_smooth(&x, &AugSmoothConfig::identity(), |xa| {
            attributor.attribute(&base, xa, 1)
        })
        .unwrap();
        let bits = |m: &AttributionMap| m.values.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&plain), bits(&smoothed), "{}", base.tag());
        let wrapped = Method::AugSmooth {
            base: Box::new(base.clone()),
            augment: AugSmoothConfig::identity(),
        };
        assert_eq!(bits(&plain), bits(&attributor.attribute(&wrapped, &x, 1).unwrap()));
    }
}

#[test]
fn attribution_leaves_the_classifier_untouched() {
    let net = toy_cnn(6);
    let before = net.checksum();
    let pool: Vec<Tensor> = (0..3).map(|s| random_tensor(&[1, 8, 8], 0.0, 1.0, s)).collect();
    let attributor = Attributor::new(&net, &pool);
    let x = random_tensor(&[1, 8, 8], 0.0, 1.0, 2);
    let mut methods = Method::standard_set();
    methods.push(Method::IntegratedGradients {
        steps: 8,
        baseline: BaselineSpec::Zero,
    });
    for m in &methods {
        attributor.attribute(m, &x, 0).unwrap();
    }
    assert_eq!(net.checksum(), before);
}

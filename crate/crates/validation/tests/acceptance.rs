//! The fourteen acceptance criteria, run in order. Each prints one
//! PASS/FAIL line with its measurement and wall-clock time; the test fails
//! if any criterion does.
//!
//! Criteria 1, 9, 10 and 14 share one MiniVGG trained on the default
//! synthetic corpus. Its training time is charged to criterion 9.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use clap::Parser;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xaiseg_core::attribution::{
    aug_smooth, deeplift, gradient_shap, input_x_gradient, integrated_gradients, lrp, AttributionMap, Attributor,
    AugSmoothConfig, BaselineSpec, LrpPreset, LrpRule, LrpRuleAssignment, Method,
};
use xaiseg_core::explainer::{
    area_loss_grad, classification_loss_grad, negative_classification_from_probs, negative_classification_loss_grad,
    negative_entropy_loss_grad, tv_grad,
};
use xaiseg_core::growth::{evaluate_growth, gen_trajectories, growth_crack_params, GrowthParams, MaskSource};
use xaiseg_core::metrics::{cls_metrics, PixelConfusion};
use xaiseg_core::nn::{
    mini_vgg, predict, random_tensor, save_model, train_classifier, LayerSpec, Model, Network, Params, PreciseNetwork,
    TrainConfig,
};
use xaiseg_core::postproc::{area_opening, close, dilate, erode, postprocess, PostprocConfig, StructuringElement};
use xaiseg_core::severity::max_width_px;
use xaiseg_core::synth::{gen_dataset, write_dataset, Dataset, Sample, Split, SynthConfig};
use xaiseg_core::{BinaryMask, Tensor};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-12)
}

fn to_f64(t: &Tensor) -> Vec<f64> {
    t.data().iter().map(|&v| v as f64).collect()
}

fn t(shape: &[usize], data: Vec<f32>) -> Tensor {
    Tensor::new(shape.to_vec(), data).unwrap()
}

struct Trained {
    data: Dataset,
    net: Network,
    train_secs: f64,
}

fn train_default() -> Trained {
    let start = Instant::now();
    let data = gen_dataset(&SynthConfig::default()).unwrap();
    let cfg = TrainConfig::default();
    let shape = data.train[0].image.shape().to_vec();
    let (net, _) = train_classifier(mini_vgg(&shape, 2, cfg.seed).unwrap(), &data.train, &data.val, &cfg).unwrap();
    Trained {
        data,
        net,
        train_secs: start.elapsed().as_secs_f64(),
    }
}

fn test_positives(data: &Dataset) -> Vec<&Sample> {
    data.split(Split::Test).iter().filter(|s| s.label == 1).collect()
}

// 1 -------------------------------------------------------------------------

fn ig_completeness(tr: &Trained) -> Outcome {
    let pool = tr.data.damage_free_pool();
    let attributor = Attributor::new(&tr.net, &pool);
    let baseline = BaselineSpec::default();
    let method = Method::IntegratedGradients {
        steps: 256,
        baseline: baseline.clone(),
    };
    let p = tr.net.precise();
    let images: Vec<&Sample> = tr.data.split(Split::Test).iter().take(50).collect();
    let reference = to_f64(&baseline.reference(images[0].image.shape(), &pool).unwrap());
    let mut within = 0;
    let mut errors = Vec::new();
    for s in &images {
        let total = attributor.attribute(&method, &s.image, 1).unwrap().total();
        let delta = p.forward(&to_f64(&s.image))[1] - p.forward(&reference)[1];
        let e = rel(total, delta);
        within += usize::from(e <= 1e-3);
        errors.push(e);
    }
    errors.sort_by(f64::total_cmp);
    let need = (0.95 * images.len() as f64).ceil() as usize;
    check(
        within >= need,
        format!(
            "{within}/{} within 1e-3 (need {need}); median {:.1e}, worst {:.1e}",
            images.len(),
            errors[errors.len() / 2],
            errors[errors.len() - 1]
        ),
    )
}

// 2, 3, 4 -------------------------------------------------------------------

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

fn without_biases(mut net: Network) -> Network {
    for p in net.params_mut().iter_mut().flatten() {
        p.bias.data_mut().iter_mut().for_each(|b| *b = 0.0);
    }
    net
}

fn logit(net: &Network, x: &Tensor, c: usize) -> f64 {
    net.precise().forward(&to_f64(x))[c]
}

fn deeplift_summation() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..100 {
        let net = toy_cnn(seed);
        let x = random_tensor(&[1, 8, 8], 0.0, 1.0, 1000 + seed);
        let r = random_tensor(&[1, 8, 8], 0.0, 1.0, 2000 + seed);
        let total = deeplift(&net, &x, 1, &r).unwrap().total();
        worst = worst.max(rel(total, logit(&net, &x, 1) - logit(&net, &r, 1)));
    }
    check(
        worst <= 1e-4,
        format!("worst relative error {worst:.1e} over 100 inputs"),
    )
}

fn lrp_conservation() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..100 {
        let net = without_biases(toy_cnn(seed));
        let rules = LrpRuleAssignment::uniform(&net, LrpRule::Epsilon { epsilon: 1e-9 }).unwrap();
        let x = random_tensor(&[1, 8, 8], 0.0, 1.0, 3000 + seed);
        let total = lrp(&net, &x, 1, &rules).unwrap().total();
        worst = worst.max(rel(total, logit(&net, &x, 1)));
    }
    check(
        worst <= 1e-4,
        format!("worst relative error {worst:.1e} over 100 inputs"),
    )
}

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

fn linear_agreement() -> Outcome {
    let diff = |m: &AttributionMap, e: &[f64]| {
        m.values
            .data()
            .iter()
            .zip(e)
            .map(|(&a, b)| (a as f64 - b).abs())
            .fold(0.0, f64::max)
    };
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let (net, w) = linear_model(seed);
        let x = random_tensor(&[1, 4, 5], 0.0, 1.0, 500 + seed);
        let zero = Tensor::zeros(&[1, 4, 5]);
        let expect: Vec<f64> = x.data().iter().zip(&w).map(|(&a, &b)| a as f64 * b as f64).collect();
        for m in [
            input_x_gradient(&net, &x, 1).unwrap(),
            integrated_gradients(&net, &x, 1, &zero, 50).unwrap(),
            deeplift(&net, &x, 1, &zero).unwrap(),
        ] {
            worst = worst.max(diff(&m, &expect));
        }
    }
    // GradientShap against IG on one nonlinear model, same single baseline
    let net = toy_cnn(4);
    let x = random_tensor(&[1, 8, 8], 0.0, 1.0, 8);
    let base = random_tensor(&[1, 8, 8], 0.0, 1.0, 9);
    let ig = integrated_gradients(&net, &x, 1, &base, 1024).unwrap();
    let gs = gradient_shap(&net, &x, 1, &[base], 10_000, 0.0, 2).unwrap();
    let l2 = |v: Vec<f64>| v.iter().map(|d| d * d).sum::<f64>().sqrt();
    let gap = l2(ig
        .values
        .data()
        .iter()
        .zip(gs.values.data())
        .map(|(&a, &b)| (a - b) as f64)
        .collect())
        / l2(to_f64(&ig.values));
    check(
        worst <= 1e-5 && gap <= 0.05,
        format!(
            "linear max diff {worst:.1e}; GradientShap vs IG relative L2 gap {:.2}%",
            100.0 * gap
        ),
    )
}

// 5 -------------------------------------------------------------------------

fn layer_cases() -> Vec<(&'static str, Vec<usize>, LayerSpec)> {
    vec![
        ("conv2d", vec![2, 5, 6], LayerSpec::conv3x3(2, 3)),
        (
            "conv2d_strided",
            vec![2, 7, 7],
            LayerSpec::Conv2d {
                in_channels: 2,
                out_channels: 2,
                kernel: 3,
                stride: 2,
                padding: 0,
            },
        ),
        ("linear", vec![7], LayerSpec::linear(7, 4)),
        ("relu", vec![2, 4, 4], LayerSpec::Relu),
        ("maxpool2d", vec![2, 4, 6], LayerSpec::maxpool2()),
        ("flatten", vec![2, 3, 3], LayerSpec::Flatten),
        ("upsample2d", vec![2, 3, 3], LayerSpec::Upsample2d { factor: 2 }),
        ("sigmoid", vec![2, 3, 3], LayerSpec::Sigmoid),
        ("normalize", vec![1, 4, 4], LayerSpec::Normalize { mean: 0.3, std: 0.7 }),
    ]
}

const FD_H: f64 = 1e-3;

/// Random points at least a few stencils away from ReLU kinks and max-pool ties.
fn fd_point(rng: &mut ChaCha8Rng, n: usize, layer: &LayerSpec) -> Vec<f64> {
    loop {
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0f32..1.0) as f64).collect();
        let mut s = x.clone();
        s.sort_by(f64::total_cmp);
        let ok = match layer {
            LayerSpec::Relu => x.iter().all(|v| v.abs() > 4.0 * FD_H),
            LayerSpec::MaxPool2d { .. } => s.windows(2).all(|w| w[1] - w[0] > 4.0 * FD_H),
            _ => true,
        };
        if ok {
            return x;
        }
    }
}

fn fd_rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

fn engine_gradients() -> Outcome {
    let objective =
        |p: &PreciseNetwork, x: &[f64], g: &[f64]| -> f64 { p.forward(x).iter().zip(g).map(|(a, b)| a * b).sum() };
    let mut worst: f64 = 0.0;
    let mut checks = 0;
    for (name, shape, layer) in layer_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let n: usize = shape.iter().product();
        for trial in 0..100u64 {
            let mut net = Network::new(&shape, vec![layer.clone()], trial).unwrap();
            if let Some(p) = net.params_mut()[0].as_mut() {
                p.bias.data_mut().iter_mut().for_each(|b| *b = rng.gen_range(-0.5..0.5));
            }
            let p = net.precise();
            let x = fd_point(&mut rng, n, &layer);
            let m: usize = net.output_shape().iter().product();
            let g: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
            // input gradient
            let i = rng.gen_range(0..n);
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[i] += FD_H;
            xm[i] -= FD_H;
            let fd = (objective(&p, &xp, &g) - objective(&p, &xm, &g)) / (2.0 * FD_H);
            let e = fd_rel(p.logits_vjp(&x, &g)[i], fd);
            if e > 1e-3 {
                return Err(format!("{name} input trial {trial}: relative error {e:.1e}"));
            }
            worst = worst.max(e);
            checks += 1;
            // weight or bias gradient, stepping the stored f32 value
            if !layer.is_parameterized() {
                continue;
            }
            let grads = p.param_gradients(&x, &g);
            let bias = rng.gen_bool(0.3);
            let slots = if bias { &grads[0].1 } else { &grads[0].0 };
            let j = rng.gen_range(0..slots.len());
            let eval = |delta: f64| {
                let mut moved_net = net.clone();
                let params = moved_net.params_mut()[0].as_mut().unwrap();
                let slot = if bias { &mut params.bias } else { &mut params.weight };
                let old = slot.data()[j];
                slot.data_mut()[j] = (old as f64 + delta) as f32;
                let step = slot.data()[j] as f64 - old as f64;
                (objective(&moved_net.precise(), &x, &g), step)
            };
            let ((fp, sp), (fm, sm)) = (eval(FD_H), eval(-FD_H));
            let e = fd_rel(slots[j], (fp - fm) / (sp - sm));
            if e > 1e-3 {
                return Err(format!("{name} parameter trial {trial}: relative error {e:.1e}"));
            }
            worst = worst.max(e);
            checks += 1;
        }
    }
    Ok(format!(
        "9 layer kinds x 100 trials, {checks} checks, worst relative error {worst:.1e}"
    ))
}

// 6, 7 ----------------------------------------------------------------------

const SIDE: usize = 32;

fn random_mask(rng: &mut ChaCha8Rng) -> BinaryMask {
    let density = rng.gen_range(0.02..0.5);
    BinaryMask::from_fn(SIDE, SIDE, |_, _| rng.gen_bool(density))
}

fn on_grid(y: isize, x: isize) -> bool {
    (0..SIDE as isize).contains(&y) && (0..SIDE as isize).contains(&x)
}

fn dilate_ref(m: &BinaryMask, b: &[(isize, isize)]) -> BinaryMask {
    BinaryMask::from_fn(SIDE, SIDE, |y, x| {
        b.iter().any(|&(dy, dx)| {
            let (qy, qx) = (y as isize - dy, x as isize - dx);
            on_grid(qy, qx) && m.get(qy as usize, qx as usize)
        })
    })
}

fn erode_ref(m: &BinaryMask, b: &[(isize, isize)]) -> BinaryMask {
    BinaryMask::from_fn(SIDE, SIDE, |y, x| {
        b.iter().all(|&(dy, dx)| {
            let (py, px) = (y as isize + dy, x as isize + dx);
            !on_grid(py, px) || m.get(py as usize, px as usize)
        })
    })
}

/// Keeps 8-connected components of at least `min_area` pixels, found by flood fill.
fn area_opening_ref(m: &BinaryMask, min_area: usize) -> BinaryMask {
    let mut label = vec![usize::MAX; SIDE * SIDE];
    let mut sizes = Vec::new();
    for (y, x) in m.foreground() {
        if label[y * SIDE + x] != usize::MAX {
            continue;
        }
        let id = sizes.len();
        let mut stack = vec![(y, x)];
        label[y * SIDE + x] = id;
        let mut size = 0;
        while let Some((cy, cx)) = stack.pop() {
            size += 1;
            for dy in -1..=1isize {
                for dx in -1..=1isize {
                    let (ny, nx) = (cy as isize + dy, cx as isize + dx);
                    if on_grid(ny, nx)
                        && m.get(ny as usize, nx as usize)
                        && label[ny as usize * SIDE + nx as usize] == usize::MAX
                    {
                        label[ny as usize * SIDE + nx as usize] = id;
                        stack.push((ny as usize, nx as usize));
                    }
                }
            }
        }
        sizes.push(size);
    }
    BinaryMask::from_fn(SIDE, SIDE, |y, x| m.get(y, x) && sizes[label[y * SIDE + x]] >= min_area)
}

fn disk_offsets(r: usize) -> Vec<(isize, isize)> {
    let r = r as isize;
    (-r..=r)
        .flat_map(|dy| (-r..=r).map(move |dx| (dy, dx)))
        .filter(|(dy, dx)| dy * dy + dx * dx <= r * r)
        .collect()
}

fn morphology_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for trial in 0..100 {
        let m = random_mask(&mut rng);
        let r = rng.gen_range(1..5);
        let se = StructuringElement::disk(r);
        let b = disk_offsets(r);
        let closed = close(&m, &se);
        let min_area = rng.gen_range(1..40);
        let failures = [
            ("dilate", dilate(&m, &se) != dilate_ref(&m, &b)),
            ("erode", erode(&m, &se) != erode_ref(&m, &b)),
            ("close", closed != erode_ref(&dilate_ref(&m, &b), &b)),
            (
                "area_opening",
                area_opening(&m, min_area) != area_opening_ref(&m, min_area),
            ),
            ("close extensive", !m.is_subset_of(&closed)),
            ("close idempotent", close(&closed, &se) != closed),
        ];
        if let Some((name, _)) = failures.iter().find(|f| f.1) {
            return Err(format!("{name} disagrees on trial {trial} (r={r})"));
        }
    }
    Ok("100 masks: dilate, erode, close, area opening exact; closing extensive and idempotent".into())
}

/// Largest disc inside the union of the foreground unit squares, over
/// quarter-pixel centres.
fn inscribed_diameter(m: &BinaryMask) -> f64 {
    let background: Vec<(f64, f64)> = (-1..=SIDE as isize)
        .flat_map(|y| (-1..=SIDE as isize).map(move |x| (y, x)))
        .filter(|&(y, x)| !on_grid(y, x) || !m.get(y as usize, x as usize))
        .map(|(y, x)| (y as f64, x as f64))
        .collect();
    let mut best: f64 = 0.0;
    for (py, px) in m.foreground() {
        for sy in 0..4 {
            for sx in 0..4 {
                let (cy, cx) = (py as f64 - 0.5 + 0.25 * sy as f64, px as f64 - 0.5 + 0.25 * sx as f64);
                let r = background
                    .iter()
                    .map(|&(by, bx)| {
                        let dy = ((cy - by).abs() - 0.5).max(0.0);
                        let dx = ((cx - bx).abs() - 0.5).max(0.0);
                        (dy * dy + dx * dx).sqrt()
                    })
                    .fold(f64::INFINITY, f64::min);
                best = best.max(r);
            }
        }
    }
    2.0 * best
}

fn width_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for blob in 0..50 {
        let discs: Vec<(f64, f64, f64)> = (0..rng.gen_range(1..4))
            .map(|_| {
                (
                    rng.gen_range(8.0..24.0),
                    rng.gen_range(8.0..24.0),
                    rng.gen_range(1.5..7.0),
                )
            })
            .collect();
        let m = BinaryMask::from_fn(SIDE, SIDE, |y, x| {
            discs
                .iter()
                .any(|&(cy, cx, r)| (y as f64 - cy).powi(2) + (x as f64 - cx).powi(2) <= r * r)
        });
        let gap = (max_width_px(&m) - inscribed_diameter(&m)).abs();
        if gap > 1.0 {
            return Err(format!("blob {blob}: width off by {gap:.2} px"));
        }
        worst = worst.max(gap);
    }
    Ok(format!("50 blobs, worst gap {worst:.2} px"))
}

// 8 -------------------------------------------------------------------------

fn explainer_losses() -> Outcome {
    let at_one = negative_classification_from_probs(&[1.0, 0.0]).0;
    let at_half = negative_classification_from_probs(&[0.5, 0.5]).0;
    let anchors = at_one.abs() <= 1e-6 && (at_half - 2.0 * std::f64::consts::LN_2).abs() <= 1e-6;
    if !anchors {
        return Err(format!("L_NC anchors {at_one} and {at_half}"));
    }
    let f = Network::new(
        &[1, 8, 8],
        vec![
            LayerSpec::centre(),
            LayerSpec::conv3x3(1, 4),
            LayerSpec::Sigmoid,
            LayerSpec::maxpool2(),
            LayerSpec::Flatten,
            LayerSpec::linear(64, 2),
        ],
        3,
    )
    .unwrap()
    .precise();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    let mut fd = |name: &str, m: &[f64], grad: &[f64], loss: &dyn Fn(&[f64]) -> f64| -> Result<(), String> {
        let scale = grad.iter().map(|g| g.abs()).fold(0.0, f64::max);
        for i in 0..m.len() {
            let (mut a, mut b) = (m.to_vec(), m.to_vec());
            a[i] += h;
            b[i] -= h;
            let d = (loss(&a) - loss(&b)) / (2.0 * h);
            let e = if grad[i].abs() < 1e-3 * scale {
                (grad[i] - d).abs() / scale
            } else {
                fd_rel(grad[i], d)
            };
            if e > 1e-4 {
                return Err(format!("{name}[{i}]: relative error {e:.1e}"));
            }
            worst = worst.max(e);
        }
        Ok(())
    };
    for _ in 0..3 {
        let x: Vec<f64> = (0..64).map(|_| rng.gen_range(0.0..1.0)).collect();
        let m: Vec<f64> = (0..64).map(|_| rng.gen_range(0.05..0.95)).collect();
        fd(
            "L_C",
            &m,
            &classification_loss_grad(&f, &x, &[1], &m).unwrap().1,
            &|mm| classification_loss_grad(&f, &x, &[1], mm).unwrap().0,
        )?;
        fd(
            "L_NC",
            &m,
            &negative_classification_loss_grad(&f, &x, &m).unwrap().1,
            &|mm| negative_classification_loss_grad(&f, &x, mm).unwrap().0,
        )?;
        fd("L_E", &m, &negative_entropy_loss_grad(&f, &x, &m).unwrap().1, &|mm| {
            negative_entropy_loss_grad(&f, &x, mm).unwrap().0
        })?;
        // evenly spaced shuffled levels keep TV and max kinks outside the stencil
        let mut levels: Vec<f64> = (0..64).map(|i| 0.1 + 0.8 * (i as f64 + 0.5) / 64.0).collect();
        rand::seq::SliceRandom::shuffle(levels.as_mut_slice(), &mut rng);
        let (_, gm, gn) = area_loss_grad(&levels, &m, 0.2, 0.55);
        fd("L_A", &levels, &gm, &|mm| area_loss_grad(mm, &m, 0.2, 0.55).0)?;
        fd("L_A (other mask)", &m, &gn, &|nn| {
            area_loss_grad(&levels, nn, 0.2, 0.55).0
        })?;
        fd("L_TV", &levels, &tv_grad(&levels, 8, 8).1, &|mm| tv_grad(mm, 8, 8).0)?;
    }
    Ok(format!(
        "anchors exact to 1e-6; L_C, L_NC, L_E, L_A, L_TV worst relative error {worst:.1e}"
    ))
}

// 9 -------------------------------------------------------------------------

fn end_to_end(tr: &Trained) -> Outcome {
    let test = tr.data.split(Split::Test);
    let preds: Vec<usize> = test.iter().map(|s| predict(&tr.net, &s.image).unwrap()).collect();
    let labels: Vec<usize> = test.iter().map(|s| s.label).collect();
    let ba = cls_metrics(&preds, &labels).unwrap().balanced_accuracy.unwrap_or(0.0);
    let pool = tr.data.damage_free_pool();
    let attributor = Attributor::new(&tr.net, &pool);
    let method = Method::Lrp {
        rules: LrpPreset::default(),
    };
    let pp = PostprocConfig::for_patch_size(tr.data.train[0].image.shape()[2]);
    let mut c = PixelConfusion::default();
    for s in test_positives(&tr.data) {
        let map = attributor.attribute(&method, &s.image, 1).unwrap();
        c += PixelConfusion::from_masks(postprocess(&map.values, &pp).unwrap().final_mask(), &s.mask).unwrap();
    }
    let f1 = c.metrics().f1;
    check(
        ba >= 0.90 && f1 >= 0.30,
        format!(
            "test balanced accuracy {ba:.3} (training {:.0}s); LRP micro-F1 {f1:.3}",
            tr.train_secs
        ),
    )
}

// 10 ------------------------------------------------------------------------

/// Share of the positive attribution mass that falls on crack pixels.
fn mass_inside(map: &Tensor, mask: &BinaryMask) -> f64 {
    let (mut inside, mut total) = (0.0, 0.0);
    for (&v, &m) in map.data().iter().zip(mask.data()) {
        let v = (v as f64).max(0.0);
        total += v;
        if m {
            inside += v;
        }
    }
    if total > 0.0 {
        inside / total
    } else {
        0.0
    }
}

fn baseline_effect(tr: &Trained) -> Outcome {
    let pool = tr.data.damage_free_pool();
    let attributor = Attributor::new(&tr.net, &pool);
    let ig = |baseline| Method::IntegratedGradients { steps: 50, baseline };
    let (zero, mean) = (ig(BaselineSpec::Zero), ig(BaselineSpec::default()));
    let positives = test_positives(&tr.data);
    let (mut better, mut sum_zero, mut sum_mean) = (0, 0.0, 0.0);
    for s in &positives {
        let fz = mass_inside(&attributor.attribute(&zero, &s.image, 1).unwrap().values, &s.mask);
        let fm = mass_inside(&attributor.attribute(&mean, &s.image, 1).unwrap().values, &s.mask);
        better += usize::from(fm > fz);
        sum_zero += fz;
        sum_mean += fm;
    }
    let n = positives.len();
    let share = better as f64 / n as f64;
    check(
        share >= 0.60,
        format!(
            "mean baseline higher on {better}/{n} ({:.0}%); mean mass inside {:.3} vs zero {:.3}",
            100.0 * share,
            sum_mean / n as f64,
            sum_zero / n as f64
        ),
    )
}

// 11 ------------------------------------------------------------------------

fn augsmooth_identity() -> Outcome {
    let net = toy_cnn(2);
    let pool: Vec<Tensor> = (0..4).map(|s| random_tensor(&[1, 8, 8], 0.0, 1.0, s)).collect();
    let attributor = Attributor::new(&net, &pool);
    let x = random_tensor(&[1, 8, 8], 0.0, 1.0, 31);
    let bits = |m: &AttributionMap| m.values.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    for base in Method::standard_set() {
        let plain = bits(&attributor.attribute(&base, &x, 1).unwrap());
        let direct = aug_smooth(&x, &AugSmoothConfig::identity(), |xa| {
            attributor.attribute(&base, xa, 1)
        })
        .unwrap();
        let wrapped = Method::AugSmooth {
            base: Box::new(base.clone()),
            augment: AugSmoothConfig::identity(),
        };
        if plain != bits(&direct) || plain != bits(&attributor.attribute(&wrapped, &x, 1).unwrap()) {
            return Err(format!("{} differs under identity augmentation", base.tag()));
        }
    }
    Ok(format!("{} methods bitwise identical", Method::standard_set().len()))
}

// 12 ------------------------------------------------------------------------

fn growth_oracle() -> Outcome {
    let cfg = SynthConfig {
        n_train: 40,
        n_val: 10,
        n_test: 40,
        ..SynthConfig::default()
    };
    let data = gen_dataset(&cfg).unwrap();
    let params = GrowthParams::for_patch_size(cfg.patch_size);
    let trajs = gen_trajectories(data.split(Split::Test), 20, &growth_crack_params(), &params, 12).unwrap();
    let increasing = trajs
        .iter()
        .filter(|t| t.steps.windows(2).all(|w| w[0].mask.count() < w[1].mask.count()))
        .count();
    let (s, _) = evaluate_growth("oracle", &trajs, None, &MaskSource::Oracle).unwrap();
    check(
        increasing == trajs.len()
            && s.avg_r_area >= 0.99
            && s.avg_r_width >= 0.99
            && s.mape_area <= 5.0
            && s.mape_width <= 5.0,
        format!(
            "{increasing}/{} strictly increasing; r area {:.4} width {:.4}; MAPE area {:.2}% width {:.2}%",
            trajs.len(),
            s.avg_r_area,
            s.avg_r_width,
            s.mape_area,
            s.mape_width
        ),
    )
}

// 13 ------------------------------------------------------------------------

fn table_arithmetic() -> Outcome {
    // 79 of 100 positives and 99 of 100 negatives called correctly
    let labels: Vec<usize> = (0..200).map(|i| usize::from(i < 100)).collect();
    let preds: Vec<usize> = (0..200)
        .map(|i| {
            if i < 100 {
                usize::from(i < 79)
            } else {
                usize::from(i == 100)
            }
        })
        .collect();
    let m = cls_metrics(&preds, &labels).unwrap();
    let ba = m.balanced_accuracy.unwrap();
    check(
        (m.tpr.unwrap() - 0.79).abs() < 1e-12 && (m.tnr.unwrap() - 0.99).abs() < 1e-12 && (ba - 0.89).abs() < 1e-12,
        format!(
            "TPR {:.2}, TNR {:.2} -> balanced accuracy {ba:.2}",
            m.tpr.unwrap(),
            m.tnr.unwrap()
        ),
    )
}

// 14 ------------------------------------------------------------------------

fn run_cli(args: &[&str]) {
    let cli = xaiseg_cli::args::Cli::parse_from(std::iter::once("xaiseg").chain(args.iter().copied()));
    xaiseg_cli::run(cli).unwrap();
}

/// Every output file except the timing tables, by relative path.
fn outputs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| !p.file_name().unwrap().to_string_lossy().starts_with("timing"))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

fn determinism(tr: &Trained) -> Outcome {
    let tmp = tempfile::TempDir::new().unwrap();
    let manifest = write_dataset(&tmp.path().join("data"), &tr.data).unwrap();
    let model = tmp.path().join("clf.xsg");
    save_model(&tr.net, &model).unwrap();
    let config = tmp.path().join("run.toml");
    std::fs::write(&config, "seed = 14\n").unwrap();
    let run = |name: &str| {
        let out = tmp.path().join(name);
        run_cli(&[
            "--jobs",
            "1",
            "benchmark",
            "--config",
            config.to_str().unwrap(),
            "--data",
            manifest.to_str().unwrap(),
            "--model",
            model.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        outputs(&out)
    };
    let (a, b) = (run("first"), run("second"));
    let rows = String::from_utf8_lossy(&a.iter().find(|f| f.0 == "benchmark.csv").unwrap().1)
        .lines()
        .count()
        - 1;
    let names: Vec<&str> = a.iter().map(|f| f.0.as_str()).collect();
    check(
        a == b,
        format!(
            "{} ({rows} benchmark rows) byte-identical across reruns",
            names.join(", ")
        ),
    )
}

// ---------------------------------------------------------------------------

#[test]
fn acceptance() {
    let trained = train_default();
    let trained_ref = &trained;
    type Check<'a> = Box<dyn Fn() -> Outcome + 'a>;
    let criteria: Vec<(u32, &str, u64, Check)> = vec![
        (
            1,
            "IG completeness on trained MiniVGG",
            30,
            Box::new(|| ig_completeness(trained_ref)),
        ),
        (2, "DeepLift summation-to-delta", 10, Box::new(deeplift_summation)),
        (3, "LRP epsilon conservation", 10, Box::new(lrp_conservation)),
        (4, "linear-model agreement", 30, Box::new(linear_agreement)),
        (
            5,
            "engine gradients vs finite differences",
            60,
            Box::new(engine_gradients),
        ),
        (6, "morphology vs set definitions", 30, Box::new(morphology_oracle)),
        (7, "width vs inscribed disc", 60, Box::new(width_oracle)),
        (8, "explainer losses", 10, Box::new(explainer_losses)),
        (
            9,
            "end-to-end synthetic pipeline",
            600,
            Box::new(|| end_to_end(trained_ref)),
        ),
        (
            10,
            "damage-free baseline effect",
            300,
            Box::new(|| baseline_effect(trained_ref)),
        ),
        (11, "AugSmooth identity degeneracy", 5, Box::new(augsmooth_identity)),
        (12, "growth oracle mode", 300, Box::new(growth_oracle)),
        (13, "balanced accuracy arithmetic", 1, Box::new(table_arithmetic)),
        (
            14,
            "benchmark determinism with --jobs 1",
            600,
            Box::new(|| determinism(trained_ref)),
        ),
    ];
    let mut failed = Vec::new();
    for (id, name, budget, run) in &criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let mut elapsed = start.elapsed();
        if *id == 9 {
            elapsed += Duration::from_secs_f64(trained_ref.train_secs);
        }
        let in_budget = elapsed <= Duration::from_secs(*budget);
        let (pass, detail) = match outcome {
            Ok(d) => (in_budget, d),
            Err(d) => (false, d),
        };
        let timing = format!(
            "{:.1}s of {budget}s{}",
            elapsed.as_secs_f64(),
            if in_budget { "" } else { ", over budget" }
        );
        println!(
            "[{}] {id:>2} {name}: {detail} ({timing})",
            if pass { "PASS" } else { "FAIL" }
        );
        if !pass {
            failed.push(*id);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

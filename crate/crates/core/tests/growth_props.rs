//! Growth trajectories: least-squares oracle, the ground-truth mask mode and
//! reproducibility.

use proptest::prelude::*;
use xaiseg_core::growth::{
    evaluate_growth, gen_trajectories, growth_crack_params, linear_fit, linear_fit_xy, GrowthParams, MaskSource,
};
use xaiseg_core::synth::{gen_dataset, Split, SynthConfig};

/// Normal equations solved by Cramer's rule on raw sums.
fn cramer(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let (sx, sy) = (x.iter().sum::<f64>(), y.iter().sum::<f64>());
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let syy: f64 = y.iter().map(|a| a * a).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let det = n * sxx - sx * sx;
    let slope = (n * sxy - sx * sy) / det;
    let intercept = (sxx * sy - sx * sxy) / det;
    let r = (n * sxy - sx * sy) / (det * (n * syy - sy * sy)).sqrt();
    (slope, intercept, r)
}

proptest! {
    #[test]
    fn least_squares_matches_closed_form(y in prop::collection::vec(-100.0f64..100.0, 3..12)) {
        let fit = linear_fit(&y).unwrap();
        let x: Vec<f64> = (0..y.len()).map(|i| i as f64).collect();
        let (slope, intercept, r) = cramer(&x, &y);
        prop_assert!((fit.slope - slope).abs() <= 1e-10 * slope.abs().max(1.0));
        prop_assert!((fit.intercept - intercept).abs() <= 1e-10 * intercept.abs().max(1.0));
        prop_assert!((fit.r - r).abs() <= 1e-10);
        // r is invariant under a positive affine map of y
        let y2: Vec<f64> = y.iter().map(|v| 3.0 * v + 7.0).collect();
        prop_assert!((linear_fit_xy(&x, &y2).unwrap().r - fit.r).abs() <= 1e-10);
    }
}

#[test]
fn exact_line_is_recovered() {
    let fit = linear_fit(&[2.0, 5.0, 8.0, 11.0]).unwrap();
    assert!((fit.slope - 3.0).abs() < 1e-12 && (fit.intercept - 2.0).abs() < 1e-12 && (fit.r - 1.0).abs() < 1e-12);
}

fn clean_pool() -> Vec<xaiseg_core::synth::Sample> {
    let cfg = SynthConfig {
        n_train: 40,
        n_val: 8,
        n_test: 8,
        ..SynthConfig::default()
    };
    gen_dataset(&cfg).unwrap().split(Split::Test).to_vec()
}

#[test]
fn ground_truth_masks_reproduce_linear_growth() {
    let pool = clean_pool();
    let params = GrowthParams::for_patch_size(64);
    let trajs = gen_trajectories(&pool, 20, &growth_crack_params(), &params, 7).unwrap();
    assert_eq!(trajs.len(), 20);
    for t in &trajs {
        let areas: Vec<usize> = t.steps.iter().map(|s| s.mask.count()).collect();
        assert!(areas.windows(2).all(|w| w[0] < w[1]), "{areas:?}");
        assert!(t.steps.windows(2).all(|w| w[0].mask.is_subset_of(&w[1].mask)));
    }
    let (summary, metrics) = evaluate_growth("oracle", &trajs, None, &MaskSource::Oracle).unwrap();
    assert_eq!(summary.n_retained, 20);
    assert!(metrics.iter().all(|m| m.true_area == m.est_area));
    assert!(summary.avg_r_area >= 0.99 && summary.avg_r_width >= 0.99, "{summary:?}");
    assert!(summary.mape_area <= 5.0 && summary.mape_width <= 5.0, "{summary:?}");
}

#[test]
fn trajectories_are_reproducible() {
    let pool = clean_pool();
    let params = GrowthParams::for_patch_size(64);
    let a = gen_trajectories(&pool, 4, &growth_crack_params(), &params, 3).unwrap();
    let b = gen_trajectories(&pool, 4, &growth_crack_params(), &params, 3).unwrap();
    assert_eq!(a, b);
    let c = gen_trajectories(&pool, 4, &growth_crack_params(), &params, 4).unwrap();
    assert_ne!(a, c);
}

//! Artificial linear crack growth and how well severity estimates track it.

use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::attribution::{Attributor, Method};
use crate::error::{invalid, Error, Result};
use crate::formats;
use crate::mask::BinaryMask;
use crate::nn::{predict, Network};
use crate::postproc::{dilate, postprocess, PostprocConfig, StructuringElement, REFERENCE_PATCH};
use crate::rng::{derive_seed, rng_for};
use crate::severity::{max_width_px, skeletonize};
use crate::synth::{gen_crack_path, CrackParams, Sample};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GrowthParams {
    pub n_steps: usize,
    /// Disk radius of each growth dilation.
    pub r_dilate: usize,
    pub darkness: f32,
    pub darkness_jitter: f32,
}

impl Default for GrowthParams {
    fn default() -> Self {
        Self {
            n_steps: 5,
            r_dilate: 5,
            darkness: 0.25,
            darkness_jitter: 0.05,
        }
    }
}

impl GrowthParams {
    /// Default radius rescaled from 256-pixel patches.
    pub fn for_patch_size(size: usize) -> Self {
        let d = Self::default();
        let r = (d.r_dilate as f64 * size as f64 / REFERENCE_PATCH as f64).round() as usize;
        Self {
            r_dilate: r.max(1),
            ..d
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_steps < 1 || self.r_dilate < 1 {
            return Err(invalid("n_steps and r_dilate must be at least 1"));
        }
        let lo = self.darkness - self.darkness_jitter;
        if !(self.darkness_jitter >= 0.0 && lo >= 0.0 && self.darkness + self.darkness_jitter <= 1.0) {
            return Err(invalid("darkness ± jitter must stay within [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GrowthStep {
    pub image: Tensor,
    pub mask: BinaryMask,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GrowthTrajectory {
    pub steps: Vec<GrowthStep>,
    pub source_id: String,
    pub seed: u64,
}

/// Grows the skeleton of `crack_mask` by `t + 1` dilations for step `t` and
/// darkens the grown region of `clean`. Each pixel keeps one darkening factor
/// for the whole trajectory.
pub fn generate_trajectory(
    clean: &Tensor,
    crack_mask: &BinaryMask,
    params: &GrowthParams,
    seed: u64,
) -> Result<Vec<GrowthStep>> {
    params.validate()?;
    let (c, h, w) = clean.chw()?;
    if (h, w) != crack_mask.shape() {
        return Err(Error::Shape {
            expected: vec![h, w],
            actual: vec![crack_mask.height(), crack_mask.width()],
        });
    }
    let mut mask = skeletonize(crack_mask);
    if !mask.any() {
        return Err(Error::Empty("crack skeleton"));
    }
    let mut rng = rng_for(seed, &[]);
    let factors: Vec<f32> = (0..h * w)
        .map(|_| {
            if params.darkness_jitter > 0.0 {
                params.darkness + rng.gen_range(-params.darkness_jitter..=params.darkness_jitter)
            } else {
                params.darkness
            }
        })
        .collect();
    let se = StructuringElement::disk(params.r_dilate);
    let mut steps = Vec::with_capacity(params.n_steps);
    for _ in 0..params.n_steps {
        mask = dilate(&mask, &se);
        let mut image = clean.clone();
        let plane = h * w;
        for ch in 0..c {
            for (i, v) in image.data_mut()[ch * plane..(ch + 1) * plane].iter_mut().enumerate() {
                if mask.data()[i] {
                    *v *= factors[i];
                }
            }
        }
        steps.push(GrowthStep {
            image,
            mask: mask.clone(),
        });
    }
    Ok(steps)
}

/// Single, unbranched, gently curving cracks. Growth does not model
/// branching, and tight bends would merge as they widen, which breaks the
/// linear ground truth.
pub fn growth_crack_params() -> CrackParams {
    CrackParams {
        min_cracks: 1,
        max_cracks: 1,
        waviness: 0.05,
        ..CrackParams::default()
    }
}

/// `n` trajectories over damage-free samples drawn without replacement
/// (the pool is reshuffled and reused if `n` exceeds it).
pub fn gen_trajectories(
    clean: &[Sample],
    n: usize,
    crack: &CrackParams,
    params: &GrowthParams,
    seed: u64,
) -> Result<Vec<GrowthTrajectory>> {
    let pool: Vec<&Sample> = clean.iter().filter(|s| s.label == 0).collect();
    if pool.is_empty() {
        return Err(Error::Empty("damage-free pool"));
    }
    let mut rng = rng_for(seed, &[0]);
    let mut order: Vec<usize> = Vec::with_capacity(n);
    while order.len() < n {
        let mut round: Vec<usize> = (0..pool.len()).collect();
        round.shuffle(&mut rng);
        order.extend(round.into_iter().take(n - order.len()));
    }
    let mut out = Vec::with_capacity(n);
    for (t, &i) in order.iter().enumerate() {
        let s = pool[i];
        let (_, h, w) = s.image.chw()?;
        if h != w {
            return Err(invalid("growth trajectories need square patches"));
        }
        let tseed = derive_seed(seed, &[1, t as u64]);
        // redraw the rare crack that thins away to nothing
        let mut attempt = 0;
        let steps = loop {
            let mask = gen_crack_path(h, crack, derive_seed(tseed, &[attempt]));
            match generate_trajectory(&s.image, &mask, params, derive_seed(tseed, &[u64::MAX])) {
                Err(Error::Empty(_)) if attempt < 8 => attempt += 1,
                other => break other?,
            }
        };
        out.push(GrowthTrajectory {
            steps,
            source_id: s.id.clone(),
            seed: tseed,
        });
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r: f64,
}

/// Ordinary least squares of `y` on `x` with Pearson `r`; `r = 0` when either
/// variable has no variance.
pub fn linear_fit_xy(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() {
        return Err(invalid("x and y must have equal length"));
    }
    if x.len() < 2 {
        return Err(invalid("a linear fit needs at least two points"));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
        sxy += (a - mx) * (b - my);
    }
    if sxx == 0.0 {
        return Err(invalid("x values must not all be equal"));
    }
    let slope = sxy / sxx;
    let r = if syy == 0.0 {
        0.0
    } else {
        (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
    };
    Ok(LinearFit {
        slope,
        intercept: my - slope * mx,
        r,
    })
}

/// Fit against step indices `0..n`.
pub fn linear_fit(y: &[f64]) -> Result<LinearFit> {
    let x: Vec<f64> = (0..y.len()).map(|i| i as f64).collect();
    linear_fit_xy(&x, y)
}

/// Mean absolute percentage error between slopes. Pairs with a zero true
/// slope are skipped with a warning; the count of skipped pairs is returned.
pub fn slope_mape(est: &[f64], truth: &[f64]) -> Result<(f64, usize)> {
    if est.len() != truth.len() {
        return Err(invalid("slope lists must have equal length"));
    }
    let mut sum = 0.0;
    let mut used = 0usize;
    for (&e, &t) in est.iter().zip(truth) {
        if t == 0.0 {
            continue;
        }
        sum += (e - t).abs() / t.abs();
        used += 1;
    }
    let skipped = est.len() - used;
    if skipped > 0 {
        warn!("slope MAPE: skipped {skipped} trajectories with a zero true slope");
    }
    if used == 0 {
        return Err(Error::Empty("trajectories with a non-zero true slope"));
    }
    Ok((100.0 * sum / used as f64, skipped))
}

/// Where the estimated crack masks come from.
pub enum MaskSource<'a> {
    /// Ground-truth masks; isolates the growth statistics from segmentation error.
    Oracle,
    Xai {
        attributor: &'a Attributor<'a>,
        method: &'a Method,
        postproc: &'a PostprocConfig,
    },
}

/// Minimum classified-positive steps for a trajectory to count.
pub const MIN_RETAINED_STEPS: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrajectoryMetrics {
    pub source_id: String,
    /// Step indices the classifier called positive.
    pub steps: Vec<usize>,
    pub true_area: Vec<f64>,
    pub est_area: Vec<f64>,
    pub true_width: Vec<f64>,
    pub est_width: Vec<f64>,
    pub retained: bool,
    pub area: Option<(LinearFit, LinearFit)>,
    pub width: Option<(LinearFit, LinearFit)>,
}

/// Severity series of one trajectory. Without a classifier every step is kept.
pub fn evaluate_trajectory(
    traj: &GrowthTrajectory,
    classifier: Option<&Network>,
    source: &MaskSource<'_>,
) -> Result<TrajectoryMetrics> {
    let mut m = TrajectoryMetrics {
        source_id: traj.source_id.clone(),
        steps: Vec::new(),
        true_area: Vec::new(),
        est_area: Vec::new(),
        true_width: Vec::new(),
        est_width: Vec::new(),
        retained: false,
        area: None,
        width: None,
    };
    for (t, step) in traj.steps.iter().enumerate() {
        if let Some(net) = classifier {
            if predict(net, &step.image)? != 1 {
                continue;
            }
        }
        let est = match source {
            MaskSource::Oracle => step.mask.clone(),
            MaskSource::Xai {
                attributor,
                method,
                postproc,
            } => {
                let map = attributor.attribute(method, &step.image, 1)?;
                postprocess(&map.values, postproc)?.final_mask().clone()
            }
        };
        m.steps.push(t);
        m.true_area.push(step.mask.count() as f64);
        m.est_area.push(est.count() as f64);
        m.true_width.push(max_width_px(&step.mask));
        m.est_width.push(max_width_px(&est));
    }
    m.retained = m.steps.len() >= MIN_RETAINED_STEPS;
    if m.retained {
        let x: Vec<f64> = m.steps.iter().map(|&t| t as f64).collect();
        m.area = Some((linear_fit_xy(&x, &m.true_area)?, linear_fit_xy(&x, &m.est_area)?));
        m.width = Some((linear_fit_xy(&x, &m.true_width)?, linear_fit_xy(&x, &m.est_width)?));
    }
    Ok(m)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GrowthSummary {
    pub method: String,
    pub avg_r_area: f64,
    pub mape_area: f64,
    pub avg_r_width: f64,
    pub mape_width: f64,
    pub n_retained: usize,
}

/// Averages `r` of the estimates and the slope MAPE over retained trajectories.
pub fn summarize_growth(method: &str, metrics: &[TrajectoryMetrics]) -> Result<GrowthSummary> {
    let kept: Vec<&TrajectoryMetrics> = metrics.iter().filter(|m| m.retained).collect();
    if kept.is_empty() {
        return Err(Error::Empty("retained trajectories"));
    }
    let n = kept.len() as f64;
    let fits = |f: fn(&TrajectoryMetrics) -> (LinearFit, LinearFit)| -> (f64, Vec<f64>, Vec<f64>) {
        let pairs: Vec<(LinearFit, LinearFit)> = kept.iter().map(|m| f(m)).collect();
        (
            pairs.iter().map(|p| p.1.r).sum::<f64>() / n,
            pairs.iter().map(|p| p.1.slope).collect(),
            pairs.iter().map(|p| p.0.slope).collect(),
        )
    };
    let (r_area, est_a, true_a) = fits(|m| m.area.expect("retained"));
    let (r_width, est_w, true_w) = fits(|m| m.width.expect("retained"));
    Ok(GrowthSummary {
        method: method.to_string(),
        avg_r_area: r_area,
        mape_area: slope_mape(&est_a, &true_a)?.0,
        avg_r_width: r_width,
        mape_width: slope_mape(&est_w, &true_w)?.0,
        n_retained: kept.len(),
    })
}

pub fn evaluate_growth(
    method: &str,
    trajectories: &[GrowthTrajectory],
    classifier: Option<&Network>,
    source: &MaskSource<'_>,
) -> Result<(GrowthSummary, Vec<TrajectoryMetrics>)> {
    let metrics = trajectories
        .iter()
        .map(|t| evaluate_trajectory(t, classifier, source))
        .collect::<Result<Vec<_>>>()?;
    Ok((summarize_growth(method, &metrics)?, metrics))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryRow {
    pub trajectory: usize,
    pub step: usize,
    pub image: String,
    pub mask: String,
    pub source_id: String,
    pub seed: u64,
}

/// Writes every step as graymaps plus `trajectories.csv`; returns the index path.
pub fn write_trajectories(dir: &Path, trajectories: &[GrowthTrajectory]) -> Result<PathBuf> {
    let mut rows = Vec::new();
    for (i, traj) in trajectories.iter().enumerate() {
        let sub = format!("traj_{i:04}");
        fs::create_dir_all(dir.join(&sub))?;
        for (t, step) in traj.steps.iter().enumerate() {
            let image = format!("{sub}/step_{t}_image.pgm");
            let mask = format!("{sub}/step_{t}_mask.pgm");
            formats::write_image(&dir.join(&image), &step.image)?;
            formats::write_mask(&dir.join(&mask), &step.mask)?;
            rows.push(TrajectoryRow {
                trajectory: i,
                step: t,
                image,
                mask,
                source_id: traj.source_id.clone(),
                seed: traj.seed,
            });
        }
    }
    let index = dir.join("trajectories.csv");
    formats::write_csv(&index, &rows)?;
    Ok(index)
}

//! Segmentation, classification and severity-error metrics.

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::mask::BinaryMask;

/// Pixel confusion counts; add them up across images for micro-averaging.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct PixelConfusion {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl PixelConfusion {
    pub fn from_masks(pred: &BinaryMask, gt: &BinaryMask) -> Result<Self> {
        pred.check_same_shape(gt)?;
        let mut c = Self::default();
        for (&p, &g) in pred.data().iter().zip(gt.data()) {
            match (p, g) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn metrics(&self) -> SegMetrics {
        let (tp, fp, fn_) = (self.tp as f64, self.fp as f64, self.fn_ as f64);
        if self.tp + self.fp + self.fn_ == 0 {
            // nothing predicted, nothing to find
            return SegMetrics {
                f1: 1.0,
                precision: 1.0,
                recall: 1.0,
                iou: 1.0,
            };
        }
        let ratio = |num: f64, den: f64| if den > 0.0 { num / den } else { 0.0 };
        SegMetrics {
            f1: ratio(2.0 * tp, 2.0 * tp + fp + fn_),
            precision: ratio(tp, tp + fp),
            recall: ratio(tp, tp + fn_),
            iou: ratio(tp, tp + fp + fn_),
        }
    }
}

impl std::ops::Add for PixelConfusion {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            tn: self.tn + o.tn,
        }
    }
}

impl std::ops::AddAssign for PixelConfusion {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl std::iter::Sum for PixelConfusion {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), |a, b| a + b)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SegMetrics {
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub iou: f64,
}

pub fn seg_metrics(pred: &BinaryMask, gt: &BinaryMask) -> Result<SegMetrics> {
    Ok(PixelConfusion::from_masks(pred, gt)?.metrics())
}

/// Micro-averaged metrics over a set of `(prediction, ground truth)` pairs.
pub fn seg_metrics_micro<'a>(pairs: impl IntoIterator<Item = (&'a BinaryMask, &'a BinaryMask)>) -> Result<SegMetrics> {
    let mut total = PixelConfusion::default();
    for (p, g) in pairs {
        total += PixelConfusion::from_masks(p, g)?;
    }
    Ok(total.metrics())
}

/// Binary classification rates. A rate whose class is absent is `None`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ClsMetrics {
    pub balanced_accuracy: Option<f64>,
    pub tpr: Option<f64>,
    pub tnr: Option<f64>,
}

impl ClsMetrics {
    pub fn from_rates(tpr: f64, tnr: f64) -> Self {
        Self {
            balanced_accuracy: Some((tpr + tnr) / 2.0),
            tpr: Some(tpr),
            tnr: Some(tnr),
        }
    }
}

/// Labels and predictions are 0 (damage-free) or positive (damage).
pub fn cls_metrics(predictions: &[usize], labels: &[usize]) -> Result<ClsMetrics> {
    if predictions.len() != labels.len() {
        return Err(invalid("predictions and labels differ in length"));
    }
    let (mut tp, mut pos, mut tn, mut neg) = (0usize, 0usize, 0usize, 0usize);
    for (&p, &l) in predictions.iter().zip(labels) {
        if l > 0 {
            pos += 1;
            tp += (p > 0) as usize;
        } else {
            neg += 1;
            tn += (p == 0) as usize;
        }
    }
    let tpr = (pos > 0).then(|| tp as f64 / pos as f64);
    let tnr = (neg > 0).then(|| tn as f64 / neg as f64);
    Ok(ClsMetrics {
        balanced_accuracy: tpr.zip(tnr).map(|(a, b)| (a + b) / 2.0),
        tpr,
        tnr,
    })
}

pub fn mae(est: &[f64], truth: &[f64]) -> Result<f64> {
    if est.len() != truth.len() {
        return Err(invalid("length mismatch"));
    }
    if est.is_empty() {
        return Err(Error::Empty("input"));
    }
    Ok(est.iter().zip(truth).map(|(e, t)| (e - t).abs()).sum::<f64>() / est.len() as f64)
}

/// MAPE in percent, with the number of zero-truth pairs that were skipped.
pub fn mape(est: &[f64], truth: &[f64]) -> Result<(f64, usize)> {
    if est.len() != truth.len() {
        return Err(invalid("length mismatch"));
    }
    let kept: Vec<f64> = est
        .iter()
        .zip(truth)
        .filter(|(_, &t)| t != 0.0)
        .map(|(e, t)| (e - t).abs() / t.abs())
        .collect();
    if kept.is_empty() {
        return Err(Error::Empty("input with non-zero truths"));
    }
    Ok((
        100.0 * kept.iter().sum::<f64>() / kept.len() as f64,
        est.len() - kept.len(),
    ))
}

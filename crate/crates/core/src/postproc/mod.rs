//! From continuous attribution maps to clean binary crack masks.

mod morphology;
mod threshold;

use serde::{Deserialize, Serialize};

pub use morphology::{area_opening, close, dilate, erode, StructuringElement};
pub use threshold::{gmm_fit_1d, threshold_gmm, threshold_simple, Gmm1d, Threshold};

use crate::error::{invalid, Result};
use crate::mask::BinaryMask;
use crate::tensor::Tensor;

/// Patch side the default radii and area were tuned for.
pub const REFERENCE_PATCH: usize = 256;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PostprocConfig {
    pub threshold: Threshold,
    /// Disk radius of the first closing.
    pub r1: usize,
    pub min_area: usize,
    /// Disk radius of the second closing.
    pub r2: usize,
    pub morphology: bool,
}

impl Default for PostprocConfig {
    fn default() -> Self {
        Self {
            threshold: Threshold::default(),
            r1: 5,
            min_area: 50,
            r2: 25,
            morphology: true,
        }
    }
}

impl PostprocConfig {
    /// Defaults rescaled from 256-pixel patches: radii linearly, area quadratically.
    pub fn for_patch_size(size: usize) -> Self {
        let s = size as f64 / REFERENCE_PATCH as f64;
        let d = Self::default();
        Self {
            r1: ((d.r1 as f64 * s).round() as usize).max(1),
            r2: ((d.r2 as f64 * s).round() as usize).max(1),
            min_area: ((d.min_area as f64 * s * s).round() as usize).max(1),
            ..d
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.r1 < 1 || self.r2 < 1 || self.min_area < 1 {
            return Err(invalid("r1, r2 and min_area must be at least 1"));
        }
        if let Threshold::Simple { kappa } = self.threshold {
            if !kappa.is_finite() {
                return Err(invalid("kappa must be finite"));
            }
        }
        Ok(())
    }
}

pub const STEP_NAMES: [&str; 4] = ["binarize", "close1", "area_open", "close2"];

/// The mask after each pipeline step; `steps[3]` is the final mask.
#[derive(Clone, Debug, PartialEq)]
pub struct PipelineOutput {
    pub steps: [BinaryMask; 4],
}

impl PipelineOutput {
    pub fn final_mask(&self) -> &BinaryMask {
        &self.steps[3]
    }
}

/// Threshold, close(r1), area opening, close(r2). With morphology disabled
/// every step repeats the thresholded mask.
pub fn postprocess(map: &Tensor, cfg: &PostprocConfig) -> Result<PipelineOutput> {
    cfg.validate()?;
    let binary = cfg.threshold.apply(map)?;
    if !cfg.morphology {
        return Ok(PipelineOutput {
            steps: [binary.clone(), binary.clone(), binary.clone(), binary],
        });
    }
    let closed = close(&binary, &StructuringElement::disk(cfg.r1));
    let opened = area_opening(&closed, cfg.min_area);
    let final_mask = close(&opened, &StructuringElement::disk(cfg.r2));
    Ok(PipelineOutput {
        steps: [binary, closed, opened, final_mask],
    })
}

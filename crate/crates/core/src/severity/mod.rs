//! Crack severity: cracks per patch, area and maximum width.

mod distance;
mod labeling;
mod skeleton;

use serde::Serialize;

pub use distance::{distance_transform, DistanceField};
pub use labeling::{connected_components, LabelGrid};
pub use skeleton::skeletonize;

use crate::mask::BinaryMask;

/// Millimetres per pixel of the reference wall imagery.
pub const DEFAULT_MM_PER_PX: f64 = 0.43;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeverityReport {
    pub cpp: usize,
    pub area_px: usize,
    pub area_fraction: f64,
    pub max_width_px: f64,
    pub max_width_mm: f64,
    pub calibration_mm_per_px: f64,
}

/// Maximum crack width in pixels: `2·d − 1`, where `d` is the largest
/// distance-to-background found on the skeleton. A one-pixel line has width 1.
pub fn max_width_px(mask: &BinaryMask) -> f64 {
    if !mask.any() {
        return 0.0;
    }
    let skel = skeletonize(mask);
    let dist = distance_transform(mask);
    let d = skel.foreground().map(|(y, x)| dist.get(y, x)).fold(0.0f64, f64::max);
    2.0 * d - 1.0
}

/// `(width in px, width in mm)`
pub fn max_width(mask: &BinaryMask, mm_per_px: f64) -> (f64, f64) {
    let px = max_width_px(mask);
    (px, px * mm_per_px)
}

pub fn severity_report(mask: &BinaryMask, mm_per_px: f64) -> SeverityReport {
    let cpp = connected_components(mask).count();
    let area_px = mask.count();
    let (max_width_px, max_width_mm) = max_width(mask, mm_per_px);
    SeverityReport {
        cpp,
        area_px,
        area_fraction: area_px as f64 / mask.len().max(1) as f64,
        max_width_px,
        max_width_mm,
        calibration_mm_per_px: mm_per_px,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_report() {
        let r = severity_report(&BinaryMask::new(8, 8), DEFAULT_MM_PER_PX);
        assert_eq!((r.cpp, r.area_px, r.max_width_px), (0, 0, 0.0));
    }

    #[test]
    fn two_far_pixels() {
        let mut m = BinaryMask::new(10, 10);
        m.set(1, 1, true);
        m.set(8, 8, true);
        let r = severity_report(&m, DEFAULT_MM_PER_PX);
        assert_eq!((r.cpp, r.area_px, r.max_width_px), (2, 2, 1.0));
    }

    #[test]
    fn bar_widths() {
        let line = BinaryMask::from_fn(9, 20, |y, x| y == 4 && (2..18).contains(&x));
        assert_eq!(max_width_px(&line), 1.0);
        let bar = BinaryMask::from_fn(9, 20, |y, x| (3..6).contains(&y) && (2..18).contains(&x));
        assert_eq!(max_width_px(&bar), 3.0);
    }

    #[test]
    fn square_width_near_side() {
        let sq = BinaryMask::from_fn(14, 14, |y, x| (2..12).contains(&y) && (2..12).contains(&x));
        assert!((max_width_px(&sq) - 10.0).abs() <= 1.0);
    }

    #[test]
    fn calibration_to_mm() {
        assert!((11.86 * DEFAULT_MM_PER_PX - 5.10).abs() < 0.005);
    }

    #[test]
    fn area_fraction_of_thin_structure() {
        let mut m = BinaryMask::new(256, 256);
        for i in 0..655 {
            m.set(i / 256 * 3, i % 256, true);
        }
        let r = severity_report(&m, DEFAULT_MM_PER_PX);
        assert_eq!(r.area_px, 655);
        assert!((r.area_fraction - 0.01).abs() < 1e-4);
    }
}

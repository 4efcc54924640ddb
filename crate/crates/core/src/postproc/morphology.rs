use crate::error::{invalid, Result};
use crate::mask::{squared_distance_to, BinaryMask};
use crate::severity::connected_components;

/// A symmetric structuring element given by its offsets `(dy, dx)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StructuringElement {
    offsets: Vec<(isize, isize)>,
    /// `Some(r)` when this is the Euclidean disk of radius `r`.
    disk_radius: Option<usize>,
}

impl StructuringElement {
    /// Discrete Euclidean disk `{(dy, dx) : dy² + dx² ≤ r²}`.
    pub fn disk(radius: usize) -> Self {
        let r = radius as isize;
        let mut offsets = Vec::new();
        for dy in -r..=r {
            for dx in -r..=r {
                if dy * dy + dx * dx <= r * r {
                    offsets.push((dy, dx));
                }
            }
        }
        Self {
            offsets,
            disk_radius: Some(radius),
        }
    }

    /// Arbitrary element; must contain the origin and be closed under negation.
    pub fn from_offsets(mut offsets: Vec<(isize, isize)>) -> Result<Self> {
        offsets.sort_unstable();
        offsets.dedup();
        if !offsets.contains(&(0, 0)) {
            return Err(invalid("structuring element must contain the origin"));
        }
        if offsets
            .iter()
            .any(|&(dy, dx)| offsets.binary_search(&(-dy, -dx)).is_err())
        {
            return Err(invalid("structuring element must be symmetric"));
        }
        Ok(Self {
            offsets,
            disk_radius: None,
        })
    }

    pub fn offsets(&self) -> &[(isize, isize)] {
        &self.offsets
    }
}

/// Dilation; the outside of the image is background.
pub fn dilate(mask: &BinaryMask, se: &StructuringElement) -> BinaryMask {
    let (h, w) = mask.shape();
    if let Some(r) = se.disk_radius {
        let d = squared_distance_to(h, w, |i| mask.data()[i]);
        let r2 = (r * r) as f64;
        return BinaryMask::from_vec(h, w, d.iter().map(|&v| v <= r2).collect()).expect("same shape");
    }
    BinaryMask::from_fn(h, w, |y, x| {
        se.offsets
            .iter()
            .any(|&(dy, dx)| mask.get_or(y as isize - dy, x as isize - dx, false))
    })
}

/// Erosion; the outside of the image is foreground, so closing stays
/// extensive at the border.
pub fn erode(mask: &BinaryMask, se: &StructuringElement) -> BinaryMask {
    let (h, w) = mask.shape();
    if let Some(r) = se.disk_radius {
        let d = squared_distance_to(h, w, |i| !mask.data()[i]);
        let r2 = (r * r) as f64;
        return BinaryMask::from_vec(h, w, d.iter().map(|&v| v > r2).collect()).expect("same shape");
    }
    BinaryMask::from_fn(h, w, |y, x| {
        se.offsets
            .iter()
            .all(|&(dy, dx)| mask.get_or(y as isize + dy, x as isize + dx, true))
    })
}

/// Dilation followed by erosion.
pub fn close(mask: &BinaryMask, se: &StructuringElement) -> BinaryMask {
    erode(&dilate(mask, se), se)
}

/// Removes 8-connected components smaller than `min_area` pixels.
pub fn area_opening(mask: &BinaryMask, min_area: usize) -> BinaryMask {
    let labels = connected_components(mask);
    let sizes = labels.sizes();
    let (h, w) = mask.shape();
    BinaryMask::from_fn(h, w, |y, x| {
        let l = labels.get(y, x);
        l > 0 && sizes[l as usize - 1] >= min_area
    })
}

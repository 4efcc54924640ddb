use crate::mask::{squared_distance_to, BinaryMask};

/// Euclidean distance from each pixel centre to the nearest background
/// pixel centre. Pixels beyond the image border count as background, so
/// foreground touching the border has distance 1 there.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceField {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl DistanceField {
    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }
}

pub fn distance_transform(mask: &BinaryMask) -> DistanceField {
    let (h, w) = mask.shape();
    // one-pixel background frame
    let (ph, pw) = (h + 2, w + 2);
    let sq = squared_distance_to(ph, pw, |i| {
        let (y, x) = (i / pw, i % pw);
        y == 0 || x == 0 || y == ph - 1 || x == pw - 1 || !mask.get(y - 1, x - 1)
    });
    let mut values = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            values.push(sq[(y + 1) * pw + x + 1].sqrt());
        }
    }
    DistanceField {
        height: h,
        width: w,
        values,
    }
}

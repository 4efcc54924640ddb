//! Boolean pixel grids and the squared Euclidean distance transform they share.

use crate::error::{invalid, Error, Result};
use crate::tensor::Tensor;

/// An `H×W` grid of booleans; `true` is foreground (crack).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![false; height * width],
        }
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::Shape {
                expected: vec![height, width],
                actual: vec![data.len()],
            });
        }
        Ok(Self { height, width, data })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x));
            }
        }
        Self { height, width, data }
    }

    /// Parses rows of `#`/`1` (foreground) and `.`/`0` (background); handy in tests.
    pub fn from_ascii(rows: &[&str]) -> Self {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.len());
        Self::from_fn(height, width, |y, x| matches!(rows[y].as_bytes()[x], b'#' | b'1'))
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> bool {
        self.data[y * self.width + x]
    }

    /// Out-of-bounds coordinates read as `outside`.
    #[inline]
    pub fn get_or(&self, y: isize, x: isize, outside: bool) -> bool {
        if y < 0 || x < 0 || y >= self.height as isize || x >= self.width as isize {
            outside
        } else {
            self.data[y as usize * self.width + x as usize]
        }
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    pub fn any(&self) -> bool {
        self.data.iter().any(|&v| v)
    }

    pub fn check_same_shape(&self, other: &BinaryMask) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::Shape {
                expected: vec![self.height, self.width],
                actual: vec![other.height, other.width],
            });
        }
        Ok(())
    }

    /// `self ⊆ other`
    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.shape() == other.shape() && self.data.iter().zip(&other.data).all(|(&a, &b)| !a || b)
    }

    pub fn union(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.check_same_shape(other)?;
        Ok(Self {
            height: self.height,
            width: self.width,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a || b).collect(),
        })
    }

    pub fn invert(&self) -> BinaryMask {
        Self {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| !v).collect(),
        }
    }

    /// Foreground pixel coordinates in raster order.
    pub fn foreground(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &v)| v)
            .map(move |(i, _)| (i / self.width, i % self.width))
    }

    pub fn flip(&self, h: bool, v: bool) -> BinaryMask {
        Self::from_fn(self.height, self.width, |y, x| {
            let sy = if v { self.height - 1 - y } else { y };
            let sx = if h { self.width - 1 - x } else { x };
            self.get(sy, sx)
        })
    }

    /// Clockwise quarter turn.
    pub fn rotate90(&self) -> BinaryMask {
        Self::from_fn(self.width, self.height, |y, x| self.get(self.height - 1 - x, y))
    }

    /// `[H, W]` tensor of 0/1 values.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(
            vec![self.height.max(1), self.width.max(1)],
            self.data.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect(),
        )
        .expect("non-empty mask")
    }

    /// Foreground where the (single-channel) tensor exceeds `threshold`.
    pub fn from_tensor(t: &Tensor, threshold: f32) -> Result<BinaryMask> {
        let (c, h, w) = t.chw()?;
        if c != 1 {
            return Err(invalid("mask tensors must be single-channel"));
        }
        Ok(Self {
            height: h,
            width: w,
            data: t.data().iter().map(|&v| v > threshold).collect(),
        })
    }
}

const FAR: f64 = 1e20;

/// 1-D lower envelope of parabolas (Felzenszwalb & Huttenlocher).
fn edt_1d(f: &[f64], d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    let meet = |q: usize, p: usize| ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
    for q in 1..n {
        let mut s = meet(q, v[k]);
        while s <= z[k] {
            k -= 1;
            s = meet(q, v[k]);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, out) in d.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let dq = q as f64 - p as f64;
        *out = dq * dq + f[p];
    }
}

/// Squared Euclidean distance from every pixel to the nearest pixel where
/// `is_source` holds. Pixels with no source anywhere get `f64::INFINITY`.
pub fn squared_distance_to(height: usize, width: usize, is_source: impl Fn(usize) -> bool) -> Vec<f64> {
    if height == 0 || width == 0 {
        return Vec::new();
    }
    let n = height.max(width);
    let mut grid: Vec<f64> = (0..height * width)
        .map(|i| if is_source(i) { 0.0 } else { FAR })
        .collect();
    let (mut f, mut d) = (vec![0.0; n], vec![0.0; n]);
    let (mut v, mut z) = (vec![0usize; n], vec![0.0; n + 1]);
    for x in 0..width {
        for y in 0..height {
            f[y] = grid[y * width + x];
        }
        edt_1d(&f[..height], &mut d[..height], &mut v, &mut z);
        for y in 0..height {
            grid[y * width + x] = d[y];
        }
    }
    for y in 0..height {
        f[..width].copy_from_slice(&grid[y * width..(y + 1) * width]);
        edt_1d(&f[..width], &mut d[..width], &mut v, &mut z);
        grid[y * width..(y + 1) * width].copy_from_slice(&d[..width]);
    }
    for g in &mut grid {
        if *g >= FAR / 2.0 {
            *g = f64::INFINITY;
        }
    }
    grid
}

//! Dense row-major `f32` tensors.

use crate::error::{invalid, Error, Result};

/// A dense n-dimensional array of `f32` values in row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(invalid(format!("tensor dimensions must be positive: {shape:?}")));
        }
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(Error::Shape {
                expected: shape,
                actual: vec![data.len()],
            });
        }
        Ok(Self { shape, data })
    }

    /// Panics if the shape has a zero dimension.
    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f32) -> Self {
        assert!(
            !shape.is_empty() && shape.iter().all(|&d| d > 0),
            "tensor dimensions must be positive: {shape:?}"
        );
        Self {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn from_vec(data: Vec<f32>) -> Self {
        let n = data.len();
        Self::new(vec![n], data).expect("non-empty vector")
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> f32) -> Self {
        let mut t = Self::zeros(shape);
        for (i, v) in t.data.iter_mut().enumerate() {
            *v = f(i);
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let len: usize = shape.iter().product();
        if len != self.data.len() || shape.contains(&0) {
            return Err(Error::Shape {
                expected: shape.to_vec(),
                actual: self.shape,
            });
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Elementwise combination of two tensors of identical shape.
    pub fn zip_with(&self, other: &Tensor, f: impl Fn(f32, f32) -> f32) -> Result<Self> {
        self.check_same_shape(other)?;
        Ok(Self {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn check_same_shape(&self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::Shape {
                expected: self.shape.clone(),
                actual: other.shape.clone(),
            });
        }
        Ok(())
    }

    /// Sum accumulated in `f64`.
    pub fn sum(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    pub fn max(&self) -> f32 {
        self.data.iter().copied().fold(f32::NEG_INFINITY, f32::max)
    }

    pub fn min(&self) -> f32 {
        self.data.iter().copied().fold(f32::INFINITY, f32::min)
    }

    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.data.iter().enumerate() {
            if v > self.data[best] {
                best = i;
            }
        }
        best
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Mean of a non-empty set of same-shaped tensors.
    pub fn mean_of(tensors: &[Tensor]) -> Result<Tensor> {
        let first = tensors.first().ok_or(Error::Empty("tensor set"))?;
        let mut acc = vec![0.0f64; first.len()];
        for t in tensors {
            first.check_same_shape(t)?;
            for (a, &v) in acc.iter_mut().zip(&t.data) {
                *a += v as f64;
            }
        }
        let n = tensors.len() as f64;
        Ok(Self {
            shape: first.shape.clone(),
            data: acc.into_iter().map(|a| (a / n) as f32).collect(),
        })
    }

    /// Spatial view helpers for `[C, H, W]` image tensors.
    pub fn chw(&self) -> Result<(usize, usize, usize)> {
        match self.shape[..] {
            [c, h, w] => Ok((c, h, w)),
            [h, w] => Ok((1, h, w)),
            _ => Err(invalid(format!("expected an image tensor, got shape {:?}", self.shape))),
        }
    }

    /// Horizontal (`h`) and/or vertical (`v`) flip of the last two axes.
    pub fn flip(&self, h: bool, v: bool) -> Result<Self> {
        let (c, rows, cols) = self.chw()?;
        if !h && !v {
            return Ok(self.clone());
        }
        let mut out = self.clone();
        for ch in 0..c {
            for y in 0..rows {
                let sy = if v { rows - 1 - y } else { y };
                for x in 0..cols {
                    let sx = if h { cols - 1 - x } else { x };
                    out.data[(ch * rows + y) * cols + x] = self.data[(ch * rows + sy) * cols + sx];
                }
            }
        }
        Ok(out)
    }

    /// FNV-1a over the bit patterns; used to check that frozen weights are untouched.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in &self.data {
            for b in v.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_inconsistent_length() {
        assert!(Tensor::new(vec![2, 2], vec![0.0; 3]).is_err());
        assert!(Tensor::new(vec![0], vec![]).is_err());
    }

    #[test]
    fn flips_are_involutions() {
        let t = Tensor::from_fn(&[1, 3, 4], |i| i as f32);
        let f = t.flip(true, false).unwrap();
        assert_eq!(f.data()[0], 3.0);
        assert_eq!(f.flip(true, false).unwrap(), t);
        let g = t.flip(false, true).unwrap();
        assert_eq!(g.data()[0], 8.0);
        assert_eq!(g.flip(false, true).unwrap(), t);
    }

    #[test]
    fn mean_of_set() {
        let a = Tensor::from_vec(vec![1.0, 2.0]);
        let b = Tensor::from_vec(vec![3.0, 6.0]);
        assert_eq!(Tensor::mean_of(&[a, b]).unwrap().data(), &[2.0, 4.0]);
        assert!(Tensor::mean_of(&[]).is_err());
    }
}

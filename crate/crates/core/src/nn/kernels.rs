//! Slice-level layer kernels, generic over the scalar type.
//!
//! Layouts: activations `[C, H, W]` or `[N]`; conv weights `[O, C, K, K]`;
//! linear weights `[out, in]`.

use super::real::Real;

#[derive(Clone, Copy, Debug)]
pub struct ConvGeom {
    pub in_c: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_c: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeom {
    /// Output column range whose input column `ox*stride + kx - padding` is in bounds.
    #[inline]
    fn col_range(&self, kx: usize) -> (usize, usize) {
        let s = self.stride;
        let lo_num = self.padding.saturating_sub(kx);
        let lo = lo_num.div_ceil(s);
        // largest ox with ox*s + kx - p <= in_w - 1
        let hi = if self.in_w + self.padding > kx {
            ((self.in_w + self.padding - kx - 1) / s + 1).min(self.out_w)
        } else {
            0
        };
        (lo, hi.max(lo))
    }

    #[inline]
    fn in_row(&self, oy: usize, ky: usize) -> Option<usize> {
        let iy = (oy * self.stride + ky) as isize - self.padding as isize;
        (iy >= 0 && (iy as usize) < self.in_h).then_some(iy as usize)
    }
}

/// Unrolls the input into a `[C·K·K, out_h·out_w]` column matrix (zero padded).
fn im2col<T: Real>(g: &ConvGeom, input: &[T]) -> Vec<T> {
    let hw = g.out_h * g.out_w;
    let plane_in = g.in_h * g.in_w;
    let mut cols = vec![T::zero(); g.in_c * g.kernel * g.kernel * hw];
    for c in 0..g.in_c {
        let in_plane = &input[c * plane_in..(c + 1) * plane_in];
        for ky in 0..g.kernel {
            for kx in 0..g.kernel {
                let row = (c * g.kernel + ky) * g.kernel + kx;
                let dst = &mut cols[row * hw..(row + 1) * hw];
                let (lo, hi) = g.col_range(kx);
                if lo >= hi {
                    continue;
                }
                for oy in 0..g.out_h {
                    let Some(iy) = g.in_row(oy, ky) else { continue };
                    let ix0 = lo * g.stride + kx - g.padding;
                    let irow = &in_plane[iy * g.in_w..(iy + 1) * g.in_w];
                    let drow = &mut dst[oy * g.out_w + lo..oy * g.out_w + hi];
                    if g.stride == 1 {
                        drow.copy_from_slice(&irow[ix0..ix0 + (hi - lo)]);
                    } else {
                        for (j, d) in drow.iter_mut().enumerate() {
                            *d = irow[ix0 + j * g.stride];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Scatter-adds a column matrix back onto the input layout.
fn col2im<T: Real>(g: &ConvGeom, cols: &[T], grad_in: &mut [T]) {
    let hw = g.out_h * g.out_w;
    let plane_in = g.in_h * g.in_w;
    for c in 0..g.in_c {
        let gi_plane = &mut grad_in[c * plane_in..(c + 1) * plane_in];
        for ky in 0..g.kernel {
            for kx in 0..g.kernel {
                let row = (c * g.kernel + ky) * g.kernel + kx;
                let src = &cols[row * hw..(row + 1) * hw];
                let (lo, hi) = g.col_range(kx);
                if lo >= hi {
                    continue;
                }
                for oy in 0..g.out_h {
                    let Some(iy) = g.in_row(oy, ky) else { continue };
                    let ix0 = lo * g.stride + kx - g.padding;
                    let irow = &mut gi_plane[iy * g.in_w..(iy + 1) * g.in_w];
                    let srow = &src[oy * g.out_w + lo..oy * g.out_w + hi];
                    if g.stride == 1 {
                        axpy(T::one(), srow, &mut irow[ix0..ix0 + (hi - lo)]);
                    } else {
                        for (j, &v) in srow.iter().enumerate() {
                            let d = &mut irow[ix0 + j * g.stride];
                            *d = *d + v;
                        }
                    }
                }
            }
        }
    }
}

/// `y += a * x`
#[inline]
pub fn axpy<T: Real>(a: T, x: &[T], y: &mut [T]) {
    for (yv, &xv) in y.iter_mut().zip(x) {
        *yv = *yv + a * xv;
    }
}

/// Dot product with eight independent partial sums, combined in a fixed order.
#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [T::zero(); 8];
    let chunks = n / 8;
    for i in 0..chunks {
        let (ca, cb) = (&a[i * 8..i * 8 + 8], &b[i * 8..i * 8 + 8]);
        for l in 0..8 {
            acc[l] = acc[l] + ca[l] * cb[l];
        }
    }
    let mut tail = T::zero();
    for i in chunks * 8..n {
        tail = tail + a[i] * b[i];
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

pub fn conv2d_forward<T: Real>(g: &ConvGeom, input: &[T], weight: &[T], bias: &[T], out: &mut [T]) {
    let hw = g.out_h * g.out_w;
    let ckk = g.in_c * g.kernel * g.kernel;
    let cols = im2col(g, input);
    for (o, plane) in out.chunks_exact_mut(hw).enumerate() {
        let b = bias.get(o).copied().unwrap_or_else(T::zero);
        plane.iter_mut().for_each(|v| *v = b);
    }
    // four output channels per pass over the column matrix
    let mut o = 0;
    while o + 4 <= g.out_c {
        let (p0, rest) = out[o * hw..(o + 4) * hw].split_at_mut(hw);
        let (p1, rest) = rest.split_at_mut(hw);
        let (p2, p3) = rest.split_at_mut(hw);
        for k in 0..ckk {
            let w = [
                weight[o * ckk + k],
                weight[(o + 1) * ckk + k],
                weight[(o + 2) * ckk + k],
                weight[(o + 3) * ckk + k],
            ];
            let col = &cols[k * hw..(k + 1) * hw];
            for i in 0..hw {
                let c = col[i];
                p0[i] = p0[i] + w[0] * c;
                p1[i] = p1[i] + w[1] * c;
                p2[i] = p2[i] + w[2] * c;
                p3[i] = p3[i] + w[3] * c;
            }
        }
        o += 4;
    }
    for o in o..g.out_c {
        let out_plane = &mut out[o * hw..(o + 1) * hw];
        let wrow = &weight[o * ckk..(o + 1) * ckk];
        for (k, &wv) in wrow.iter().enumerate() {
            axpy(wv, &cols[k * hw..(k + 1) * hw], out_plane);
        }
    }
}

/// Accumulates `dL/d input` into `grad_in` (which must be zeroed by the caller).
pub fn conv2d_backward_input<T: Real>(g: &ConvGeom, grad_out: &[T], weight: &[T], grad_in: &mut [T]) {
    let hw = g.out_h * g.out_w;
    let ckk = g.in_c * g.kernel * g.kernel;
    let mut cols = vec![T::zero(); ckk * hw];
    for (k, col) in cols.chunks_exact_mut(hw).enumerate() {
        let mut o = 0;
        while o + 4 <= g.out_c {
            let w = [
                weight[o * ckk + k],
                weight[(o + 1) * ckk + k],
                weight[(o + 2) * ckk + k],
                weight[(o + 3) * ckk + k],
            ];
            let g0 = &grad_out[o * hw..(o + 1) * hw];
            let g1 = &grad_out[(o + 1) * hw..(o + 2) * hw];
            let g2 = &grad_out[(o + 2) * hw..(o + 3) * hw];
            let g3 = &grad_out[(o + 3) * hw..(o + 4) * hw];
            for i in 0..hw {
                col[i] = col[i] + ((w[0] * g0[i] + w[1] * g1[i]) + (w[2] * g2[i] + w[3] * g3[i]));
            }
            o += 4;
        }
        for o in o..g.out_c {
            axpy(weight[o * ckk + k], &grad_out[o * hw..(o + 1) * hw], col);
        }
    }
    col2im(g, &cols, grad_in);
}

/// Accumulates weight and bias gradients.
pub fn conv2d_backward_params<T: Real>(g: &ConvGeom, input: &[T], grad_out: &[T], grad_w: &mut [T], grad_b: &mut [T]) {
    let hw = g.out_h * g.out_w;
    let ckk = g.in_c * g.kernel * g.kernel;
    let cols = im2col(g, input);
    for o in 0..g.out_c {
        let go = &grad_out[o * hw..(o + 1) * hw];
        grad_b[o] = grad_b[o] + go.iter().copied().sum::<T>();
        for k in 0..ckk {
            let wi = o * ckk + k;
            grad_w[wi] = grad_w[wi] + dot(go, &cols[k * hw..(k + 1) * hw]);
        }
    }
}

pub fn linear_forward<T: Real>(input: &[T], weight: &[T], bias: &[T], out: &mut [T]) {
    let n_in = input.len();
    for (j, ov) in out.iter_mut().enumerate() {
        let row = &weight[j * n_in..(j + 1) * n_in];
        *ov = dot(row, input) + bias.get(j).copied().unwrap_or_else(T::zero);
    }
}

pub fn linear_backward_input<T: Real>(grad_out: &[T], weight: &[T], grad_in: &mut [T]) {
    let n_in = grad_in.len();
    for (j, &gv) in grad_out.iter().enumerate() {
        axpy(gv, &weight[j * n_in..(j + 1) * n_in], grad_in);
    }
}

pub fn linear_backward_params<T: Real>(input: &[T], grad_out: &[T], grad_w: &mut [T], grad_b: &mut [T]) {
    let n_in = input.len();
    for (j, &gv) in grad_out.iter().enumerate() {
        grad_b[j] = grad_b[j] + gv;
        axpy(gv, input, &mut grad_w[j * n_in..(j + 1) * n_in]);
    }
}

#[derive(Clone, Copy, Debug)]
pub struct PoolGeom {
    pub channels: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub window: usize,
    pub stride: usize,
}

impl PoolGeom {
    /// Flat input index of the first maximum (raster order) in each output window.
    pub fn argmax<T: Real>(&self, input: &[T]) -> Vec<usize> {
        let mut idx = vec![0usize; self.channels * self.out_h * self.out_w];
        let plane = self.in_h * self.in_w;
        let mut o = 0;
        for c in 0..self.channels {
            let base = c * plane;
            for oy in 0..self.out_h {
                let row0 = base + oy * self.stride * self.in_w;
                for ox in 0..self.out_w {
                    let start = row0 + ox * self.stride;
                    // branch-free: max first, then the first position holding it
                    let mut best_v = input[start];
                    for dy in 0..self.window {
                        let r = start + dy * self.in_w;
                        for &v in &input[r..r + self.window] {
                            best_v = if v > best_v { v } else { best_v };
                        }
                    }
                    let mut best = start;
                    for dy in (0..self.window).rev() {
                        let r = start + dy * self.in_w;
                        for dx in (0..self.window).rev() {
                            best = if input[r + dx] == best_v { r + dx } else { best };
                        }
                    }
                    idx[o] = best;
                    o += 1;
                }
            }
        }
        idx
    }

    /// Flat input indices covered by output element `o`.
    pub fn window_indices(&self, o: usize) -> impl Iterator<Item = usize> + '_ {
        let c = o / (self.out_h * self.out_w);
        let r = o % (self.out_h * self.out_w);
        let (oy, ox) = (r / self.out_w, r % self.out_w);
        let base = c * self.in_h * self.in_w + oy * self.stride * self.in_w + ox * self.stride;
        (0..self.window * self.window).map(move |k| base + (k / self.window) * self.in_w + k % self.window)
    }
}

pub fn maxpool_forward<T: Real>(g: &PoolGeom, input: &[T], out: &mut [T]) {
    for (o, i) in g.argmax(input).into_iter().enumerate() {
        out[o] = input[i];
    }
}

/// Routes each output gradient to its window's argmax.
pub fn maxpool_backward<T: Real>(g: &PoolGeom, input: &[T], grad_out: &[T], grad_in: &mut [T]) {
    for (o, i) in g.argmax(input).into_iter().enumerate() {
        grad_in[i] = grad_in[i] + grad_out[o];
    }
}

#[derive(Clone, Copy, Debug)]
pub struct UpsampleGeom {
    pub channels: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub factor: usize,
}

impl UpsampleGeom {
    /// Source index for every output element.
    pub fn sources(&self) -> impl Iterator<Item = usize> + '_ {
        let (oh, ow) = (self.in_h * self.factor, self.in_w * self.factor);
        (0..self.channels * oh * ow).map(move |o| {
            let c = o / (oh * ow);
            let r = o % (oh * ow);
            let (y, x) = (r / ow / self.factor, (r % ow) / self.factor);
            (c * self.in_h + y) * self.in_w + x
        })
    }
}

pub fn upsample_forward<T: Real>(g: &UpsampleGeom, input: &[T], out: &mut [T]) {
    for (o, s) in g.sources().enumerate() {
        out[o] = input[s];
    }
}

pub fn upsample_backward<T: Real>(g: &UpsampleGeom, grad_out: &[T], grad_in: &mut [T]) {
    for (o, s) in g.sources().enumerate() {
        grad_in[s] = grad_in[s] + grad_out[o];
    }
}

pub fn sigmoid<T: Real>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

//! Dense `rows × cols × channels` arrays and the wrap-aware primitives built on
//! them. Every primitive that feeds a loss comes with an analytic backward.

mod conv;
mod diff;
mod pad;
mod resample;
mod sample;

pub use conv::{conv2d, conv2d_backward, Kernel, KernelGrad};
pub use diff::{
    dxx, dxx_adjoint, dxy, dxy_adjoint, dyx, dyx_adjoint, dyy, dyy_adjoint, grad_x, grad_x_adjoint, grad_y,
    grad_y_adjoint,
};
pub use pad::{pad_cols, pad_cols_adjoint, wrap_pad};
pub use resample::{downsample_half, downsample_half_backward, upsample_double, upsample_double_backward};
pub use sample::{bilinear_sample, bilinear_sample_backward, Sampled};

use crate::error::{Error, Result};

/// Horizontal boundary behaviour.
///
/// `Wrap` treats the last column as the left neighbour of the first. `Bounded`
/// is the flat-image behaviour: zero padding for convolutions, out-of-range
/// samples flagged invalid, replicated edges for differences and resampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EdgeMode {
    Wrap,
    Bounded,
}

impl EdgeMode {
    pub fn from_wrap(wrap: bool) -> Self {
        if wrap {
            EdgeMode::Wrap
        } else {
            EdgeMode::Bounded
        }
    }
}

/// Row-major `rows × cols × chans` array of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    chans: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize, chans: usize) -> Self {
        Self::filled(rows, cols, chans, 0.0)
    }

    pub fn filled(rows: usize, cols: usize, chans: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            chans,
            data: vec![value; rows * cols * chans],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, chans: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols * chans {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {rows}x{cols}x{chans} tensor",
                data.len()
            )));
        }
        Ok(Self {
            rows,
            cols,
            chans,
            data,
        })
    }

    pub fn from_fn(rows: usize, cols: usize, chans: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols * chans);
        for r in 0..rows {
            for c in 0..cols {
                for k in 0..chans {
                    data.push(f(r, c, k));
                }
            }
        }
        Self {
            rows,
            cols,
            chans,
            data,
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn chans(&self) -> usize {
        self.chans
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.rows, self.cols, self.chans)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, r: usize, c: usize, k: usize) -> usize {
        (r * self.cols + c) * self.chans + k
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize, k: usize) -> f64 {
        self.data[self.index(r, c, k)]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, k: usize, v: f64) {
        let i = self.index(r, c, k);
        self.data[i] = v;
    }

    #[inline]
    pub fn add_at(&mut self, r: usize, c: usize, k: usize, v: f64) {
        let i = self.index(r, c, k);
        self.data[i] += v;
    }

    /// All channels of one pixel.
    #[inline]
    pub fn pixel(&self, r: usize, c: usize) -> &[f64] {
        let i = self.index(r, c, 0);
        &self.data[i..i + self.chans]
    }

    #[inline]
    pub fn pixel_mut(&mut self, r: usize, c: usize) -> &mut [f64] {
        let i = self.index(r, c, 0);
        &mut self.data[i..i + self.chans]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn same_shape(&self, other: &Tensor) -> bool {
        self.shape() == other.shape()
    }

    pub(crate) fn check_same_shape(&self, other: &Tensor, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!(
                "{what}: {:?} vs {:?}",
                self.shape(),
                other.shape()
            )))
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            rows: self.rows,
            cols: self.cols,
            chans: self.chans,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        self.check_same_shape(other, "zip_map")?;
        Ok(Tensor {
            rows: self.rows,
            cols: self.cols,
            chans: self.chans,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        self.check_same_shape(other, "add_assign")?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale_in_place(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            0.0
        } else {
            self.sum() / self.data.len() as f64
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Circular column shift: output column `(c + s) mod C` holds input column `c`.
    pub fn roll_cols(&self, s: isize) -> Tensor {
        let cols = self.cols as isize;
        let mut out = Tensor::zeros(self.rows, self.cols, self.chans);
        if self.cols == 0 {
            return out;
        }
        for r in 0..self.rows {
            for c in 0..self.cols {
                let dst = (c as isize + s).rem_euclid(cols) as usize;
                let src_i = self.index(r, c, 0);
                let dst_i = out.index(r, dst, 0);
                out.data[dst_i..dst_i + self.chans].copy_from_slice(&self.data[src_i..src_i + self.chans]);
            }
        }
        out
    }

    /// Single-channel tensor holding channel `k`.
    pub fn channel(&self, k: usize) -> Tensor {
        Tensor::from_fn(self.rows, self.cols, 1, |r, c, _| self.get(r, c, k))
    }

    /// Contiguous column band `[start, start + width)`, wrapping modulo the width.
    pub fn cols_band(&self, start: usize, width: usize) -> Tensor {
        Tensor::from_fn(self.rows, width, self.chans, |r, c, k| {
            self.get(r, (start + c) % self.cols, k)
        })
    }

    /// Stacks tensors of equal spatial size along the channel axis.
    pub fn concat_channels(parts: &[&Tensor]) -> Result<Tensor> {
        let first = parts
            .first()
            .ok_or_else(|| Error::ShapeMismatch("concat of zero tensors".into()))?;
        let (rows, cols) = (first.rows, first.cols);
        if let Some(bad) = parts.iter().find(|t| t.rows != rows || t.cols != cols) {
            return Err(Error::ShapeMismatch(format!(
                "concat: {}x{} vs {}x{}",
                rows, cols, bad.rows, bad.cols
            )));
        }
        let chans: usize = parts.iter().map(|t| t.chans).sum();
        let mut data = Vec::with_capacity(rows * cols * chans);
        for r in 0..rows {
            for c in 0..cols {
                for t in parts {
                    data.extend_from_slice(t.pixel(r, c));
                }
            }
        }
        Tensor::from_vec(rows, cols, chans, data)
    }

    /// Inverse of [`Tensor::concat_channels`] for the given channel counts.
    pub fn split_channels(&self, counts: &[usize]) -> Result<Vec<Tensor>> {
        if counts.iter().sum::<usize>() != self.chans {
            return Err(Error::ShapeMismatch(format!(
                "split {counts:?} of {} channels",
                self.chans
            )));
        }
        let mut out: Vec<Tensor> = counts.iter().map(|&k| Tensor::zeros(self.rows, self.cols, k)).collect();
        for r in 0..self.rows {
            for c in 0..self.cols {
                let px = self.pixel(r, c);
                let mut off = 0;
                for t in out.iter_mut() {
                    let k = t.chans;
                    t.pixel_mut(r, c).copy_from_slice(&px[off..off + k]);
                    off += k;
                }
            }
        }
        Ok(out)
    }

    pub fn dot(&self, other: &Tensor) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }
}

use super::{EdgeMode, Tensor};
use crate::error::{Error, Result};

/// 2×2 mean pooling.
pub fn downsample_half(t: &Tensor) -> Result<Tensor> {
    let (rows, cols, chans) = t.shape();
    if rows % 2 != 0 || cols % 2 != 0 {
        return Err(Error::ShapeMismatch(format!(
            "downsample needs even dimensions, got {rows}x{cols}"
        )));
    }
    Ok(Tensor::from_fn(rows / 2, cols / 2, chans, |r, c, k| {
        0.25 * (t.get(2 * r, 2 * c, k)
            + t.get(2 * r, 2 * c + 1, k)
            + t.get(2 * r + 1, 2 * c, k)
            + t.get(2 * r + 1, 2 * c + 1, k))
    }))
}

/// Adjoint of [`downsample_half`].
pub fn downsample_half_backward(g: &Tensor) -> Tensor {
    let (rows, cols, chans) = g.shape();
    Tensor::from_fn(rows * 2, cols * 2, chans, |r, c, k| 0.25 * g.get(r / 2, c / 2, k))
}

/// Source taps of output index `o` when doubling an axis of length `n`.
/// Output sample centres sit at input coordinate `o / 2 - 0.25`.
#[inline]
fn up_taps(o: usize, n: usize, wrap: bool) -> [(usize, f64); 2] {
    let m = o / 2;
    let (lo, hi, w_lo) = if o % 2 == 0 {
        let lo = if m > 0 {
            m - 1
        } else if wrap {
            n - 1
        } else {
            0
        };
        (lo, m, 0.25)
    } else {
        let hi = if m + 1 < n {
            m + 1
        } else if wrap {
            0
        } else {
            n - 1
        };
        (m, hi, 0.75)
    };
    [(lo, w_lo), (hi, 1.0 - w_lo)]
}

/// Bilinear ×2 upsampling; columns wrap in [`EdgeMode::Wrap`], rows replicate.
pub fn upsample_double(t: &Tensor, mode: EdgeMode) -> Tensor {
    let (rows, cols, chans) = t.shape();
    let wrap = mode == EdgeMode::Wrap;
    let mut out = Tensor::zeros(rows * 2, cols * 2, chans);
    for r in 0..rows * 2 {
        let ty = up_taps(r, rows, false);
        for c in 0..cols * 2 {
            let tx = up_taps(c, cols, wrap);
            let dst = out.index(r, c, 0);
            for &(ri, wy) in &ty {
                for &(ci, wx) in &tx {
                    let w = wy * wx;
                    let src = t.index(ri, ci, 0);
                    for k in 0..chans {
                        let v = t.data()[src + k];
                        out.data_mut()[dst + k] += w * v;
                    }
                }
            }
        }
    }
    out
}

/// Adjoint of [`upsample_double`].
pub fn upsample_double_backward(g: &Tensor, mode: EdgeMode) -> Result<Tensor> {
    let (orows, ocols, chans) = g.shape();
    if orows % 2 != 0 || ocols % 2 != 0 {
        return Err(Error::ShapeMismatch(format!(
            "upsample gradient must have even dimensions, got {orows}x{ocols}"
        )));
    }
    let (rows, cols) = (orows / 2, ocols / 2);
    let wrap = mode == EdgeMode::Wrap;
    let mut out = Tensor::zeros(rows, cols, chans);
    for r in 0..orows {
        let ty = up_taps(r, rows, false);
        for c in 0..ocols {
            let tx = up_taps(c, cols, wrap);
            let src = g.index(r, c, 0);
            for &(ri, wy) in &ty {
                for &(ci, wx) in &tx {
                    let w = wy * wx;
                    let dst = out.index(ri, ci, 0);
                    for k in 0..chans {
                        let v = g.data()[src + k];
                        out.data_mut()[dst + k] += w * v;
                    }
                }
            }
        }
    }
    Ok(out)
}

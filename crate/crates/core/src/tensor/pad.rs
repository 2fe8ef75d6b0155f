use super::{EdgeMode, Tensor};
use crate::error::{Error, Result};

/// Horizontal wrap padding: `k` columns from the right edge are prepended and
/// `k` columns from the left edge are appended.
pub fn wrap_pad(t: &Tensor, k: usize) -> Result<Tensor> {
    pad_cols(t, k, EdgeMode::Wrap)
}

/// Pads `k` columns on both sides, wrapping or with zeros.
pub fn pad_cols(t: &Tensor, k: usize, mode: EdgeMode) -> Result<Tensor> {
    let (rows, cols, chans) = t.shape();
    if k > cols {
        return Err(Error::BadPad { pad: k, width: cols });
    }
    let out_cols = cols + 2 * k;
    let mut out = Tensor::zeros(rows, out_cols, chans);
    for r in 0..rows {
        let src = &t.data()[t.index(r, 0, 0)..t.index(r, 0, 0) + cols * chans];
        let base = out.index(r, 0, 0);
        let dst = &mut out.data_mut()[base..base + out_cols * chans];
        dst[k * chans..(k + cols) * chans].copy_from_slice(src);
        if mode == EdgeMode::Wrap && k > 0 {
            dst[..k * chans].copy_from_slice(&src[(cols - k) * chans..]);
            dst[(k + cols) * chans..].copy_from_slice(&src[..k * chans]);
        }
    }
    Ok(out)
}

/// Adjoint of [`pad_cols`]: folds the gradient of the padded tensor back onto
/// the unpadded columns.
pub fn pad_cols_adjoint(g: &Tensor, k: usize, mode: EdgeMode) -> Result<Tensor> {
    let (rows, out_cols, chans) = g.shape();
    if out_cols < 2 * k {
        return Err(Error::ShapeMismatch(format!(
            "padded width {out_cols} smaller than 2*{k}"
        )));
    }
    let cols = out_cols - 2 * k;
    if k > cols {
        return Err(Error::BadPad { pad: k, width: cols });
    }
    let mut out = Tensor::zeros(rows, cols, chans);
    for r in 0..rows {
        for c in 0..out_cols {
            let src = if c < k {
                match mode {
                    EdgeMode::Wrap => Some(cols - k + c),
                    EdgeMode::Bounded => None,
                }
            } else if c < k + cols {
                Some(c - k)
            } else {
                match mode {
                    EdgeMode::Wrap => Some(c - k - cols),
                    EdgeMode::Bounded => None,
                }
            };
            if let Some(s) = src {
                for ch in 0..chans {
                    out.add_at(r, s, ch, g.get(r, c, ch));
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(v: &[f64]) -> Tensor {
        Tensor::from_vec(1, v.len(), 1, v.to_vec()).unwrap()
    }

    #[test]
    fn copies_opposite_edges() {
        let p = wrap_pad(&row(&[1.0, 2.0, 3.0]), 1).unwrap();
        assert_eq!(p.data(), &[3.0, 1.0, 2.0, 3.0, 1.0]);
        let p = wrap_pad(&row(&[1.0, 2.0, 3.0, 4.0]), 2).unwrap();
        assert_eq!(p.data(), &[3.0, 4.0, 1.0, 2.0, 3.0, 4.0, 1.0, 2.0]);
    }

    #[test]
    fn zero_pad_is_identity() {
        let t = Tensor::from_fn(3, 4, 2, |r, c, k| (r * 10 + c * 3 + k) as f64);
        assert_eq!(wrap_pad(&t, 0).unwrap(), t);
    }

    #[test]
    fn full_width_pad_allowed_and_overpad_rejected() {
        let t = row(&[1.0, 2.0]);
        assert_eq!(wrap_pad(&t, 2).unwrap().data(), &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        assert!(matches!(wrap_pad(&t, 3), Err(Error::BadPad { pad: 3, width: 2 })));
    }

    #[test]
    fn bounded_pads_with_zeros() {
        let p = pad_cols(&row(&[1.0, 2.0, 3.0]), 1, EdgeMode::Bounded).unwrap();
        assert_eq!(p.data(), &[0.0, 1.0, 2.0, 3.0, 0.0]);
    }

    #[test]
    fn adjoint_inner_product() {
        let t = Tensor::from_fn(2, 5, 3, |r, c, k| ((r * 7 + c * 3 + k) as f64).sin());
        let g = Tensor::from_fn(2, 9, 3, |r, c, k| ((r * 5 + c * 11 + k) as f64).cos());
        for mode in [EdgeMode::Wrap, EdgeMode::Bounded] {
            let lhs = pad_cols(&t, 2, mode).unwrap().dot(&g);
            let rhs = t.dot(&pad_cols_adjoint(&g, 2, mode).unwrap());
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }
}

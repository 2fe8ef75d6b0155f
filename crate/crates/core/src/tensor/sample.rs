use super::{EdgeMode, Tensor};
use crate::error::{Error, Result};

/// Output of [`bilinear_sample`].
#[derive(Debug, Clone, PartialEq)]
pub struct Sampled {
    /// Interpolated values; zero where `valid` is zero.
    pub values: Tensor,
    /// Single-channel 0/1 mask.
    pub valid: Tensor,
}

#[derive(Debug, Clone, Copy)]
struct Taps {
    r0: usize,
    r1: usize,
    c0: usize,
    c1: usize,
    fy: f64,
    fx: f64,
}

fn clamp_idx(v: f64, n: usize) -> usize {
    if v <= 0.0 {
        0
    } else {
        (v as usize).min(n - 1)
    }
}

fn locate(x: f64, y: f64, rows: usize, cols: usize, mode: EdgeMode) -> Option<Taps> {
    if !(x.is_finite() && y.is_finite()) || rows == 0 || cols == 0 {
        return None;
    }
    if y < -0.5 || y > rows as f64 - 0.5 {
        return None;
    }
    let y0 = y.floor();
    let fy = y - y0;
    let (r0, r1) = (clamp_idx(y0, rows), clamp_idx(y0 + 1.0, rows));
    let x0 = x.floor();
    let fx = x - x0;
    let (c0, c1) = match mode {
        EdgeMode::Wrap => {
            let n = cols as f64;
            let a = x0.rem_euclid(n);
            let a = if a >= n { 0.0 } else { a };
            let a = a as usize;
            (a, (a + 1) % cols)
        }
        EdgeMode::Bounded => {
            if x < -0.5 || x > cols as f64 - 0.5 {
                return None;
            }
            (clamp_idx(x0, cols), clamp_idx(x0 + 1.0, cols))
        }
    };
    Some(Taps { r0, r1, c0, c1, fy, fx })
}

fn check_coords(coords: &Tensor) -> Result<()> {
    if coords.chans() != 2 {
        return Err(Error::ShapeMismatch(format!(
            "sample coordinates need 2 channels (column, row), got {}",
            coords.chans()
        )));
    }
    Ok(())
}

/// Bilinear sampling of `img` at per-pixel continuous `(column, row)`
/// coordinates stored as the two channels of `coords`.
///
/// Columns wrap modulo the width in [`EdgeMode::Wrap`]. Rows (and columns in
/// [`EdgeMode::Bounded`]) outside `[-0.5, n - 0.5]` are invalid; inside that
/// band the taps are edge-clamped.
pub fn bilinear_sample(img: &Tensor, coords: &Tensor, mode: EdgeMode) -> Result<Sampled> {
    check_coords(coords)?;
    let (rows, cols, chans) = img.shape();
    let (orows, ocols, _) = coords.shape();
    let mut values = Tensor::zeros(orows, ocols, chans);
    let mut valid = Tensor::zeros(orows, ocols, 1);
    for r in 0..orows {
        for c in 0..ocols {
            let xy = coords.pixel(r, c);
            let Some(t) = locate(xy[0], xy[1], rows, cols, mode) else {
                continue;
            };
            valid.set(r, c, 0, 1.0);
            let (w00, w01) = ((1.0 - t.fy) * (1.0 - t.fx), (1.0 - t.fy) * t.fx);
            let (w10, w11) = (t.fy * (1.0 - t.fx), t.fy * t.fx);
            let (p00, p01) = (img.pixel(t.r0, t.c0), img.pixel(t.r0, t.c1));
            let (p10, p11) = (img.pixel(t.r1, t.c0), img.pixel(t.r1, t.c1));
            let out = values.pixel_mut(r, c);
            for k in 0..chans {
                out[k] = w00 * p00[k] + w01 * p01[k] + w10 * p10[k] + w11 * p11[k];
            }
        }
    }
    Ok(Sampled { values, valid })
}

/// Backward of [`bilinear_sample`]: returns `(grad_img, grad_coords)`.
///
/// The coordinate gradient is the derivative of the bilinear patch the sample
/// falls in; it is discontinuous across integer grid lines.
pub fn bilinear_sample_backward(
    img: &Tensor,
    coords: &Tensor,
    mode: EdgeMode,
    grad_values: &Tensor,
) -> Result<(Tensor, Tensor)> {
    check_coords(coords)?;
    let (rows, cols, chans) = img.shape();
    let (orows, ocols, _) = coords.shape();
    if grad_values.shape() != (orows, ocols, chans) {
        return Err(Error::ShapeMismatch(format!(
            "sampler upstream gradient {:?}, expected {:?}",
            grad_values.shape(),
            (orows, ocols, chans)
        )));
    }
    let mut grad_img = Tensor::zeros(rows, cols, chans);
    let mut grad_coords = Tensor::zeros(orows, ocols, 2);
    for r in 0..orows {
        for c in 0..ocols {
            let xy = coords.pixel(r, c);
            let Some(t) = locate(xy[0], xy[1], rows, cols, mode) else {
                continue;
            };
            let g = grad_values.pixel(r, c);
            let (w00, w01) = ((1.0 - t.fy) * (1.0 - t.fx), (1.0 - t.fy) * t.fx);
            let (w10, w11) = (t.fy * (1.0 - t.fx), t.fy * t.fx);
            let mut gx = 0.0;
            let mut gy = 0.0;
            for k in 0..chans {
                let gk = g[k];
                if gk == 0.0 {
                    continue;
                }
                let p00 = img.get(t.r0, t.c0, k);
                let p01 = img.get(t.r0, t.c1, k);
                let p10 = img.get(t.r1, t.c0, k);
                let p11 = img.get(t.r1, t.c1, k);
                gx += gk * ((1.0 - t.fy) * (p01 - p00) + t.fy * (p11 - p10));
                gy += gk * ((1.0 - t.fx) * (p10 - p00) + t.fx * (p11 - p01));
                grad_img.add_at(t.r0, t.c0, k, w00 * gk);
                grad_img.add_at(t.r0, t.c1, k, w01 * gk);
                grad_img.add_at(t.r1, t.c0, k, w10 * gk);
                grad_img.add_at(t.r1, t.c1, k, w11 * gk);
            }
            grad_coords.set(r, c, 0, gx);
            grad_coords.set(r, c, 1, gy);
        }
    }
    Ok((grad_img, grad_coords))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn coords_of(points: &[(f64, f64)]) -> Tensor {
        let data = points.iter().flat_map(|&(x, y)| [x, y]).collect();
        Tensor::from_vec(1, points.len(), 2, data).unwrap()
    }

    #[test]
    fn identity_grid_is_exact() {
        let img = Tensor::from_fn(4, 6, 3, |r, c, k| (r * 31 + c * 7 + k) as f64 * 0.01);
        let grid = Tensor::from_fn(4, 6, 2, |r, c, k| if k == 0 { c as f64 } else { r as f64 });
        let s = bilinear_sample(&img, &grid, EdgeMode::Wrap).unwrap();
        assert_eq!(s.values, img);
        assert!(s.valid.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn seam_interpolation() {
        let img = Tensor::from_vec(1, 4, 1, vec![10.0, 0.0, 0.0, 2.0]).unwrap();
        let s = bilinear_sample(&img, &coords_of(&[(3.5, 0.0), (-0.5, 0.0), (7.5, 0.0)]), EdgeMode::Wrap).unwrap();
        assert_eq!(s.values.data(), &[6.0, 6.0, 6.0]);
        // bounded mode clamps within half a pixel and rejects beyond
        let s = bilinear_sample(&img, &coords_of(&[(3.5, 0.0), (3.6, 0.0)]), EdgeMode::Bounded).unwrap();
        assert_eq!(s.values.data(), &[2.0, 0.0]);
        assert_eq!(s.valid.data(), &[1.0, 0.0]);
    }

    #[test]
    fn out_of_vertical_bounds() {
        let img = Tensor::filled(3, 4, 2, 0.7);
        let s = bilinear_sample(
            &img,
            &coords_of(&[(1.0, -5.0), (1.0, -0.5), (1.0, 2.5), (1.0, 2.51)]),
            EdgeMode::Wrap,
        )
        .unwrap();
        assert_eq!(s.valid.data(), &[0.0, 1.0, 1.0, 0.0]);
        assert_eq!(s.values.pixel(0, 0), &[0.0, 0.0]);
        assert_eq!(s.values.pixel(0, 1), &[0.7, 0.7]);
    }

    #[test]
    fn non_finite_coordinates_are_invalid() {
        let img = Tensor::filled(2, 2, 1, 1.0);
        let s = bilinear_sample(&img, &coords_of(&[(f64::NAN, 0.0)]), EdgeMode::Wrap).unwrap();
        assert_eq!(s.valid.data(), &[0.0]);
    }

    #[test]
    fn backward_matches_finite_differences_off_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let img = Tensor::from_fn(5, 7, 2, |_, _, _| rng.gen_range(0.0..1.0));
        let mut pts = Vec::new();
        while pts.len() < 30 {
            let x: f64 = rng.gen_range(-3.0..10.0);
            let y: f64 = rng.gen_range(-0.4..4.4);
            let off = |v: f64| (v - v.round()).abs() >= 0.01;
            if off(x) && off(y) {
                pts.push((x, y));
            }
        }
        let coords = coords_of(&pts);
        let probe = Tensor::from_fn(1, pts.len(), 2, |_, _, _| rng.gen_range(-1.0..1.0));
        let f = |img: &Tensor, co: &Tensor| bilinear_sample(img, co, EdgeMode::Wrap).unwrap().values.dot(&probe);
        let (gi, gc) = bilinear_sample_backward(&img, &coords, EdgeMode::Wrap, &probe).unwrap();
        let h = 1e-5;
        let mut co = coords.clone();
        for idx in 0..co.len() {
            let v = co.data()[idx];
            co.data_mut()[idx] = v + h;
            let fp = f(&img, &co);
            co.data_mut()[idx] = v - h;
            let fm = f(&img, &co);
            co.data_mut()[idx] = v;
            let num = (fp - fm) / (2.0 * h);
            let a = gc.data()[idx];
            assert!(
                (num - a).abs() <= 1e-4 * a.abs().max(num.abs()).max(1e-6),
                "{idx}: {a} vs {num}"
            );
        }
        let mut im = img.clone();
        for idx in 0..im.len() {
            let v = im.data()[idx];
            im.data_mut()[idx] = v + h;
            let fp = f(&im, &coords);
            im.data_mut()[idx] = v - h;
            let fm = f(&im, &coords);
            im.data_mut()[idx] = v;
            assert!(((fp - fm) / (2.0 * h) - gi.data()[idx]).abs() < 1e-8);
        }
    }
}

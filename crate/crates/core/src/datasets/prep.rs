//! Static-frame filtering, field-of-view crops, resizing and equirectangular
//! re-projection.

use std::f64::consts::PI;

use crate::camera::{wrap_angle, CylCamera, Point3};
use crate::error::{Error, Result};
use crate::tensor::{bilinear_sample, EdgeMode, Tensor};

/// Default static-frame threshold in scene units.
pub const STATIC_TAU: f64 = 0.05;

/// Keeps frame `k` when its camera moved at least `tau` since frame `k - 1`;
/// frame 0 is always kept.
pub fn filter_static(positions: &[Point3], tau: f64) -> Vec<usize> {
    let mut kept = Vec::new();
    for (k, p) in positions.iter().enumerate() {
        if k == 0 || (p - positions[k - 1]).norm() >= tau {
            kept.push(k);
        }
    }
    kept
}

/// Contiguous column band of `round(W · fov / 360)` columns centred on
/// `center` (radians). The cropped camera does not wrap unless `fov = 360`.
pub fn crop_fov(pano: &Tensor, cam: &CylCamera, fov_deg: f64, center: f64) -> Result<(Tensor, CylCamera)> {
    if !(fov_deg > 0.0 && fov_deg <= 360.0) {
        return Err(Error::BadFov(fov_deg));
    }
    if !cam.wraps || pano.cols() != cam.width || pano.rows() != cam.height {
        return Err(Error::InvalidArgument(
            "crop_fov needs a full wrapping panorama matching its camera".into(),
        ));
    }
    if fov_deg == 360.0 {
        return Ok((pano.clone(), *cam));
    }
    let n = crop_width(cam, fov_deg);
    let start = crop_start(cam, fov_deg, center);
    let band = pano.cols_band(start, n);
    let out = CylCamera {
        width: n,
        theta_min: wrap_angle(cam.theta_min + start as f64 * cam.col_pitch()),
        fov: n as f64 * cam.col_pitch(),
        wraps: false,
        ..*cam
    };
    Ok((band, out))
}

/// First column index of the band [`crop_fov`] would select.
pub fn crop_start(cam: &CylCamera, fov_deg: f64, center: f64) -> usize {
    let w = cam.width as f64;
    let n = crop_width(cam, fov_deg) as f64;
    let edge = wrap_angle(center - cam.theta_min) / cam.col_pitch();
    (edge - 0.5 * n).round().rem_euclid(w) as usize % cam.width
}

fn crop_width(cam: &CylCamera, fov_deg: f64) -> usize {
    ((cam.width as f64 * fov_deg / 360.0).round() as usize).clamp(1, cam.width)
}

/// Weights of each source sample contributing to each output sample along one
/// axis: area overlap when shrinking, linear interpolation otherwise.
fn axis_weights(n_in: usize, n_out: usize, wrap: bool) -> Vec<Vec<(usize, f64)>> {
    let scale = n_in as f64 / n_out as f64;
    (0..n_out)
        .map(|o| {
            if n_out < n_in {
                let (lo, hi) = (o as f64 * scale, (o + 1) as f64 * scale);
                let mut w = Vec::new();
                let mut i = lo.floor() as usize;
                while (i as f64) < hi && i < n_in {
                    let overlap = hi.min((i + 1) as f64) - lo.max(i as f64);
                    if overlap > 0.0 {
                        w.push((i, overlap / scale));
                    }
                    i += 1;
                }
                w
            } else {
                let x = (o as f64 + 0.5) * scale - 0.5;
                let x0 = x.floor();
                let f = x - x0;
                let idx = |k: f64| -> usize {
                    let k = k as isize;
                    if wrap {
                        k.rem_euclid(n_in as isize) as usize
                    } else {
                        k.clamp(0, n_in as isize - 1) as usize
                    }
                };
                vec![(idx(x0), 1.0 - f), (idx(x0 + 1.0), f)]
            }
        })
        .collect()
}

/// Resizes with area averaging when shrinking and bilinear interpolation when
/// enlarging; `wrap` makes horizontal interpolation seam-continuous.
pub fn resize(img: &Tensor, rows: usize, cols: usize, wrap: bool) -> Tensor {
    let wc = axis_weights(img.cols(), cols, wrap);
    let wr = axis_weights(img.rows(), rows, false);
    let k = img.chans();
    let mut tmp = Tensor::zeros(img.rows(), cols, k);
    for r in 0..img.rows() {
        for (c, ws) in wc.iter().enumerate() {
            for &(src, w) in ws {
                for ch in 0..k {
                    tmp.add_at(r, c, ch, w * img.get(r, src, ch));
                }
            }
        }
    }
    let mut out = Tensor::zeros(rows, cols, k);
    for (r, ws) in wr.iter().enumerate() {
        for &(src, w) in ws {
            for c in 0..cols {
                for ch in 0..k {
                    out.add_at(r, c, ch, w * tmp.get(src, c, ch));
                }
            }
        }
    }
    out
}

/// Re-projects a full-sphere equirectangular image (azimuth `[-π, π)` across
/// the width, elevation `[-π/2, π/2]` top to bottom) onto a cylinder.
pub fn equirect_to_cyl(img: &Tensor, cam: &CylCamera) -> Result<Tensor> {
    let (we, he) = (img.cols() as f64, img.rows() as f64);
    let mut coords = Tensor::zeros(cam.height, cam.width, 2);
    for j in 0..cam.height {
        for i in 0..cam.width {
            let (theta, h) = cam.pix_to_cyl(i as f64, j as f64);
            let phi = h.atan();
            let x = (theta + PI) * we / (2.0 * PI) - 0.5;
            let y = (phi + 0.5 * PI) * he / PI - 0.5;
            let snap = |v: f64| if (v - v.round()).abs() < 1e-9 { v.round() } else { v };
            coords.set(j, i, 0, snap(x));
            coords.set(j, i, 1, snap(y));
        }
    }
    Ok(bilinear_sample(img, &coords, EdgeMode::Wrap)?.values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn filter_examples() {
        let same = vec![Point3::new(1.0, 2.0, 3.0); 4];
        assert_eq!(filter_static(&same, 0.1), vec![0]);
        assert_eq!(filter_static(&same, 0.0), vec![0, 1, 2, 3]);
        let pos = vec![
            Point3::zeros(),
            Point3::new(0.5, 0.0, 0.0),
            Point3::new(0.51, 0.0, 0.0),
            Point3::new(1.21, 0.0, 0.0),
        ];
        assert_eq!(filter_static(&pos, 0.1), vec![0, 1, 3]);
    }

    #[test]
    fn crop_examples() {
        let cam = CylCamera::new(512, 8).unwrap();
        let pano = Tensor::from_fn(8, 512, 1, |_, c, _| c as f64);
        let (same, c2) = crop_fov(&pano, &cam, 360.0, 1.0).unwrap();
        assert_eq!((same, c2), (pano.clone(), cam));
        let (band, c) = crop_fov(&pano, &cam, 180.0, 0.0).unwrap();
        assert_eq!(band.cols(), 256);
        assert_eq!(band.get(0, 0, 0), 128.0);
        assert_eq!(band.get(0, 255, 0), 383.0);
        assert!(!c.wraps);
        assert!(c.theta_center().abs() < 1e-12);
        let (band, _) = crop_fov(&pano, &cam, 90.0, -PI).unwrap();
        assert_eq!(band.get(0, 0, 0), 448.0);
        assert_eq!(band.get(0, 63, 0), 511.0);
        assert_eq!(band.get(0, 64, 0), 0.0);
        assert_eq!(band.get(0, 127, 0), 63.0);
        assert!(matches!(crop_fov(&pano, &cam, 0.0, 0.0), Err(Error::BadFov(_))));
        assert!(matches!(crop_fov(&pano, &cam, 400.0, 0.0), Err(Error::BadFov(_))));
    }

    #[test]
    fn cropped_camera_keeps_pixel_directions() {
        let cam = CylCamera::new(64, 8).unwrap();
        let (_, c) = crop_fov(&Tensor::zeros(8, 64, 1), &cam, 100.0, 0.7).unwrap();
        let start = crop_start(&cam, 100.0, 0.7);
        for i in 0..c.width {
            let a = c.pixel_ray(i as f64, 3.0);
            let b = cam.pixel_ray(((start + i) % 64) as f64, 3.0);
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn resize_preserves_constants_and_means() {
        let t = Tensor::filled(8, 16, 3, 0.3);
        for (r, c) in [(4, 8), (3, 5), (16, 32), (11, 20)] {
            let out = resize(&t, r, c, true);
            assert!(out.data().iter().all(|v| (v - 0.3).abs() < 1e-12), "{r}x{c}");
        }
        let ramp = Tensor::from_fn(4, 8, 1, |r, c, _| (r * 8 + c) as f64);
        let half = resize(&ramp, 2, 4, true);
        assert!((half.mean() - ramp.mean()).abs() < 1e-12);
        assert_eq!(half.get(0, 0, 0), (0.0 + 1.0 + 8.0 + 9.0) / 4.0);
    }

    #[test]
    fn equirect_examples() {
        let cam = CylCamera::new(32, 9).unwrap();
        let flat = Tensor::filled(17, 32, 3, 0.4);
        let out = equirect_to_cyl(&flat, &cam).unwrap();
        assert!(out.data().iter().all(|v| (v - 0.4).abs() < 1e-12));
        let img = Tensor::from_fn(17, 32, 1, |r, c, _| ((r * 7 + c * 3) as f64).sin());
        let out = equirect_to_cyl(&img, &cam).unwrap();
        for c in 0..32 {
            assert!((out.get(4, c, 0) - img.get(8, c, 0)).abs() < 1e-6);
        }
    }

    #[test]
    fn equirect_gradient_matches_closed_form() {
        // g(φ) = φ is linear in the row coordinate, so bilinear sampling is exact
        let (he, we) = (181, 64);
        let img = Tensor::from_fn(he, we, 1, |r, _, _| (r as f64 + 0.5) * PI / he as f64 - 0.5 * PI);
        let cam = CylCamera::new(64, 16).unwrap();
        let out = equirect_to_cyl(&img, &cam).unwrap();
        for j in 0..16 {
            let (_, h) = cam.pix_to_cyl(0.0, j as f64);
            assert!((out.get(j, 5, 0) - h.atan()).abs() < 1e-3);
        }
    }
}

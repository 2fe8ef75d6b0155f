//! Inverse warping of a source panorama into the target view.

use nalgebra::Vector3;

use super::pose::Pose6;
use crate::camera::{CylCamera, EPS_RADIAL};
use crate::error::{Error, Result};
use crate::tensor::{bilinear_sample, bilinear_sample_backward, EdgeMode, Tensor};

/// Sample positions closer than this to a pixel centre are snapped onto it.
const SNAP: f64 = 1e-9;

/// Output of [`synthesize_view`].
#[derive(Debug, Clone, PartialEq)]
pub struct SynthResult {
    /// Source image resampled into the target view; zero where invalid.
    pub image: Tensor,
    /// Single-channel 0/1 validity mask.
    pub valid: Tensor,
    /// Source-image `(column, row)` sampled for every target pixel; NaN where
    /// the warped point had no azimuth.
    pub coords: Tensor,
}

pub(crate) fn edge_mode(cam: &CylCamera) -> EdgeMode {
    EdgeMode::from_wrap(cam.wraps)
}

fn check_shapes(source: &Tensor, depth: &Tensor, cam: &CylCamera) -> Result<()> {
    if source.rows() != cam.height || source.cols() != cam.width {
        return Err(Error::ShapeMismatch(format!(
            "source {}x{} vs camera {}x{}",
            source.rows(),
            source.cols(),
            cam.height,
            cam.width
        )));
    }
    if depth.shape() != (cam.height, cam.width, 1) {
        return Err(Error::ShapeMismatch(format!(
            "depth {:?} vs camera {}x{}x1",
            depth.shape(),
            cam.height,
            cam.width
        )));
    }
    Ok(())
}

fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < SNAP {
        r
    } else {
        v
    }
}

/// Source-image sample coordinates for every target pixel.
pub fn warp_coords(depth: &Tensor, pose: &Pose6, cam: &CylCamera) -> Result<Tensor> {
    if depth.shape() != (cam.height, cam.width, 1) {
        return Err(Error::ShapeMismatch(format!(
            "depth {:?} vs camera {}x{}",
            depth.shape(),
            cam.height,
            cam.width
        )));
    }
    let (rot, t) = pose.to_transform();
    let mut coords = Tensor::zeros(cam.height, cam.width, 2);
    for r in 0..cam.height {
        for c in 0..cam.width {
            let d = depth.get(r, c, 0);
            let xy = coords.pixel_mut(r, c);
            if !(d > 0.0) {
                xy.copy_from_slice(&[f64::NAN, f64::NAN]);
                continue;
            }
            let xs = rot * (cam.pixel_ray(c as f64, r as f64) * d) + t;
            let rho = xs.x.hypot(xs.z);
            if !(rho > EPS_RADIAL) {
                xy.copy_from_slice(&[f64::NAN, f64::NAN]);
                continue;
            }
            let px = cam.cyl_to_pix(xs.x.atan2(xs.z), xs.y / rho);
            xy[0] = snap(px.i);
            xy[1] = snap(px.j);
        }
    }
    Ok(coords)
}

/// Warps `source` into the target view using the target depth map and the
/// target-to-source pose.
pub fn synthesize_view(source: &Tensor, depth: &Tensor, pose: &Pose6, cam: &CylCamera) -> Result<SynthResult> {
    check_shapes(source, depth, cam)?;
    let coords = warp_coords(depth, pose, cam)?;
    let sampled = bilinear_sample(source, &coords, edge_mode(cam))?;
    Ok(SynthResult {
        image: sampled.values,
        valid: sampled.valid,
        coords,
    })
}

/// Gradients of a scalar with respect to the inputs of [`synthesize_view`].
#[derive(Debug, Clone, PartialEq)]
pub struct SynthGrad {
    pub depth: Tensor,
    /// Ordered `(t_x, t_y, t_z, α, β, γ)`.
    pub pose: [f64; 6],
}

/// Backward of [`synthesize_view`] given the upstream gradient on the
/// synthesized image.
pub fn synthesize_view_backward(
    source: &Tensor,
    depth: &Tensor,
    pose: &Pose6,
    cam: &CylCamera,
    result: &SynthResult,
    grad_image: &Tensor,
) -> Result<SynthGrad> {
    check_shapes(source, depth, cam)?;
    let (_, gcoords) = bilinear_sample_backward(source, &result.coords, edge_mode(cam), grad_image)?;
    let (rot, t) = pose.to_transform();
    let drot = pose.rotation_derivatives();
    let di_dtheta = cam.width as f64 / cam.fov;
    let dj_dh = cam.height as f64 / (2.0 * cam.h_max);
    let mut gdepth = Tensor::zeros(cam.height, cam.width, 1);
    let mut gpose = [0.0; 6];
    for r in 0..cam.height {
        for c in 0..cam.width {
            if result.valid.get(r, c, 0) == 0.0 {
                continue;
            }
            let g = gcoords.pixel(r, c);
            let (gi, gj) = (g[0], g[1]);
            if gi == 0.0 && gj == 0.0 {
                continue;
            }
            let d = depth.get(r, c, 0);
            let ray = cam.pixel_ray(c as f64, r as f64);
            let xt = ray * d;
            let xs = rot * xt + t;
            let rho2 = xs.x * xs.x + xs.z * xs.z;
            let rho = rho2.sqrt();
            let rho3 = rho2 * rho;
            let gt = gi * di_dtheta;
            let gh = gj * dj_dh;
            let gxs = Vector3::new(
                gt * xs.z / rho2 - gh * xs.y * xs.x / rho3,
                gh / rho,
                -gt * xs.x / rho2 - gh * xs.y * xs.z / rho3,
            );
            gpose[0] += gxs.x;
            gpose[1] += gxs.y;
            gpose[2] += gxs.z;
            for k in 0..3 {
                gpose[3 + k] += gxs.dot(&(drot[k] * xt));
            }
            gdepth.set(r, c, 0, (rot.transpose() * gxs).dot(&ray));
        }
    }
    Ok(SynthGrad {
        depth: gdepth,
        pose: gpose,
    })
}

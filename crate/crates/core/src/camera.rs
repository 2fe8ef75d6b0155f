//! Cylindrical and pinhole camera models.
//!
//! Sensor frame: `x` right, `y` down, `z` forward. A cylindrical image covers
//! azimuth `θ` across its columns and cylinder height `h` across its rows, with
//! `+h` pointing down so image rows grow with `h`. Pixel centres sit at integer
//! coordinates: column `i` covers the continuous interval `[i - 0.5, i + 0.5)`.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// A point in the sensor frame, in scene units.
pub type Point3 = nalgebra::Vector3<f64>;

/// Points closer than this to the cylinder axis have no defined azimuth.
pub const EPS_RADIAL: f64 = 1e-9;

/// Wraps an angle into `[-π, π)`.
pub fn wrap_angle(theta: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let w = theta - two_pi * ((theta + PI) / two_pi).floor();
    if w >= PI {
        w - two_pi
    } else {
        w
    }
}

/// Position on the unit cylinder plus radial depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CylCoord {
    /// Azimuth in `[-π, π)`, zero along `+z`, `+π/2` along `+x`.
    pub theta: f64,
    /// Height on the unit cylinder; `tan` of the elevation, positive downwards.
    pub h: f64,
    /// Radial distance to the cylinder axis, `sqrt(x² + z²)`.
    pub d: f64,
}

/// Projects a sensor-frame point onto the unit cylinder.
pub fn cyl_project(p: &Point3) -> Result<CylCoord> {
    let d = p.x.hypot(p.z);
    if !(d > EPS_RADIAL) {
        return Err(Error::DegenerateRay);
    }
    Ok(CylCoord {
        theta: wrap_angle(p.x.atan2(p.z)),
        h: p.y / d,
        d,
    })
}

/// Inverse of [`cyl_project`]: `(d sin θ, d h, d cos θ)`.
pub fn cyl_unproject(q: &CylCoord) -> Point3 {
    let (s, c) = q.theta.sin_cos();
    Point3::new(q.d * s, q.d * q.h, q.d * c)
}

/// Unit-radius ray through cylinder coordinate `(θ, h)`.
pub fn cyl_ray(theta: f64, h: f64) -> Point3 {
    let (s, c) = theta.sin_cos();
    Point3::new(s, h, c)
}

/// Continuous pixel position produced by [`CylCamera::cyl_to_pix`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelCoord {
    /// Column, wrapped into `[-0.5, W - 0.5)` for wrapping cameras.
    pub i: f64,
    /// Row, not clamped.
    pub j: f64,
    /// Whether the position lies inside the image (rows always, columns only
    /// for non-wrapping cameras).
    pub in_bounds: bool,
}

/// Cylindrical image geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CylCamera {
    pub width: usize,
    pub height: usize,
    /// Half-height of the imaged band on the unit cylinder.
    pub h_max: f64,
    /// Azimuth of the left edge of column 0.
    pub theta_min: f64,
    /// Azimuth span covered by the columns, `2π` for full panoramas.
    pub fov: f64,
    /// Whether the last column is adjacent to the first.
    pub wraps: bool,
}

impl CylCamera {
    /// Full 360° panorama with square pixels on the unit cylinder.
    pub fn new(width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!(
                "camera size {width}x{height} must be positive"
            )));
        }
        Ok(Self {
            width,
            height,
            h_max: PI * height as f64 / width as f64,
            theta_min: -PI,
            fov: 2.0 * PI,
            wraps: true,
        })
    }

    pub fn with_h_max(mut self, h_max: f64) -> Result<Self> {
        if !(h_max > 0.0 && h_max.is_finite()) {
            return Err(Error::InvalidArgument(format!("h_max {h_max} must be positive")));
        }
        self.h_max = h_max;
        Ok(self)
    }

    /// Same geometry with wrapping disabled (the no-wrap ablation).
    pub fn without_wrap(mut self) -> Self {
        self.wraps = false;
        self
    }

    /// Camera for the image downscaled by `2^level` in both directions.
    pub fn downscaled(&self, level: usize) -> Result<Self> {
        let f = 1usize << level;
        if self.width % f != 0 || self.height % f != 0 {
            return Err(Error::ShapeMismatch(format!(
                "camera {}x{} not divisible by {f}",
                self.width, self.height
            )));
        }
        Ok(Self {
            width: self.width / f,
            height: self.height / f,
            ..*self
        })
    }

    /// Radians per column.
    pub fn col_pitch(&self) -> f64 {
        self.fov / self.width as f64
    }

    /// Cylinder height per row.
    pub fn row_pitch(&self) -> f64 {
        2.0 * self.h_max / self.height as f64
    }

    /// Azimuth of the centre of the column band.
    pub fn theta_center(&self) -> f64 {
        wrap_angle(self.theta_min + 0.5 * self.fov)
    }

    pub fn pix_to_cyl(&self, i: f64, j: f64) -> (f64, f64) {
        let theta = wrap_angle(self.theta_min + self.fov * (i + 0.5) / self.width as f64);
        let h = self.h_max * (2.0 * (j + 0.5) / self.height as f64 - 1.0);
        (theta, h)
    }

    pub fn cyl_to_pix(&self, theta: f64, h: f64) -> PixelCoord {
        let rel = wrap_angle(theta - self.theta_min - 0.5 * self.fov) + 0.5 * self.fov;
        let mut i = rel * self.width as f64 / self.fov - 0.5;
        let j = (h + self.h_max) * self.height as f64 / (2.0 * self.h_max) - 0.5;
        let w = self.width as f64;
        if self.wraps {
            // rounding can leave i a hair outside the half-open range
            if i >= w - 0.5 {
                i -= w;
            } else if i < -0.5 {
                i += w;
            }
        }
        let rows_ok = j >= -0.5 && j <= self.height as f64 - 0.5;
        let cols_ok = self.wraps || (i >= -0.5 && i <= w - 0.5);
        PixelCoord {
            i,
            j,
            in_bounds: rows_ok && cols_ok,
        }
    }

    /// Unit-radius ray through the centre of pixel `(i, j)`.
    pub fn pixel_ray(&self, i: f64, j: f64) -> Point3 {
        let (theta, h) = self.pix_to_cyl(i, j);
        cyl_ray(theta, h)
    }
}

/// Pinhole camera with square pixels; pixel centres at integer coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PinholeCamera {
    pub focal: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl PinholeCamera {
    pub fn new(focal: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        if !(focal > 0.0) || width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!(
                "pinhole camera needs positive focal length and size (f={focal}, {width}x{height})"
            )));
        }
        Ok(Self {
            focal,
            cx,
            cy,
            width,
            height,
        })
    }

    /// Camera whose horizontal field of view spans `fov_deg` across the image
    /// width, with the principal point at the image centre.
    pub fn from_fov(width: usize, height: usize, fov_deg: f64) -> Result<Self> {
        if !(fov_deg > 0.0 && fov_deg < 180.0) {
            return Err(Error::BadFov(fov_deg));
        }
        let focal = 0.5 * width as f64 / (0.5 * fov_deg.to_radians()).tan();
        Self::new(
            focal,
            0.5 * (width as f64 - 1.0),
            0.5 * (height as f64 - 1.0),
            width,
            height,
        )
    }

    /// Returns `(u, v, in_front)`; `u`, `v` are meaningless when `in_front` is false.
    pub fn project(&self, p: &Point3) -> (f64, f64, bool) {
        if !(p.z > 0.0) {
            return (f64::NAN, f64::NAN, false);
        }
        (self.focal * p.x / p.z + self.cx, self.focal * p.y / p.z + self.cy, true)
    }

    pub fn unproject(&self, u: f64, v: f64, z: f64) -> Point3 {
        Point3::new((u - self.cx) * z / self.focal, (v - self.cy) * z / self.focal, z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn project_axes() {
        let q = cyl_project(&Point3::new(0.0, 0.0, 1.0)).unwrap();
        assert_eq!((q.theta, q.h, q.d), (0.0, 0.0, 1.0));
        let q = cyl_project(&Point3::new(1.0, 0.0, 0.0)).unwrap();
        assert!(close(q.theta, PI / 2.0, 1e-15) && q.h == 0.0 && q.d == 1.0);
        let q = cyl_project(&Point3::new(3.0, 4.0, 4.0)).unwrap();
        assert!(close(q.theta, 0.643_501_108_793_284_4, 1e-12));
        assert!(close(q.h, 0.8, 1e-15) && close(q.d, 5.0, 1e-15));
    }

    #[test]
    fn rear_hemisphere_and_axis() {
        let q = cyl_project(&Point3::new(0.0, 0.0, -2.0)).unwrap();
        assert_eq!(q.theta, -PI);
        assert!(matches!(
            cyl_project(&Point3::new(0.0, 3.0, 0.0)),
            Err(Error::DegenerateRay)
        ));
        assert!(matches!(
            cyl_project(&Point3::new(1e-10, 1.0, 0.0)),
            Err(Error::DegenerateRay)
        ));
    }

    #[test]
    fn unproject_examples() {
        let p = cyl_unproject(&CylCoord {
            theta: 0.0,
            h: 0.0,
            d: 1.0,
        });
        assert_eq!(p, Point3::new(0.0, 0.0, 1.0));
        let p = cyl_unproject(&CylCoord {
            theta: PI / 2.0,
            h: 0.0,
            d: 2.0,
        });
        assert!((p - Point3::new(2.0, 0.0, 0.0)).norm() < 1e-15);
        let p = cyl_unproject(&CylCoord {
            theta: 0.643_501_108_793_284_4,
            h: 0.8,
            d: 5.0,
        });
        assert!((p - Point3::new(3.0, 4.0, 4.0)).norm() < 1e-12);
    }

    #[test]
    fn h_is_tangent_of_elevation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let p = Point3::new(
                rng.gen_range(-5.0..5.0),
                rng.gen_range(-5.0..5.0),
                rng.gen_range(-5.0..5.0),
            );
            let q = cyl_project(&p).unwrap();
            let elevation = p.y.atan2(p.x.hypot(p.z));
            assert!(close(q.h, elevation.tan(), 1e-12 * (1.0 + q.h.abs())));
        }
    }

    #[test]
    fn pixel_grid_examples() {
        let cam = CylCamera::new(512, 128).unwrap().with_h_max(PI / 4.0).unwrap();
        let (t, h) = cam.pix_to_cyl(255.5, 63.5);
        assert!(close(t, 0.0, 1e-15) && close(h, 0.0, 1e-15));
        let (t, h) = cam.pix_to_cyl(0.0, 63.5);
        assert!(close(t, PI / 512.0 - PI, 1e-14) && close(h, 0.0, 1e-15));
        let px = cam.cyl_to_pix(-PI, -PI / 4.0);
        assert!(close(px.i, -0.5, 1e-12));
        assert!(close(px.j, -0.5, 1e-12));
        assert!(px.in_bounds);
        let below = cam.cyl_to_pix(0.0, -PI / 4.0 - 0.01);
        assert!(!below.in_bounds);
        // θ = π wraps onto the same column boundary
        let px = cam.cyl_to_pix(PI, 0.0);
        assert!(close(px.i, -0.5, 1e-12));
    }

    #[test]
    fn default_h_max_gives_square_pixels() {
        let cam = CylCamera::new(512, 128).unwrap();
        assert!(close(cam.col_pitch(), cam.row_pitch(), 1e-15));
        assert!(close(cam.h_max, PI / 4.0, 1e-15));
    }

    #[test]
    fn non_wrapping_bounds() {
        let cam = CylCamera {
            width: 100,
            height: 10,
            h_max: 0.5,
            theta_min: -1.0,
            fov: 2.0,
            wraps: false,
        };
        let left = cam.cyl_to_pix(-1.0, 0.0);
        assert!(close(left.i, -0.5, 1e-12) && left.in_bounds);
        assert!(!cam.cyl_to_pix(-1.1, 0.0).in_bounds);
        assert!(!cam.cyl_to_pix(2.5, 0.0).in_bounds);
        let (t, _) = cam.pix_to_cyl(49.5, 4.5);
        assert!(close(t, 0.0, 1e-14));
    }

    #[test]
    fn pinhole_examples() {
        let cam = PinholeCamera::new(100.0, 64.0, 64.0, 128, 128).unwrap();
        assert_eq!(cam.project(&Point3::new(0.0, 0.0, 5.0)), (64.0, 64.0, true));
        let cam0 = PinholeCamera::new(100.0, 0.0, 0.0, 128, 128).unwrap();
        assert_eq!(cam0.project(&Point3::new(1.0, 0.0, 2.0)), (50.0, 0.0, true));
        assert!(!cam.project(&Point3::new(0.0, 0.0, -1.0)).2);
        let p = Point3::new(0.3, -0.7, 2.5);
        let (u, v, _) = cam.project(&p);
        assert!((cam.unproject(u, v, p.z) - p).norm() < 1e-13);
    }

    #[test]
    fn pinhole_from_fov() {
        let cam = PinholeCamera::from_fov(768, 768, 90.0).unwrap();
        assert!(close(cam.focal, 384.0, 1e-9));
        assert!(matches!(PinholeCamera::from_fov(10, 10, 180.0), Err(Error::BadFov(_))));
    }
}

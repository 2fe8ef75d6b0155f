//! Cube-map rigs stitched into cylindrical panoramas.

use std::f64::consts::FRAC_PI_2;

use nalgebra::Matrix3;

use crate::camera::{CylCamera, PinholeCamera, Point3};
use crate::error::{Error, Result};
use crate::synth::Pose6;
use crate::tensor::{bilinear_sample, EdgeMode, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CubeFace {
    Front,
    Back,
    Left,
    Right,
    Up,
    Down,
}

impl CubeFace {
    pub const ALL: [CubeFace; 6] = [
        CubeFace::Front,
        CubeFace::Back,
        CubeFace::Left,
        CubeFace::Right,
        CubeFace::Up,
        CubeFace::Down,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            CubeFace::Front => "front",
            CubeFace::Back => "back",
            CubeFace::Left => "left",
            CubeFace::Right => "right",
            CubeFace::Up => "up",
            CubeFace::Down => "down",
        }
    }

    /// Face-to-rig pose (`x` right, `y` down, `z` forward).
    pub fn pose(&self) -> Pose6 {
        let r = match self {
            CubeFace::Front => [0.0, 0.0, 0.0],
            CubeFace::Right => [0.0, FRAC_PI_2, 0.0],
            CubeFace::Back => [0.0, std::f64::consts::PI, 0.0],
            CubeFace::Left => [0.0, -FRAC_PI_2, 0.0],
            CubeFace::Up => [FRAC_PI_2, 0.0, 0.0],
            CubeFace::Down => [-FRAC_PI_2, 0.0, 0.0],
        };
        Pose6::new([0.0; 3], r)
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        self.pose().rotation()
    }

    /// Optical axis in rig coordinates.
    pub fn axis(&self) -> Point3 {
        self.rotation() * Point3::new(0.0, 0.0, 1.0)
    }
}

/// Six pinhole views sharing one centre, indexed in [`CubeFace::ALL`] order.
#[derive(Debug, Clone)]
pub struct CubeFaceSet {
    pub faces: Vec<Tensor>,
    /// Planar (along-axis) depth per face.
    pub depths: Option<Vec<Tensor>>,
    pub camera: PinholeCamera,
    /// Azimuth of the output panorama's origin relative to the front face.
    pub yaw: f64,
}

impl CubeFaceSet {
    pub fn new(faces: Vec<Tensor>, depths: Option<Vec<Tensor>>, fov_deg: f64) -> Result<Self> {
        if faces.len() != 6 || depths.as_ref().is_some_and(|d| d.len() != 6) {
            return Err(Error::LengthMismatch("a cube map needs six faces".into()));
        }
        if !(fov_deg > 90.0) {
            return Err(Error::BadFov(fov_deg));
        }
        let size = faces[0].cols();
        for (k, f) in faces.iter().enumerate() {
            if f.rows() != size || f.cols() != size {
                return Err(Error::ShapeMismatch(format!(
                    "face {} is {}x{}, expected square {size}x{size}",
                    CubeFace::ALL[k].name(),
                    f.rows(),
                    f.cols()
                )));
            }
        }
        if let Some(ds) = &depths {
            if ds.iter().any(|d| d.shape() != (size, size, 1)) {
                return Err(Error::ShapeMismatch("depth faces must match colour faces".into()));
            }
        }
        Ok(Self {
            faces,
            depths,
            camera: PinholeCamera::from_fov(size, size, fov_deg)?,
            yaw: 0.0,
        })
    }
}

fn select_face(ray: &Point3) -> usize {
    let mut best = 0;
    let mut best_dot = f64::NEG_INFINITY;
    for (k, f) in CubeFace::ALL.iter().enumerate() {
        let d = f.axis().dot(ray);
        if d > best_dot {
            best_dot = d;
            best = k;
        }
    }
    best
}

/// Output of [`stitch_cubemap`].
#[derive(Debug, Clone)]
pub struct Stitched {
    pub image: Tensor,
    /// Radial depth, present when the face set carries depth.
    pub depth: Option<Tensor>,
}

/// Resamples the faces onto `cam`, choosing for every ray the face whose axis
/// is most aligned with it.
pub fn stitch_cubemap(set: &CubeFaceSet, cam: &CylCamera) -> Result<Stitched> {
    let chans = set.faces[0].chans();
    let mut image = Tensor::zeros(cam.height, cam.width, chans);
    let mut depth = set.depths.as_ref().map(|_| Tensor::zeros(cam.height, cam.width, 1));
    let rots: Vec<Matrix3<f64>> = CubeFace::ALL.iter().map(|f| f.rotation().transpose()).collect();
    let yaw = Pose6::yaw(set.yaw).rotation();
    let pin = &set.camera;
    let (lo, hi) = (-0.5, pin.width as f64 - 0.5);
    for j in 0..cam.height {
        for i in 0..cam.width {
            let ray = yaw * cam.pixel_ray(i as f64, j as f64);
            let k = select_face(&ray);
            let local = rots[k] * ray;
            let (u, v, front) = pin.project(&local);
            if !front || !(lo..=hi).contains(&u) || !(lo..=hi).contains(&v) {
                return Err(Error::CoverageGap([ray.x, ray.y, ray.z]));
            }
            let coords = Tensor::from_vec(1, 1, 2, vec![u, v])?;
            let s = bilinear_sample(&set.faces[k], &coords, EdgeMode::Bounded)?;
            image.pixel_mut(j, i).copy_from_slice(s.values.pixel(0, 0));
            if let (Some(out), Some(ds)) = (depth.as_mut(), set.depths.as_ref()) {
                let z = bilinear_sample(&ds[k], &coords, EdgeMode::Bounded)?.values.get(0, 0, 0);
                // the unit-cylinder ray has horizontal norm 1
                out.set(j, i, 0, z / local.z);
            }
        }
    }
    Ok(Stitched { image, depth })
}

//! Analytic test scenes rendered by ray casting: a textured cylinder around
//! the origin, and a "room" adding a floor, a ceiling and a pillar straddling
//! the panorama seam.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::camera::{CylCamera, PinholeCamera, Point3};
use crate::error::{Error, Result};
use crate::synth::Pose6;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SceneKind {
    Cylinder,
    Room,
}

impl SceneKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "cylinder" => Some(SceneKind::Cylinder),
            "room" => Some(SceneKind::Room),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SceneKind::Cylinder => "cylinder",
            SceneKind::Room => "room",
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Wave {
    fu: f64,
    fv: f64,
    phase: [f64; 3],
}

/// Band-limited colour pattern: a sum of sinusoids with per-channel phases.
#[derive(Debug, Clone)]
pub struct Texture {
    waves: Vec<Wave>,
    amp: f64,
}

impl Texture {
    /// `fu` frequencies are integers so textures parameterised by an angle are
    /// periodic.
    fn random(rng: &mut ChaCha8Rng, n: usize, fu_max: u32, fv_max: f64) -> Self {
        let waves = (0..n)
            .map(|_| {
                let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                Wave {
                    fu: sign * f64::from(rng.gen_range(2..=fu_max)),
                    fv: rng.gen_range(-fv_max..fv_max),
                    phase: [
                        rng.gen_range(0.0..2.0 * PI),
                        rng.gen_range(0.0..2.0 * PI),
                        rng.gen_range(0.0..2.0 * PI),
                    ],
                }
            })
            .collect();
        Texture {
            waves,
            amp: 0.42 / n as f64,
        }
    }

    pub fn color(&self, u: f64, v: f64) -> [f64; 3] {
        let mut out = [0.5; 3];
        for w in &self.waves {
            let a = w.fu * u + w.fv * v;
            for (k, o) in out.iter_mut().enumerate() {
                *o += self.amp * (a + w.phase[k]).sin();
            }
        }
        out
    }
}

/// Result of a ray cast.
#[derive(Debug, Clone, Copy)]
pub struct Hit {
    /// Ray parameter (distance along the possibly non-unit direction).
    pub t: f64,
    pub point: Point3,
    pub color: [f64; 3],
}

/// Analytic scene.
#[derive(Debug, Clone)]
pub struct Scene {
    pub kind: SceneKind,
    /// Radius of the enclosing textured cylinder.
    pub radius: f64,
    /// Floor and ceiling heights (`y` points down), room only.
    pub floor: f64,
    pub ceiling: f64,
    /// Pillar centre `(x, z)` and radius, room only.
    pub pillar: ([f64; 2], f64),
    wall: Texture,
    plane: Texture,
    column: Texture,
}

/// Smallest positive `t` where `o + t·v` meets the vertical cylinder of
/// radius `r` around `(cx, cz)`.
fn hit_vertical_cylinder(o: &Point3, v: &Point3, cx: f64, cz: f64, r: f64) -> Option<f64> {
    let (ox, oz) = (o.x - cx, o.z - cz);
    let a = v.x * v.x + v.z * v.z;
    if a <= 0.0 {
        return None;
    }
    let b = ox * v.x + oz * v.z;
    let c = ox * ox + oz * oz - r * r;
    let disc = b * b - a * c;
    if disc < 0.0 {
        return None;
    }
    let s = disc.sqrt();
    [(-b - s) / a, (-b + s) / a].into_iter().find(|&t| t > 1e-9)
}

impl Scene {
    /// Textured cylinder of radius `radius` centred on the `y` axis.
    pub fn cylinder(radius: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let wall = Texture::random(&mut rng, 6, 8, 2.0);
        Scene {
            kind: SceneKind::Cylinder,
            radius,
            floor: f64::INFINITY,
            ceiling: f64::NEG_INFINITY,
            pillar: ([0.0, 0.0], 0.0),
            wall: wall.clone(),
            plane: wall.clone(),
            column: wall,
        }
    }

    /// Cylindrical room of radius `radius` with a floor, a ceiling and a pillar
    /// directly behind the origin (azimuth ±π, across the panorama seam).
    pub fn room(radius: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let wall = Texture::random(&mut rng, 6, 8, 2.0);
        let plane = Texture::random(&mut rng, 6, 4, 4.0);
        let column = Texture::random(&mut rng, 6, 5, 4.0);
        Scene {
            kind: SceneKind::Room,
            radius,
            floor: 0.3 * radius,
            ceiling: -0.45 * radius,
            pillar: ([0.0, -0.5 * radius], 0.12 * radius),
            wall,
            plane,
            column,
        }
    }

    pub fn new(kind: SceneKind, radius: f64, seed: u64) -> Self {
        match kind {
            SceneKind::Cylinder => Self::cylinder(radius, seed),
            SceneKind::Room => Self::room(radius, seed),
        }
    }

    /// Nearest intersection of the ray `origin + t·dir`, `t > 0`.
    pub fn trace(&self, origin: &Point3, dir: &Point3) -> Option<Hit> {
        let mut best: Option<(f64, u8)> = None;
        let mut consider = |t: Option<f64>, id: u8| {
            if let Some(t) = t {
                if t > 1e-9 && best.map_or(true, |(b, _)| t < b) {
                    best = Some((t, id));
                }
            }
        };
        consider(hit_vertical_cylinder(origin, dir, 0.0, 0.0, self.radius), 0);
        if self.kind == SceneKind::Room {
            if dir.y > 0.0 {
                consider(Some((self.floor - origin.y) / dir.y), 1);
            } else if dir.y < 0.0 {
                consider(Some((self.ceiling - origin.y) / dir.y), 1);
            }
            let ([px, pz], pr) = self.pillar;
            consider(hit_vertical_cylinder(origin, dir, px, pz, pr), 2);
        }
        let (t, id) = best?;
        let p = origin + dir * t;
        let color = match id {
            0 => self.wall.color(p.x.atan2(p.z), p.y / self.radius * 2.0),
            1 => self
                .plane
                .color(p.x / self.radius * 2.0, p.z / self.radius * 2.0 + p.y.signum()),
            _ => {
                let ([px, pz], _) = self.pillar;
                self.column.color((p.x - px).atan2(p.z - pz), p.y / self.radius * 2.0)
            }
        };
        Some(Hit { t, point: p, color })
    }
}

/// Renders colour and radial depth for a camera with the given
/// camera-to-world pose, averaging `ss × ss` rays per pixel for colour.
pub fn render_cylindrical(scene: &Scene, pose: &Pose6, cam: &CylCamera, ss: usize) -> Result<(Tensor, Tensor)> {
    let (rot, t) = pose.to_transform();
    let origin = t;
    let ss = ss.max(1);
    let mut img = Tensor::zeros(cam.height, cam.width, 3);
    let mut depth = Tensor::zeros(cam.height, cam.width, 1);
    for j in 0..cam.height {
        for i in 0..cam.width {
            let mut acc = [0.0; 3];
            for sy in 0..ss {
                for sx in 0..ss {
                    let di = (sx as f64 + 0.5) / ss as f64 - 0.5;
                    let dj = (sy as f64 + 0.5) / ss as f64 - 0.5;
                    let ray = rot * cam.pixel_ray(i as f64 + di, j as f64 + dj);
                    let hit = scene
                        .trace(&origin, &ray)
                        .ok_or(Error::CoverageGap([ray.x, ray.y, ray.z]))?;
                    for k in 0..3 {
                        acc[k] += hit.color[k];
                    }
                }
            }
            let n = (ss * ss) as f64;
            for k in 0..3 {
                img.set(j, i, k, acc[k] / n);
            }
            let ray = rot * cam.pixel_ray(i as f64, j as f64);
            let hit = scene
                .trace(&origin, &ray)
                .ok_or(Error::CoverageGap([ray.x, ray.y, ray.z]))?;
            let local = rot.transpose() * (hit.point - origin);
            depth.set(j, i, 0, local.x.hypot(local.z));
        }
    }
    Ok((img, depth))
}

/// Renders colour and planar (`z`) depth through a pinhole camera.
pub fn render_pinhole(scene: &Scene, pose: &Pose6, cam: &PinholeCamera) -> Result<(Tensor, Tensor)> {
    let (rot, origin) = pose.to_transform();
    let mut img = Tensor::zeros(cam.height, cam.width, 3);
    let mut depth = Tensor::zeros(cam.height, cam.width, 1);
    for v in 0..cam.height {
        for u in 0..cam.width {
            let local = cam.unproject(u as f64, v as f64, 1.0);
            let ray = rot * local;
            let hit = scene
                .trace(&origin, &ray)
                .ok_or(Error::CoverageGap([ray.x, ray.y, ray.z]))?;
            img.pixel_mut(v, u).copy_from_slice(&hit.color);
            depth.set(v, u, 0, hit.t);
        }
    }
    Ok((img, depth))
}

/// Camera-to-world poses of a smooth trajectory: frame `k` sits at
/// `start + k·step` plus seeded jitter of magnitude `jitter`, with yaw
/// `k·yaw_step`.
pub fn trajectory(n: usize, start: Point3, step: Point3, yaw_step: f64, jitter: f64, seed: u64) -> Vec<Pose6> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|k| {
            let mut p = start + step * k as f64;
            if jitter > 0.0 {
                p.x += rng.gen_range(-jitter..jitter);
                p.z += rng.gen_range(-jitter..jitter);
            }
            Pose6::new([p.x, p.y, p.z], [0.0, yaw_step * k as f64, 0.0])
        })
        .collect()
}

/// A rendered sequence with ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticSequence {
    pub camera: CylCamera,
    pub images: Vec<Tensor>,
    pub depths: Vec<Tensor>,
    /// Camera-to-world.
    pub poses: Vec<Pose6>,
}

pub fn render_sequence(scene: &Scene, poses: &[Pose6], cam: &CylCamera, ss: usize) -> Result<SyntheticSequence> {
    use rayon::prelude::*;
    let frames: Vec<(Tensor, Tensor)> = poses
        .par_iter()
        .map(|p| render_cylindrical(scene, p, cam, ss))
        .collect::<Result<_>>()?;
    let (images, depths) = frames.into_iter().unzip();
    Ok(SyntheticSequence {
        camera: *cam,
        images,
        depths,
        poses: poses.to_vec(),
    })
}

/// Frames per toy walk; each walk yields `TOY_FRAMES - 2` snippets.
pub const TOY_FRAMES: usize = 4;

/// Seam-crossing toy set: `walks` short walks, each through its own room and
/// starting at a random yaw, so the seam cuts through different geometry in
/// every walk. Every walk moves toward the camera's `+x` (within ±0.3 rad),
/// which puts the seam at maximum parallax, and advances 0.3 units per frame
/// with a small constant yaw rate. Frames use 2×2 supersampling.
pub fn seam_toy_sequences(walks: usize, cam: &CylCamera, seed: u64) -> Result<Vec<SyntheticSequence>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..walks)
        .map(|w| {
            let scene = Scene::room(5.0, seed.wrapping_mul(1000).wrapping_add(w as u64));
            // random base yaw so the seam sees different parts of the room
            let base: f64 = rng.gen_range(-PI..PI);
            let heading: f64 = 0.5 * PI + rng.gen_range(-0.3..0.3);
            let yaw: f64 = rng.gen_range(-0.02..0.02);
            let step = Pose6::yaw(base).rotation() * Point3::new(0.3 * heading.sin(), 0.0, 0.3 * heading.cos());
            let start = Point3::new(0.0, 0.0, 0.3) - step * 1.5;
            let poses: Vec<Pose6> = trajectory(TOY_FRAMES, start, step, yaw, 0.0, 0)
                .into_iter()
                .map(|p| {
                    let mut a = p.to_array();
                    a[4] += base;
                    Pose6::from_slice(&a)
                })
                .collect();
            render_sequence(&scene, &poses, cam, 2)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centred_cylinder_has_constant_depth() {
        let scene = Scene::cylinder(5.0, 1);
        let cam = CylCamera::new(64, 16).unwrap();
        let (img, depth) = render_cylindrical(&scene, &Pose6::identity(), &cam, 1).unwrap();
        assert!(depth.data().iter().all(|d| (d - 5.0).abs() < 1e-12));
        assert!(img.data().iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(img.max_abs() > 0.6);
    }

    #[test]
    fn wall_texture_is_seam_continuous() {
        let scene = Scene::cylinder(5.0, 2);
        let a = scene.trace(&Point3::zeros(), &Point3::new(-1e-9, 0.0, -1.0)).unwrap();
        let b = scene.trace(&Point3::zeros(), &Point3::new(1e-9, 0.0, -1.0)).unwrap();
        for k in 0..3 {
            assert!((a.color[k] - b.color[k]).abs() < 1e-6);
        }
    }

    #[test]
    fn room_pillar_sits_on_the_seam() {
        let scene = Scene::room(6.0, 3);
        let hit = scene.trace(&Point3::zeros(), &Point3::new(0.0, 0.0, -1.0)).unwrap();
        let ([_, pz], pr) = scene.pillar;
        assert!((hit.t - (-pz - pr)).abs() < 1e-12);
        let floor = scene.trace(&Point3::zeros(), &Point3::new(0.0, 1.0, 0.3)).unwrap();
        assert!((floor.point.y - scene.floor).abs() < 1e-12);
    }

    #[test]
    fn translated_camera_depth_matches_geometry() {
        let scene = Scene::cylinder(5.0, 4);
        let cam = CylCamera::new(32, 8).unwrap();
        let pose = Pose6::new([0.3, 0.0, -0.2], [0.0, 0.4, 0.0]);
        let (_, depth) = render_cylindrical(&scene, &pose, &cam, 1).unwrap();
        for j in 0..8 {
            for i in 0..32 {
                let p = pose.rotation() * (cam.pixel_ray(i as f64, j as f64) * depth.get(j, i, 0))
                    + pose.translation_vector();
                assert!((p.x.hypot(p.z) - 5.0).abs() < 1e-9);
            }
        }
    }
}

//! Panorama-plus-depth meshes, a software rasteriser for pinhole and
//! cylindrical virtual cameras, omnidirectional stereo and anaglyphs.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::camera::{cyl_project, cyl_unproject, CylCamera, CylCoord, PinholeCamera, Point3};
use crate::datasets::io::write_atomic;
use crate::error::{Error, Result};
use crate::synth::Pose6;
use crate::tensor::Tensor;

/// Triangle mesh with one vertex per panorama pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub positions: Vec<Point3>,
    /// Per-vertex colour, `chans` values each.
    pub colors: Vec<f64>,
    pub chans: usize,
    pub triangles: Vec<[u32; 3]>,
}

impl Mesh {
    pub fn color(&self, v: usize) -> &[f64] {
        &self.colors[v * self.chans..(v + 1) * self.chans]
    }

    /// Smallest distance from a vertex to the vertical axis.
    pub fn min_radial(&self) -> f64 {
        self.positions
            .iter()
            .map(|p| p.x.hypot(p.z))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Lifts every pixel to `(d sin θ, d h, d cos θ)` and joins 4-neighbourhoods
/// with two triangles each. For wrapping cameras the last column is joined to
/// the first.
pub fn build_mesh(pano: &Tensor, depth: &Tensor, cam: &CylCamera) -> Result<Mesh> {
    let (h, w) = (pano.rows(), pano.cols());
    if depth.rows() != h || depth.cols() != w || depth.chans() != 1 {
        return Err(Error::ShapeMismatch(format!(
            "panorama {:?} and depth {:?} differ",
            pano.shape(),
            depth.shape()
        )));
    }
    if cam.width != w || cam.height != h {
        return Err(Error::ShapeMismatch(format!(
            "camera {}x{} does not match panorama {w}x{h}",
            cam.width, cam.height
        )));
    }
    if let Some(&d) = depth.data().iter().find(|d| !(**d > 0.0 && d.is_finite())) {
        return Err(Error::NonPositiveDepth(d));
    }
    let mut positions = Vec::with_capacity(w * h);
    for r in 0..h {
        for c in 0..w {
            let (theta, hh) = cam.pix_to_cyl(c as f64, r as f64);
            positions.push(cyl_unproject(&CylCoord {
                theta,
                h: hh,
                d: depth.get(r, c, 0),
            }));
        }
    }
    let quads = if cam.wraps { w } else { w.saturating_sub(1) };
    let id = |r: usize, c: usize| (r * w + c % w) as u32;
    let mut triangles = Vec::with_capacity(2 * quads * h.saturating_sub(1));
    for r in 0..h.saturating_sub(1) {
        for c in 0..quads {
            let (a, b, cc, d) = (id(r, c), id(r, c + 1), id(r + 1, c), id(r + 1, c + 1));
            triangles.push([a, b, d]);
            triangles.push([a, d, cc]);
        }
    }
    Ok(Mesh {
        positions,
        colors: pano.data().to_vec(),
        chans: pano.chans(),
        triangles,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ViewCamera {
    Pinhole(PinholeCamera),
    Cylindrical(CylCamera),
}

impl ViewCamera {
    fn size(&self) -> (usize, usize) {
        match self {
            ViewCamera::Pinhole(c) => (c.height, c.width),
            ViewCamera::Cylindrical(c) => (c.height, c.width),
        }
    }
}

/// Colour and depth buffers of a rendered view. Depth is `z` for pinhole
/// cameras and radial depth for cylindrical ones; pixels no triangle covers
/// are flagged invalid and hold zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct Rendered {
    pub image: Tensor,
    pub depth: Tensor,
    pub valid: Vec<bool>,
}

impl Rendered {
    fn empty(rows: usize, cols: usize, chans: usize) -> Self {
        Self {
            image: Tensor::zeros(rows, cols, chans),
            depth: Tensor::filled(rows, cols, 1, f64::INFINITY),
            valid: vec![false; rows * cols],
        }
    }

    fn finish(mut self) -> Self {
        for (d, &ok) in self.depth.data_mut().iter_mut().zip(&self.valid) {
            if !ok {
                *d = 0.0;
            }
        }
        self
    }

    pub fn is_valid(&self, r: usize, c: usize) -> bool {
        self.valid[r * self.image.cols() + c]
    }

    pub fn coverage(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }
}

/// Vertex after projection: continuous pixel position and inverse depth.
#[derive(Debug, Clone, Copy)]
struct ScreenVert {
    x: f64,
    y: f64,
    q: f64,
    v: usize,
}

const NEAR: f64 = 1e-9;

fn edge(a: (f64, f64), b: (f64, f64), p: (f64, f64)) -> f64 {
    (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0)
}

/// Rasterises one screen-space triangle into `out`, shifted left by `shift`
/// columns and restricted to columns `cols`.
fn raster(mesh: &Mesh, t: &[ScreenVert; 3], shift: f64, cols: (usize, usize), out: &mut Rendered) {
    let p = t.map(|s| (s.x - shift, s.y));
    let area = edge(p[0], p[1], p[2]);
    if area.abs() < 1e-14 {
        return;
    }
    let rows = out.image.rows() as f64;
    // vertices sitting on pixel centres must not lose them to round-off
    const SLACK: f64 = 1e-7;
    let xmin = (p.iter().map(|a| a.0).fold(f64::INFINITY, f64::min) - SLACK)
        .ceil()
        .max(cols.0 as f64);
    let xmax = (p.iter().map(|a| a.0).fold(f64::NEG_INFINITY, f64::max) + SLACK)
        .floor()
        .min(cols.1 as f64 - 1.0);
    let ymin = (p.iter().map(|a| a.1).fold(f64::INFINITY, f64::min) - SLACK)
        .ceil()
        .max(0.0);
    let ymax = (p.iter().map(|a| a.1).fold(f64::NEG_INFINITY, f64::max) + SLACK)
        .floor()
        .min(rows - 1.0);
    if xmin > xmax || ymin > ymax {
        return;
    }
    let tol = SLACK * area.abs();
    let width = out.image.cols();
    let chans = mesh.chans;
    for y in ymin as usize..=ymax as usize {
        for x in xmin as usize..=xmax as usize {
            let px = (x as f64, y as f64);
            let b = [edge(p[1], p[2], px), edge(p[2], p[0], px), edge(p[0], p[1], px)];
            if b.iter().any(|&e| e * area.signum() < -tol) {
                continue;
            }
            let b = b.map(|e| (e / area).max(0.0));
            let q: f64 = b.iter().zip(t).map(|(w, s)| w * s.q).sum();
            let depth = 1.0 / q;
            if !(depth < out.depth.get(y, x, 0)) {
                continue;
            }
            out.depth.set(y, x, 0, depth);
            out.valid[y * width + x] = true;
            let px_out = out.image.pixel_mut(y, x);
            px_out.fill(0.0);
            for (w, s) in b.iter().zip(t) {
                let k = w * s.q / q;
                for (o, c) in px_out.iter_mut().zip(mesh.color(s.v)).take(chans) {
                    *o += k * c;
                }
            }
        }
    }
}

/// Mesh vertices expressed in the eye frame. `eye` places the eye in the mesh
/// frame (eye-to-mesh motion), so `Pose6::translation(0, 0, 1)` steps forward.
fn to_eye(mesh: &Mesh, eye: &Pose6) -> Vec<Point3> {
    let (r, t) = eye.inverse().to_transform();
    mesh.positions.iter().map(|p| r * p + t).collect()
}

fn render_columns(mesh: &Mesh, pts: &[Point3], cam: &ViewCamera, cols: (usize, usize)) -> Rendered {
    let (rows, width) = cam.size();
    let mut out = Rendered::empty(rows, width, mesh.chans);
    match cam {
        ViewCamera::Pinhole(pc) => {
            for tri in &mesh.triangles {
                let idx = tri.map(|v| v as usize);
                if idx.iter().any(|&v| !(pts[v].z > NEAR)) {
                    continue;
                }
                let sv = idx.map(|v| {
                    let (x, y, _) = pc.project(&pts[v]);
                    ScreenVert {
                        x,
                        y,
                        q: 1.0 / pts[v].z,
                        v,
                    }
                });
                raster(mesh, &sv, 0.0, cols, &mut out);
            }
        }
        ViewCamera::Cylindrical(cc) => {
            let proj: Vec<Option<ScreenVert>> = pts
                .iter()
                .enumerate()
                .map(|(v, p)| {
                    let q = cyl_project(p).ok()?;
                    let pix = cc.cyl_to_pix(q.theta, q.h);
                    Some(ScreenVert {
                        x: pix.i,
                        y: pix.j,
                        q: 1.0 / q.d,
                        v,
                    })
                })
                .collect();
            let w = cc.width as f64;
            let half_turn = PI / cc.col_pitch();
            for tri in &mesh.triangles {
                let Some(mut sv) = tri.iter().map(|&v| proj[v as usize]).collect::<Option<Vec<_>>>() else {
                    continue;
                };
                let lo = sv.iter().map(|s| s.x).fold(f64::INFINITY, f64::min);
                let hi = sv.iter().map(|s| s.x).fold(f64::NEG_INFINITY, f64::max);
                let crosses = hi - lo > half_turn;
                if crosses {
                    if !cc.wraps {
                        continue;
                    }
                    // unwrap the low side past the right edge, then draw the
                    // piece on each side of the seam
                    for s in sv.iter_mut() {
                        if s.x < lo + half_turn {
                            s.x += w;
                        }
                    }
                }
                let sv = [sv[0], sv[1], sv[2]];
                raster(mesh, &sv, 0.0, cols, &mut out);
                if crosses {
                    raster(mesh, &sv, w, cols, &mut out);
                }
            }
        }
    }
    out
}

/// Renders the mesh as seen from `eye` without shading, with a depth buffer
/// and perspective-correct colour interpolation. Cylindrical interpolation
/// is linear in inverse radial depth.
pub fn render_view(mesh: &Mesh, eye: &Pose6, cam: &ViewCamera) -> Rendered {
    let pts = to_eye(mesh, eye);
    let width = cam.size().1;
    render_columns(mesh, &pts, cam, (0, width)).finish()
}

#[derive(Debug, Clone, PartialEq)]
pub struct StereoPair {
    pub left: Rendered,
    pub right: Rendered,
    /// Radius of the viewing circle in scene units.
    pub radius: f64,
}

/// Which eye an omnidirectional-stereo column is rendered for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Eye {
    Left,
    Right,
}

/// Eye position for the column looking along azimuth `theta`: offset by the
/// radius along the horizontal tangent `(cos θ, 0, −sin θ)`, positive for the
/// right eye.
pub fn ods_eye_offset(theta: f64, radius: f64, eye: Eye) -> Point3 {
    let s = match eye {
        Eye::Left => -radius,
        Eye::Right => radius,
    };
    Point3::new(s * theta.cos(), 0.0, -s * theta.sin())
}

/// Omnidirectional stereo pair: each output column is rendered from its own
/// eye position on the viewing circle and copied into place.
pub fn render_ods(mesh: &Mesh, radius: f64, cam: &CylCamera) -> Result<StereoPair> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "eye radius must be positive, got {radius}"
        )));
    }
    let nearest = mesh.min_radial();
    if radius >= nearest {
        return Err(Error::EyeInsideGeometry { radius, nearest });
    }
    let view = ViewCamera::Cylindrical(*cam);
    let eye_view = |eye: Eye| -> Rendered {
        let columns: Vec<Rendered> = (0..cam.width)
            .into_par_iter()
            .map(|c| {
                let (theta, _) = cam.pix_to_cyl(c as f64, 0.0);
                let e = ods_eye_offset(theta, radius, eye);
                let pts: Vec<Point3> = mesh.positions.iter().map(|p| p - e).collect();
                render_columns(mesh, &pts, &view, (c, c + 1))
            })
            .collect();
        let mut out = Rendered::empty(cam.height, cam.width, mesh.chans);
        for (c, col) in columns.iter().enumerate() {
            for r in 0..cam.height {
                out.image.pixel_mut(r, c).copy_from_slice(col.image.pixel(r, c));
                out.depth.set(r, c, 0, col.depth.get(r, c, 0));
                out.valid[r * cam.width + c] = col.is_valid(r, c);
            }
        }
        out.finish()
    };
    Ok(StereoPair {
        left: eye_view(Eye::Left),
        right: eye_view(Eye::Right),
        radius,
    })
}

fn luminance(img: &Tensor) -> Result<Tensor> {
    match img.chans() {
        1 => Ok(img.clone()),
        3 => Ok(Tensor::from_fn(img.rows(), img.cols(), 1, |r, c, _| {
            let p = img.pixel(r, c);
            0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]
        })),
        k => Err(Error::ShapeMismatch(format!("no luminance for {k}-channel images"))),
    }
}

/// Red-cyan anaglyph: red carries the left luminance, green and blue the right.
pub fn anaglyph(left: &Tensor, right: &Tensor) -> Result<Tensor> {
    if left.shape() != right.shape() {
        return Err(Error::ShapeMismatch(format!(
            "stereo views {:?} and {:?} differ",
            left.shape(),
            right.shape()
        )));
    }
    let (l, r) = (luminance(left)?, luminance(right)?);
    Ok(Tensor::from_fn(l.rows(), l.cols(), 3, |y, x, k| {
        if k == 0 {
            l.get(y, x, 0)
        } else {
            r.get(y, x, 0)
        }
    }))
}

/// ASCII polygon file with per-vertex 8-bit colour.
pub fn ply_string(mesh: &Mesh) -> String {
    let mut s = String::new();
    let _ = write!(
        s,
        "ply\nformat ascii 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\nelement face {}\n\
         property list uchar int vertex_indices\nend_header\n",
        mesh.positions.len(),
        mesh.triangles.len()
    );
    let byte = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    for (v, p) in mesh.positions.iter().enumerate() {
        let c = mesh.color(v);
        let rgb = if mesh.chans >= 3 { [c[0], c[1], c[2]] } else { [c[0]; 3] };
        let _ = writeln!(
            s,
            "{} {} {} {} {} {}",
            p.x,
            p.y,
            p.z,
            byte(rgb[0]),
            byte(rgb[1]),
            byte(rgb[2])
        );
    }
    for t in &mesh.triangles {
        let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
    }
    s
}

pub fn write_ply(path: &Path, mesh: &Mesh) -> Result<()> {
    write_atomic(path, ply_string(mesh).as_bytes())
}

//! Finite-difference verification of every analytic backward pass.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::net::{flatten_grads, Model, NetSpec};
use crate::camera::CylCamera;
use crate::error::{Error, Result};
use crate::synth::loss::{explainability_loss_grad, photometric_loss_grad, smooth_loss_grad, SmoothMode};
use crate::synth::{synthesize_view, synthesize_view_backward, total_loss_grad, LossConfig, LossInputs, Pose6};
use crate::tensor::{bilinear_sample, bilinear_sample_backward, conv2d, conv2d_backward, EdgeMode, Kernel, Tensor};

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;
/// Gradients smaller than this are compared absolutely.
const FLOOR: f64 = 1e-6;
/// Probes per trial and input group.
const PROBES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    Conv,
    Sampler,
    Synth,
    Photometric,
    Smooth,
    Explainability,
    TotalLoss,
    DepthNet,
    PoseNet,
}

impl Component {
    pub const ALL: [Component; 9] = [
        Component::Conv,
        Component::Sampler,
        Component::Synth,
        Component::Photometric,
        Component::Smooth,
        Component::Explainability,
        Component::TotalLoss,
        Component::DepthNet,
        Component::PoseNet,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Component::Conv => "conv",
            Component::Sampler => "sampler",
            Component::Synth => "synth",
            Component::Photometric => "photometric",
            Component::Smooth => "smooth",
            Component::Explainability => "explainability",
            Component::TotalLoss => "total_loss",
            Component::DepthNet => "depth_net",
            Component::PoseNet => "pose_net",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradReport {
    pub component: Component,
    pub trials: usize,
    pub probes: usize,
    /// Probes where differences at two step sizes disagreed, indicating a
    /// kink inside the stencil; these are not compared.
    pub skipped: usize,
    pub max_rel_err: f64,
}

impl fmt::Display for GradReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} trials={} probes={} skipped={} max_rel_err={:.3e}",
            self.component.name(),
            self.trials,
            self.probes,
            self.skipped,
            self.max_rel_err
        )
    }
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(FLOOR)
}

#[derive(Default)]
struct Acc {
    probes: usize,
    skipped: usize,
    max: f64,
}

impl Acc {
    /// Compares `analytic[i]` with central differences of `f` around `x` at
    /// randomly chosen indices.
    fn check(
        &mut self,
        rng: &mut ChaCha8Rng,
        x: &[f64],
        analytic: &[f64],
        f: &dyn Fn(&[f64]) -> Result<f64>,
    ) -> Result<()> {
        if x.len() != analytic.len() {
            return Err(Error::LengthMismatch(format!(
                "{} inputs, {} gradient entries",
                x.len(),
                analytic.len()
            )));
        }
        let mut xp = x.to_vec();
        let mut fd = |i: usize, h: f64| -> Result<f64> {
            xp[i] = x[i] + h;
            let a = f(&xp)?;
            xp[i] = x[i] - h;
            let b = f(&xp)?;
            xp[i] = x[i];
            Ok((a - b) / (2.0 * h))
        };
        for _ in 0..PROBES.min(x.len()) {
            let i = rng.gen_range(0..x.len());
            let n1 = fd(i, FD_STEP)?;
            let n2 = fd(i, FD_STEP / 4.0)?;
            self.probes += 1;
            if rel_err(n1, n2) > 1e-5 {
                self.skipped += 1;
                continue;
            }
            self.max = self.max.max(rel_err(analytic[i], n1));
        }
        Ok(())
    }
}

fn rand_tensor(rng: &mut ChaCha8Rng, r: usize, c: usize, k: usize, lo: f64, hi: f64) -> Tensor {
    Tensor::from_fn(r, c, k, |_, _, _| rng.gen_range(lo..hi))
}

fn with_data(shape: (usize, usize, usize), v: &[f64]) -> Result<Tensor> {
    Tensor::from_vec(shape.0, shape.1, shape.2, v.to_vec())
}

fn edge(rng: &mut ChaCha8Rng) -> EdgeMode {
    if rng.gen_bool(0.5) {
        EdgeMode::Wrap
    } else {
        EdgeMode::Bounded
    }
}

/// A value at least 0.01 from the nearest integer.
fn off_grid(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    loop {
        let v: f64 = rng.gen_range(lo..hi);
        let frac = v - v.floor();
        if frac > 0.01 && frac < 0.99 {
            return v;
        }
    }
}

fn conv_trial(rng: &mut ChaCha8Rng, acc: &mut Acc) -> Result<()> {
    let stride = rng.gen_range(1..=2);
    let mode = edge(rng);
    let x = rand_tensor(rng, 6, 8, 2, -1.0, 1.0);
    let k = Kernel::glorot(3, 3, 2, 3, rng)?;
    let mut k = k;
    k.bias = (0..3).map(|_| rng.gen_range(-0.5..0.5)).collect();
    let out = conv2d(&x, &k, stride, mode)?;
    let w = rand_tensor(rng, out.rows(), out.cols(), out.chans(), -1.0, 1.0);
    let (gx, gk) = conv2d_backward(&x, &k, stride, mode, &w)?;
    let shape = x.shape();
    acc.check(rng, x.data(), gx.data(), &|v| {
        Ok(conv2d(&with_data(shape, v)?, &k, stride, mode)?.dot(&w))
    })?;
    acc.check(rng, &k.weights, &gk.weights, &|v| {
        let mut kk = k.clone();
        kk.weights = v.to_vec();
        Ok(conv2d(&x, &kk, stride, mode)?.dot(&w))
    })?;
    acc.check(rng, &k.bias, &gk.bias, &|v| {
        let mut kk = k.clone();
        kk.bias = v.to_vec();
        Ok(conv2d(&x, &kk, stride, mode)?.dot(&w))
    })
}

fn sampler_trial(rng: &mut ChaCha8Rng, acc: &mut Acc) -> Result<()> {
    let mode = edge(rng);
    let img = rand_tensor(rng, 6, 8, 3, 0.0, 1.0);
    let coords = Tensor::from_fn(5, 7, 2, |_, _, k| {
        if k == 0 {
            off_grid(rng, -1.5, 8.5)
        } else {
            off_grid(rng, -0.4, 5.4)
        }
    });
    let w = rand_tensor(rng, 5, 7, 3, -1.0, 1.0);
    let (gi, gc) = bilinear_sample_backward(&img, &coords, mode, &w)?;
    let f = |i: &Tensor, c: &Tensor| -> Result<f64> { Ok(bilinear_sample(i, c, mode)?.values.dot(&w)) };
    acc.check(rng, img.data(), gi.data(), &|v| f(&with_data(img.shape(), v)?, &coords))?;
    acc.check(rng, coords.data(), gc.data(), &|v| {
        f(&img, &with_data(coords.shape(), v)?)
    })
}

fn small_camera(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Result<CylCamera> {
    let mut cam = CylCamera::new(cols, rows)?;
    cam.wraps = rng.gen_bool(0.5);
    Ok(cam)
}

fn random_pose(rng: &mut ChaCha8Rng) -> Pose6 {
    let t = [
        rng.gen_range(-0.3..0.3),
        rng.gen_range(-0.1..0.1),
        rng.gen_range(-0.3..0.3),
    ];
    let r = [
        rng.gen_range(-0.05..0.05),
        rng.gen_range(-0.2..0.2),
        rng.gen_range(-0.05..0.05),
    ];
    Pose6::new(t, r)
}

/// Smooth random image so that warped samples see non-trivial gradients.
fn smooth_image(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    let ph: Vec<f64> = (0..6).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect();
    let fx = rng.gen_range(1..3) as f64;
    Tensor::from_fn(rows, cols, 3, |r, c, k| {
        let u = std::f64::consts::TAU * c as f64 / cols as f64;
        let v = r as f64 / rows as f64;
        0.5 + 0.2 * (fx * u + ph[k]).sin() + 0.2 * (3.0 * v + ph[k + 3]).cos() * (u + ph[k]).cos()
    })
}

fn synth_trial(rng: &mut ChaCha8Rng, acc: &mut Acc) -> Result<()> {
    let cam = small_camera(rng, 8, 16)?;
    let src = smooth_image(rng, 8, 16);
    let depth = rand_tensor(rng, 8, 16, 1, 2.0, 6.0);
    let pose = random_pose(rng);
    let w = rand_tensor(rng, 8, 16, 3, -1.0, 1.0);
    let res = synthesize_view(&src, &depth, &pose, &cam)?;
    let g = synthesize_view_backward(&src, &depth, &pose, &cam, &res, &w)?;
    let f = |d: &Tensor, p: &Pose6| -> Result<f64> { Ok(synthesize_view(&src, d, p, &cam)?.image.dot(&w)) };
    acc.check(rng, depth.data(), g.depth.data(), &|v| {
        f(&with_data(depth.shape(), v)?, &pose)
    })?;
    acc.check(rng, &pose.to_array(), &g.pose, &|v| f(&depth, &Pose6::from_slice(v)))
}

fn photometric_trial(rng: &mut ChaCha8Rng, acc: &mut Acc) -> Result<()> {
    let proj = rand_tensor(rng, 8, 16, 3, 0.0, 1.0);
    let target = rand_tensor(rng, 8, 16, 3, 0.0, 1.0);
    let weights = rand_tensor(rng, 8, 16, 1, 0.05, 1.0);
    let valid = Tensor::from_fn(8, 16, 1, |_, _, _| if rng.gen_bool(0.8) { 1.0 } else { 0.0 });
    let g = photometric_loss_grad(&proj, &target, Some(&weights), &valid)?;
    let f = |p: &Tensor, w: &Tensor| -> Result<f64> { Ok(photometric_loss_grad(p, &target, Some(w), &valid)?.value) };
    acc.check(rng, proj.data(), g.proj.data(), &|v| {
        f(&with_data(proj.shape(), v)?, &weights)
    })?;
    let gw = g.weights.expect("weights given");
    acc.check(rng, weights.data(), gw.data(), &|v| {
        f(&proj, &with_data(weights.shape(), v)?)
    })
}

fn smooth_trial(rng: &mut ChaCha8Rng, acc: &mut Acc) -> Result<()> {
    let mode = [
        SmoothMode::SecondOrder,
        SmoothMode::ImageAware,
        SmoothMode::ImageAwareFirstOrder,
    ][rng.gen_range(0..3)];
    let edges = edge(rng);
    let disp = rand_tensor(rng, 8, 16, 1, 0.1, 2.0);
    let image = rand_tensor(rng, 8, 16, 3, 0.0, 1.0);
    let (_, g) = smooth_loss_grad(mode, &disp, &image, edges)?;
    acc.check(rng, disp.data(), g.data(), &|v| {
        Ok(smooth_loss_grad(mode, &with_data(disp.shape(), v)?, &image, edges)?.0)
    })
}

fn explainability_trial(rng: &mut ChaCha8Rng, acc: &mut Acc) -> Result<()> {
    let logits = rand_tensor(rng, 8, 16, 2, -3.0, 3.0);
    let (_, g) = explainability_loss_grad(&logits)?;
    acc.check(rng, logits.data(), g.data(), &|v| {
        Ok(explainability_loss_grad(&with_data(logits.shape(), v)?)?.0)
    })
}

fn total_loss_trial(rng: &mut ChaCha8Rng, acc: &mut Acc) -> Result<()> {
    let cam = small_camera(rng, 8, 16)?;
    let target = smooth_image(rng, 8, 16);
    let sources = vec![smooth_image(rng, 8, 16), smooth_image(rng, 8, 16)];
    let scales = 3;
    let disparity: Vec<Tensor> = (0..scales)
        .map(|s| rand_tensor(rng, 8 >> s, 16 >> s, 1, 0.2, 0.5))
        .collect();
    let poses = vec![random_pose(rng), random_pose(rng)];
    let cfg = LossConfig {
        num_scales: scales,
        lambda_s: rng.gen_range(0.1..2.0),
        lambda_e: if rng.gen_bool(0.5) { 0.2 } else { 0.0 },
        smooth_mode: [SmoothMode::SecondOrder, SmoothMode::ImageAware][rng.gen_range(0..2)],
        ..Default::default()
    };
    let masks: Option<Vec<Vec<Tensor>>> = cfg.masks_enabled().then(|| {
        (0..scales)
            .map(|s| {
                (0..2)
                    .map(|_| rand_tensor(rng, 8 >> s, 16 >> s, 2, -2.0, 2.0))
                    .collect()
            })
            .collect()
    });
    let eval = |d: &[Tensor], p: &[Pose6], m: Option<&[Vec<Tensor>]>| -> Result<f64> {
        let inp = LossInputs {
            target: &target,
            sources: &sources,
            disparity: d,
            poses: p,
            mask_logits: m,
            cam: &cam,
        };
        Ok(total_loss_grad(&inp, &cfg)?.0.total)
    };
    let inp = LossInputs {
        target: &target,
        sources: &sources,
        disparity: &disparity,
        poses: &poses,
        mask_logits: masks.as_deref(),
        cam: &cam,
    };
    let (_, g) = total_loss_grad(&inp, &cfg)?;
    for s in 0..scales {
        acc.check(rng, disparity[s].data(), g.disparity[s].data(), &|v| {
            let mut d = disparity.clone();
            d[s] = with_data(d[s].shape(), v)?;
            eval(&d, &poses, masks.as_deref())
        })?;
    }
    let flat: Vec<f64> = poses.iter().flat_map(|p| p.to_array()).collect();
    let gflat: Vec<f64> = g.poses.iter().flatten().copied().collect();
    acc.check(rng, &flat, &gflat, &|v| {
        let p: Vec<Pose6> = v.chunks(6).map(Pose6::from_slice).collect();
        eval(&disparity, &p, masks.as_deref())
    })?;
    if let (Some(m), Some(gm)) = (&masks, &g.mask_logits) {
        let s = rng.gen_range(0..scales);
        let j = rng.gen_range(0..2);
        acc.check(rng, m[s][j].data(), gm[s][j].data(), &|v| {
            let mut mm = m.clone();
            mm[s][j] = with_data(mm[s][j].shape(), v)?;
            eval(&disparity, &poses, Some(&mm))
        })?;
    }
    Ok(())
}

fn tiny_spec(rng: &mut ChaCha8Rng) -> NetSpec {
    NetSpec {
        depth_widths: vec![3, 4, 4],
        pose_widths: vec![3, 4, 4],
        kernel: 3,
        num_scales: 3,
        num_sources: 2,
        masks: true,
        wrap: rng.gen_bool(0.5),
    }
}

fn perturbed(model: &Model, v: &[f64]) -> Result<Model> {
    let mut m = model.clone();
    m.set_flat_params(v)?;
    Ok(m)
}

fn depth_net_trial(rng: &mut ChaCha8Rng, acc: &mut Acc) -> Result<()> {
    let spec = tiny_spec(rng);
    let mut model = Model::new(spec, rng.gen())?;
    for k in model.kernels.iter_mut() {
        k.bias = k.bias.iter().map(|_| rng.gen_range(-0.1..0.1)).collect();
    }
    let img = rand_tensor(rng, 8, 16, 3, 0.0, 1.0);
    let out = model.depth_forward(&img, 0.05, 2.0)?;
    let ws: Vec<Tensor> = out
        .disparities()
        .iter()
        .map(|d| rand_tensor(rng, d.rows(), d.cols(), 1, -1.0, 1.0))
        .collect();
    let g = flatten_grads(&out.backward(&model, &ws)?);
    let f = |m: &Model| -> Result<f64> {
        let d = m.depth_forward(&img, 0.05, 2.0)?.disparities();
        Ok(d.iter().zip(&ws).map(|(a, b)| a.dot(b)).sum())
    };
    acc.check(rng, &model.flat_params(), &g, &|v| f(&perturbed(&model, v)?))
}

fn pose_net_trial(rng: &mut ChaCha8Rng, acc: &mut Acc) -> Result<()> {
    let spec = tiny_spec(rng);
    let mut model = Model::new(spec, rng.gen())?;
    for k in model.kernels.iter_mut() {
        k.bias = k.bias.iter().map(|_| rng.gen_range(-0.1..0.1)).collect();
    }
    let target = rand_tensor(rng, 8, 16, 3, 0.0, 1.0);
    let sources = vec![
        rand_tensor(rng, 8, 16, 3, 0.0, 1.0),
        rand_tensor(rng, 8, 16, 3, 0.0, 1.0),
    ];
    let out = model.pose_forward(&target, &sources)?;
    let wp: Vec<[f64; 6]> = (0..2)
        .map(|_| std::array::from_fn(|_| rng.gen_range(-1.0..1.0)))
        .collect();
    let wm: Vec<Vec<Tensor>> = out
        .mask_logits()?
        .expect("mask heads")
        .iter()
        .map(|per| {
            per.iter()
                .map(|t| rand_tensor(rng, t.rows(), t.cols(), 2, -1.0, 1.0))
                .collect()
        })
        .collect();
    let g = flatten_grads(&out.backward(&model, &wp, Some(&wm))?);
    let f = |m: &Model| -> Result<f64> {
        let o = m.pose_forward(&target, &sources)?;
        let mut s: f64 = o
            .poses()
            .iter()
            .zip(&wp)
            .map(|(p, w)| p.to_array().iter().zip(w).map(|(a, b)| a * b).sum::<f64>())
            .sum();
        for (per, wper) in o.mask_logits()?.expect("mask heads").iter().zip(&wm) {
            s += per.iter().zip(wper).map(|(a, b)| a.dot(b)).sum::<f64>();
        }
        Ok(s)
    };
    acc.check(rng, &model.flat_params(), &g, &|v| f(&perturbed(&model, v)?))
}

/// Runs `trials` random instances of `component`.
pub fn gradient_check(component: Component, trials: usize, seed: u64) -> Result<GradReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(component as u64);
    let mut acc = Acc::default();
    for _ in 0..trials {
        let r = &mut rng;
        match component {
            Component::Conv => conv_trial(r, &mut acc),
            Component::Sampler => sampler_trial(r, &mut acc),
            Component::Synth => synth_trial(r, &mut acc),
            Component::Photometric => photometric_trial(r, &mut acc),
            Component::Smooth => smooth_trial(r, &mut acc),
            Component::Explainability => explainability_trial(r, &mut acc),
            Component::TotalLoss => total_loss_trial(r, &mut acc),
            Component::DepthNet => depth_net_trial(r, &mut acc),
            Component::PoseNet => pose_net_trial(r, &mut acc),
        }?;
    }
    Ok(GradReport {
        component,
        trials,
        probes: acc.probes,
        skipped: acc.skipped,
        max_rel_err: acc.max,
    })
}

//! Differentiable panoramic view synthesis and the multi-scale training loss.

pub mod loss;
pub mod pose;
pub mod warp;

use rayon::prelude::*;

pub use loss::{
    edge_weights, explainability_loss, explainability_loss_grad, mask_weights, mask_weights_backward, photometric_loss,
    photometric_loss_grad, smooth_loss_grad, smooth_loss_image_aware, smooth_loss_image_aware_grad,
    smooth_loss_second_order, smooth_loss_second_order_grad, PhotometricGrad, SmoothMode,
};
pub use pose::Pose6;
pub use warp::{synthesize_view, synthesize_view_backward, warp_coords, SynthGrad, SynthResult};

use crate::camera::CylCamera;
use crate::error::{Error, Result};
use crate::tensor::{downsample_half, downsample_half_backward, Tensor};

/// Weights and structure of the training loss.
#[derive(Debug, Clone, PartialEq)]
pub struct LossConfig {
    pub lambda_s: f64,
    pub lambda_e: f64,
    pub lambda_m: f64,
    pub num_scales: usize,
    pub smooth_mode: SmoothMode,
    pub min_depth: f64,
    pub max_depth: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda_s: 2.0,
            lambda_e: 0.0,
            lambda_m: 0.2,
            num_scales: 4,
            smooth_mode: SmoothMode::SecondOrder,
            min_depth: 0.1,
            max_depth: 100.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        let weights = [self.lambda_s, self.lambda_e, self.lambda_m];
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "loss weights must be finite and non-negative, got {weights:?}"
            )));
        }
        if self.num_scales == 0 {
            return Err(Error::InvalidArgument("num_scales must be at least 1".into()));
        }
        if !(self.min_depth > 0.0 && self.max_depth > self.min_depth && self.max_depth.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "depth bounds must satisfy 0 < min < max, got ({}, {})",
                self.min_depth, self.max_depth
            )));
        }
        Ok(())
    }

    /// Weight of the smoothness term at the finest scale.
    pub fn smooth_weight(&self) -> f64 {
        match self.smooth_mode {
            SmoothMode::SecondOrder => self.lambda_s,
            SmoothMode::ImageAware | SmoothMode::ImageAwareFirstOrder => self.lambda_m,
        }
    }

    pub fn masks_enabled(&self) -> bool {
        self.lambda_e > 0.0
    }

    /// Disparity at unit-interval activation `u`.
    pub fn disparity_from_unit(&self, u: f64) -> f64 {
        let lo = 1.0 / self.max_depth;
        lo + (1.0 / self.min_depth - lo) * u
    }

    /// `d disparity / d u`.
    pub fn disparity_span(&self) -> f64 {
        1.0 / self.min_depth - 1.0 / self.max_depth
    }
}

#[inline]
pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Per-pixel unconstrained logits mapped to bounded disparity and depth.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthState {
    pub logits: Tensor,
    pub min_depth: f64,
    pub max_depth: f64,
}

impl DepthState {
    pub fn new(logits: Tensor, min_depth: f64, max_depth: f64) -> Self {
        Self {
            logits,
            min_depth,
            max_depth,
        }
    }

    /// Logits reproducing `depth`, clamped just inside the representable range.
    pub fn from_depth(depth: &Tensor, min_depth: f64, max_depth: f64) -> Self {
        let lo = 1.0 / max_depth;
        let span = 1.0 / min_depth - lo;
        let logits = depth.map(|d| {
            let u = ((1.0 / d - lo) / span).clamp(1e-9, 1.0 - 1e-9);
            (u / (1.0 - u)).ln()
        });
        Self::new(logits, min_depth, max_depth)
    }

    fn span(&self) -> (f64, f64) {
        let lo = 1.0 / self.max_depth;
        (lo, 1.0 / self.min_depth - lo)
    }

    pub fn disparity(&self) -> Tensor {
        let (lo, span) = self.span();
        self.logits.map(|s| lo + span * sigmoid(s))
    }

    pub fn depth(&self) -> Tensor {
        self.disparity().map(|v| 1.0 / v)
    }

    /// Chains a disparity gradient back onto the logits.
    pub fn logits_grad(&self, grad_disparity: &Tensor) -> Result<Tensor> {
        let (_, span) = self.span();
        self.logits.zip_map(grad_disparity, |s, g| {
            let p = sigmoid(s);
            g * span * p * (1.0 - p)
        })
    }
}

/// Mean-pooled pyramid; level 0 is the input.
pub fn image_pyramid(img: &Tensor, levels: usize) -> Result<Vec<Tensor>> {
    let mut out = vec![img.clone()];
    for _ in 1..levels {
        let next = downsample_half(out.last().expect("non-empty"))?;
        out.push(next);
    }
    Ok(out)
}

/// Backward of [`image_pyramid`]: folds per-level gradients onto level 0.
pub fn image_pyramid_backward(grads: &[Tensor]) -> Result<Tensor> {
    let mut acc = grads
        .last()
        .ok_or_else(|| Error::ShapeMismatch("empty pyramid gradient".into()))?
        .clone();
    for g in grads.iter().rev().skip(1) {
        let mut up = downsample_half_backward(&acc);
        up.add_assign(g)?;
        acc = up;
    }
    Ok(acc)
}

/// Everything [`total_loss`] consumes for one snippet.
#[derive(Debug, Clone, Copy)]
pub struct LossInputs<'a> {
    pub target: &'a Tensor,
    pub sources: &'a [Tensor],
    /// Disparity per scale, finest first.
    pub disparity: &'a [Tensor],
    /// Target-to-source pose, one per source.
    pub poses: &'a [Pose6],
    /// Two-channel mask logits indexed `[scale][source]`; ignored when the
    /// explainability weight is zero.
    pub mask_logits: Option<&'a [Vec<Tensor>]>,
    pub cam: &'a CylCamera,
}

/// Scalar loss with its components (already weighted).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossTerms {
    pub total: f64,
    pub pixel: f64,
    pub smooth: f64,
    pub exp: f64,
}

impl LossTerms {
    fn add(&mut self, o: &LossTerms) {
        self.total += o.total;
        self.pixel += o.pixel;
        self.smooth += o.smooth;
        self.exp += o.exp;
    }
}

/// Gradients of [`total_loss`].
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrads {
    pub disparity: Vec<Tensor>,
    pub poses: Vec<[f64; 6]>,
    pub mask_logits: Option<Vec<Vec<Tensor>>>,
}

fn check_inputs(inp: &LossInputs, cfg: &LossConfig) -> Result<()> {
    cfg.validate()?;
    if inp.sources.is_empty() {
        return Err(Error::InvalidArgument("snippet needs at least one source".into()));
    }
    if inp.poses.len() != inp.sources.len() {
        return Err(Error::LengthMismatch(format!(
            "{} poses for {} sources",
            inp.poses.len(),
            inp.sources.len()
        )));
    }
    if inp.disparity.len() != cfg.num_scales {
        return Err(Error::LengthMismatch(format!(
            "{} disparity levels for {} scales",
            inp.disparity.len(),
            cfg.num_scales
        )));
    }
    for s in inp.sources {
        inp.target.check_same_shape(s, "snippet frames")?;
    }
    if cfg.masks_enabled() {
        let masks = inp
            .mask_logits
            .ok_or_else(|| Error::InvalidArgument("explainability weight set but no mask logits".into()))?;
        if masks.len() != cfg.num_scales || masks.iter().any(|m| m.len() != inp.sources.len()) {
            return Err(Error::LengthMismatch("mask logits must be [scale][source]".into()));
        }
    }
    Ok(())
}

struct ScaleOut {
    terms: LossTerms,
    disparity: Option<Tensor>,
    poses: Vec<[f64; 6]>,
    masks: Option<Vec<Tensor>>,
}

#[allow(clippy::too_many_arguments)]
fn scale_loss(
    scale: usize,
    target: &Tensor,
    sources: &[Tensor],
    disp: &Tensor,
    poses: &[Pose6],
    masks: Option<&[Tensor]>,
    cam: &CylCamera,
    cfg: &LossConfig,
    want_grad: bool,
) -> Result<ScaleOut> {
    let edges = warp::edge_mode(cam);
    if disp.shape() != (cam.height, cam.width, 1) {
        return Err(Error::ShapeMismatch(format!(
            "scale {scale} disparity {:?} vs camera {}x{}",
            disp.shape(),
            cam.height,
            cam.width
        )));
    }
    if let Some(bad) = disp.data().iter().find(|&&v| !(v > 0.0)) {
        return Err(Error::NonPositiveDepth(*bad));
    }
    let depth = disp.map(|v| 1.0 / v);
    let use_masks = cfg.masks_enabled();

    let per_source: Vec<Result<(f64, f64, Option<Tensor>, [f64; 6], Option<Tensor>)>> = sources
        .par_iter()
        .zip(poses.par_iter())
        .enumerate()
        .map(|(k, (src, pose))| {
            let synth = synthesize_view(src, &depth, pose, cam)?;
            let (weights, logits) = match (use_masks, masks) {
                (true, Some(m)) => (Some(mask_weights(&m[k])?), Some(&m[k])),
                _ => (None, None),
            };
            if !want_grad {
                let pix = photometric_loss(&synth.image, target, weights.as_ref(), &synth.valid)?;
                let exp = match logits {
                    Some(l) => cfg.lambda_e * explainability_loss(l)?,
                    None => 0.0,
                };
                return Ok((pix, exp, None, [0.0; 6], None));
            }
            let pg = photometric_loss_grad(&synth.image, target, weights.as_ref(), &synth.valid)?;
            let sg = synthesize_view_backward(src, &depth, pose, cam, &synth, &pg.proj)?;
            let gdepth = sg.depth;
            let (exp, gmask) = match (logits, pg.weights.as_ref()) {
                (Some(l), Some(gw)) => {
                    let (e, mut ge) = explainability_loss_grad(l)?;
                    ge.scale_in_place(cfg.lambda_e);
                    ge.add_assign(&mask_weights_backward(l, gw)?)?;
                    (cfg.lambda_e * e, Some(ge))
                }
                _ => (0.0, None),
            };
            Ok((pg.value, exp, Some(gdepth), sg.pose, gmask))
        })
        .collect();

    let weight = cfg.smooth_weight() / (1u64 << scale) as f64;
    let (smooth_raw, smooth_grad) = if weight > 0.0 {
        let (v, g) = smooth_loss_grad(cfg.smooth_mode, disp, target, edges)?;
        (v, Some(g))
    } else {
        (0.0, None)
    };

    let mut terms = LossTerms {
        smooth: weight * smooth_raw,
        ..Default::default()
    };
    let mut gdepth_total = want_grad.then(|| Tensor::zeros(disp.rows(), disp.cols(), 1));
    let mut gposes = Vec::with_capacity(sources.len());
    let mut gmasks = Vec::new();
    for r in per_source {
        let (pix, exp, gd, gp, gm) = r?;
        terms.pixel += pix;
        terms.exp += exp;
        if let (Some(acc), Some(gd)) = (gdepth_total.as_mut(), gd) {
            acc.add_assign(&gd)?;
        }
        gposes.push(gp);
        if let Some(gm) = gm {
            gmasks.push(gm);
        }
    }
    terms.total = terms.pixel + terms.smooth + terms.exp;

    let disparity = match gdepth_total {
        Some(gd) => {
            // depth = 1/disp
            let mut g = gd.zip_map(disp, |g, v| -g / (v * v))?;
            if let Some(mut sg) = smooth_grad {
                sg.scale_in_place(weight);
                g.add_assign(&sg)?;
            }
            Some(g)
        }
        None => None,
    };
    Ok(ScaleOut {
        terms,
        disparity,
        poses: gposes,
        masks: (want_grad && use_masks).then_some(gmasks),
    })
}

fn total_impl(inp: &LossInputs, cfg: &LossConfig, want_grad: bool) -> Result<(LossTerms, Option<LossGrads>)> {
    check_inputs(inp, cfg)?;
    let targets = image_pyramid(inp.target, cfg.num_scales)?;
    let sources: Vec<Vec<Tensor>> = inp
        .sources
        .iter()
        .map(|s| image_pyramid(s, cfg.num_scales))
        .collect::<Result<_>>()?;
    let mut terms = LossTerms::default();
    let mut grads = LossGrads {
        disparity: Vec::new(),
        poses: vec![[0.0; 6]; inp.sources.len()],
        mask_logits: (want_grad && cfg.masks_enabled()).then(Vec::new),
    };
    for scale in 0..cfg.num_scales {
        let cam = inp.cam.downscaled(scale)?;
        let srcs: Vec<Tensor> = sources.iter().map(|p| p[scale].clone()).collect();
        let masks = if cfg.masks_enabled() {
            inp.mask_logits.map(|m| m[scale].as_slice())
        } else {
            None
        };
        let out = scale_loss(
            scale,
            &targets[scale],
            &srcs,
            &inp.disparity[scale],
            inp.poses,
            masks,
            &cam,
            cfg,
            want_grad,
        )?;
        terms.add(&out.terms);
        if want_grad {
            grads.disparity.push(out.disparity.expect("gradient requested"));
            for (acc, g) in grads.poses.iter_mut().zip(&out.poses) {
                for (a, b) in acc.iter_mut().zip(g) {
                    *a += b;
                }
            }
            if let (Some(acc), Some(m)) = (grads.mask_logits.as_mut(), out.masks) {
                acc.push(m);
            }
        }
    }
    if !terms.total.is_finite() {
        return Err(Error::Diverged(0));
    }
    Ok((terms, want_grad.then_some(grads)))
}

/// Multi-scale loss: per scale, the summed photometric error over sources,
/// the smoothness term weighted by `λ / 2^scale`, and `λ_e` times each
/// source's explainability penalty.
pub fn total_loss(inp: &LossInputs, cfg: &LossConfig) -> Result<LossTerms> {
    Ok(total_impl(inp, cfg, false)?.0)
}

pub fn total_loss_grad(inp: &LossInputs, cfg: &LossConfig) -> Result<(LossTerms, LossGrads)> {
    let (t, g) = total_impl(inp, cfg, true)?;
    Ok((t, g.expect("gradient requested")))
}

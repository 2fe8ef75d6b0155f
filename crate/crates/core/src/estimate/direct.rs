//! Per-snippet optimisation of depth logits, poses and (optionally) mask
//! logits against the view-synthesis loss, coarse to fine.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::adam::Adam;
use crate::camera::CylCamera;
use crate::error::{Error, Result};
use crate::synth::{
    image_pyramid, image_pyramid_backward, total_loss_grad, DepthState, LossConfig, LossInputs, LossTerms, Pose6,
};
use crate::tensor::{upsample_double, EdgeMode, Tensor};

/// A target frame with its neighbouring source frames.
#[derive(Debug, Clone)]
pub struct Snippet {
    pub target: Tensor,
    pub sources: Vec<Tensor>,
    pub camera: CylCamera,
}

impl Snippet {
    pub fn new(target: Tensor, sources: Vec<Tensor>, camera: CylCamera) -> Result<Self> {
        if sources.is_empty() {
            return Err(Error::InvalidArgument("snippet needs at least one source".into()));
        }
        if target.rows() != camera.height || target.cols() != camera.width {
            return Err(Error::ShapeMismatch(format!(
                "target {}x{} vs camera {}x{}",
                target.cols(),
                target.rows(),
                camera.width,
                camera.height
            )));
        }
        for s in &sources {
            target.check_same_shape(s, "snippet frames")?;
        }
        Ok(Self {
            target,
            sources,
            camera,
        })
    }

    /// Whether every source is (numerically) identical to the target.
    pub fn is_static(&self) -> bool {
        self.sources.iter().all(|s| {
            let diff: f64 = s
                .data()
                .iter()
                .zip(self.target.data())
                .map(|(a, b)| (a - b).abs())
                .sum();
            diff / (s.len().max(1) as f64) < 1e-4
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimConfig {
    pub lr_depth: f64,
    pub lr_pose: f64,
    pub lr_mask: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Iterations per pyramid stage.
    pub iters: usize,
    /// Number of pyramid stages; stage resolutions halve from the finest.
    pub stages: usize,
    /// Constant depth the logits start from.
    pub init_depth: f64,
    /// Block length of the smoothed loss trace; a block whose mean loss rises
    /// is redone at half the step size.
    pub window: usize,
    /// Learning-rate multiplier reached at the end of each stage (linear decay from 1).
    pub final_lr_scale: f64,
    pub seed: u64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            lr_depth: 1e-2,
            lr_pose: 1e-4,
            lr_mask: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            iters: 300,
            stages: 3,
            init_depth: 1.0,
            window: 20,
            final_lr_scale: 0.1,
            seed: 0,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        let lrs = [self.lr_depth, self.lr_pose, self.lr_mask];
        if lrs.iter().any(|l| !(*l > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "step sizes must be positive, got {lrs:?}"
            )));
        }
        if self.window == 0 {
            return Err(Error::InvalidArgument("smoothing window must be positive".into()));
        }
        if self.stages == 0 {
            return Err(Error::InvalidArgument("at least one pyramid stage is required".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::InvalidArgument("moment coefficients must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// One evaluated loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    /// 0 is the coarsest stage.
    pub stage: usize,
    pub iter: usize,
    pub terms: LossTerms,
}

#[derive(Debug, Clone)]
pub struct DirectResult {
    /// Full-resolution depth.
    pub depth: DepthState,
    /// Target-to-source motion per source.
    pub poses: Vec<Pose6>,
    /// Final mask logits `[scale][source]` when masks were enabled.
    pub mask_logits: Option<Vec<Vec<Tensor>>>,
    pub trace: Vec<TraceEntry>,
    /// Set when the sources equal the target; depth is then unidentifiable
    /// and left at its initial value.
    pub static_snippet: bool,
}

/// Number of loss scales usable at an image of `rows × cols`.
pub fn usable_scales(rows: usize, cols: usize, wanted: usize) -> usize {
    let mut n = 1;
    while n < wanted && rows % (1 << n) == 0 && cols % (1 << n) == 0 {
        n += 1;
    }
    n
}

/// Block means over consecutive `window`-step blocks of each stage are
/// non-increasing.
pub fn smoothed_monotone(trace: &[TraceEntry], window: usize) -> bool {
    let stages = trace.iter().map(|e| e.stage).max().map_or(0, |s| s + 1);
    (0..stages).all(|s| {
        let vals: Vec<f64> = trace.iter().filter(|e| e.stage == s).map(|e| e.terms.total).collect();
        let means: Vec<f64> = vals
            .chunks(window)
            .filter(|c| c.len() == window)
            .map(|c| c.iter().sum::<f64>() / window as f64)
            .collect();
        means.windows(2).all(|w| w[1] <= w[0])
    })
}

fn params_to_poses(v: &[f64]) -> Vec<Pose6> {
    v.chunks(6).map(Pose6::from_slice).collect()
}

struct Snapshot {
    logits: Tensor,
    pose_vec: Vec<f64>,
    masks: Option<Vec<Vec<Tensor>>>,
    depth_opt: Adam,
    pose_opt: Adam,
    mask_opt: Option<Adam>,
}

struct StageState {
    cam: CylCamera,
    target: Tensor,
    sources: Vec<Tensor>,
    cfg: LossConfig,
}

impl StageState {
    /// Loss and gradients for logits, flattened poses and flattened masks.
    fn evaluate(
        &self,
        depth: &DepthState,
        poses: &[Pose6],
        masks: Option<&[Vec<Tensor>]>,
    ) -> Result<(LossTerms, Tensor, Vec<f64>, Option<Vec<Vec<Tensor>>>)> {
        let disp = image_pyramid(&depth.disparity(), self.cfg.num_scales)?;
        let inp = LossInputs {
            target: &self.target,
            sources: &self.sources,
            disparity: &disp,
            poses,
            mask_logits: masks,
            cam: &self.cam,
        };
        let (terms, grads) = total_loss_grad(&inp, &self.cfg)?;
        let gdisp = image_pyramid_backward(&grads.disparity)?;
        let glogits = depth.logits_grad(&gdisp)?;
        let gposes: Vec<f64> = grads.poses.iter().flatten().copied().collect();
        Ok((terms, glogits, gposes, grads.mask_logits))
    }
}

fn flatten(masks: &[Vec<Tensor>]) -> Vec<f64> {
    masks.iter().flatten().flat_map(|t| t.data().iter().copied()).collect()
}

fn unflatten_into(masks: &mut [Vec<Tensor>], v: &[f64]) {
    let mut off = 0;
    for t in masks.iter_mut().flatten() {
        let n = t.len();
        t.data_mut().copy_from_slice(&v[off..off + n]);
        off += n;
    }
}

/// Step-size multiplier at `iter` within a stage: linear decay to
/// `final_lr_scale`.
fn lr_schedule(cfg: &OptimConfig, iter: usize) -> f64 {
    let frac = if cfg.iters > 1 {
        iter as f64 / (cfg.iters - 1) as f64
    } else {
        0.0
    };
    1.0 + (cfg.final_lr_scale - 1.0) * frac
}

/// Starting point for [`direct_optimize_from`].
#[derive(Debug, Clone)]
pub struct DirectInit {
    /// Full-resolution depth; coarser stages start from its area average.
    pub depth: Tensor,
    pub poses: Vec<Pose6>,
}

/// Coarse-to-fine minimisation of the view-synthesis loss over depth, poses
/// and masks for one snippet.
pub fn direct_optimize(snip: &Snippet, cfg: &OptimConfig, loss_cfg: &LossConfig) -> Result<DirectResult> {
    direct_optimize_from(snip, cfg, loss_cfg, None)
}

/// [`direct_optimize`] starting from `init` instead of constant depth and
/// near-identity poses.
pub fn direct_optimize_from(
    snip: &Snippet,
    cfg: &OptimConfig,
    loss_cfg: &LossConfig,
    init: Option<&DirectInit>,
) -> Result<DirectResult> {
    cfg.validate()?;
    loss_cfg.validate()?;
    let cam = snip.camera;
    let n_src = snip.sources.len();
    let init_logits = |rows, cols| {
        DepthState::from_depth(
            &Tensor::filled(rows, cols, 1, cfg.init_depth),
            loss_cfg.min_depth,
            loss_cfg.max_depth,
        )
    };
    if snip.is_static() {
        return Ok(DirectResult {
            depth: init_logits(cam.height, cam.width),
            poses: vec![Pose6::identity(); n_src],
            mask_logits: None,
            trace: Vec::new(),
            static_snippet: true,
        });
    }

    let mut stages = cfg.stages;
    while stages > 1 && cam.downscaled(stages - 1).is_err() {
        stages -= 1;
    }
    let tpyr = image_pyramid(&snip.target, stages)?;
    let spyr: Vec<Vec<Tensor>> = snip
        .sources
        .iter()
        .map(|s| image_pyramid(s, stages))
        .collect::<Result<_>>()?;

    let coarse = cam.downscaled(stages - 1)?;
    let (mut depth, mut pose_vec) = match init {
        Some(init) => {
            if init.poses.len() != n_src {
                return Err(Error::LengthMismatch(format!(
                    "{} initial poses for {n_src} sources",
                    init.poses.len()
                )));
            }
            if init.depth.shape() != (cam.height, cam.width, 1) {
                return Err(Error::ShapeMismatch("initial depth must match the camera".into()));
            }
            let pyr = image_pyramid(&init.depth, stages)?;
            let d = DepthState::from_depth(&pyr[stages - 1], loss_cfg.min_depth, loss_cfg.max_depth);
            (d, init.poses.iter().flat_map(|p| p.to_array()).collect())
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let v: Vec<f64> = (0..6 * n_src).map(|_| rng.gen_range(-1e-4..1e-4)).collect();
            (init_logits(coarse.height, coarse.width), v)
        }
    };
    let mut masks: Option<Vec<Vec<Tensor>>> = None;
    let mut trace = Vec::new();
    let mut pose_opt = Adam::new(pose_vec.len(), cfg.lr_pose, cfg.beta1, cfg.beta2);

    for stage in 0..stages {
        let level = stages - 1 - stage;
        let scam = cam.downscaled(level)?;
        if stage > 0 {
            depth.logits = upsample_double(&depth.logits, EdgeMode::from_wrap(cam.wraps));
        }
        let mut lcfg = loss_cfg.clone();
        lcfg.num_scales = usable_scales(scam.height, scam.width, loss_cfg.num_scales);
        if loss_cfg.masks_enabled() {
            masks = Some(
                (0..lcfg.num_scales)
                    .map(|s| vec![Tensor::zeros(scam.height >> s, scam.width >> s, 2); n_src])
                    .collect(),
            );
        }
        let st = StageState {
            cam: scam,
            target: tpyr[level].clone(),
            sources: spyr.iter().map(|p| p[level].clone()).collect(),
            cfg: lcfg,
        };
        let mut depth_opt = Adam::new(depth.logits.len(), cfg.lr_depth, cfg.beta1, cfg.beta2);
        let mut mask_opt = masks
            .as_ref()
            .map(|m| Adam::new(flatten(m).len(), cfg.lr_mask, cfg.beta1, cfg.beta2));
        // Blocks of `window` steps whose mean loss exceeds the previous
        // block's are rolled back and redone at half the rate.
        let window = cfg.window;
        let snapshot = |depth: &DepthState,
                        pose_vec: &[f64],
                        masks: &Option<Vec<Vec<Tensor>>>,
                        d: &Adam,
                        p: &Adam,
                        m: &Option<Adam>| Snapshot {
            logits: depth.logits.clone(),
            pose_vec: pose_vec.to_vec(),
            masks: masks.clone(),
            depth_opt: d.clone(),
            pose_opt: p.clone(),
            mask_opt: m.clone(),
        };
        let mut snap = snapshot(&depth, &pose_vec, &masks, &depth_opt, &pose_opt, &mask_opt);
        let mut block: Vec<TraceEntry> = Vec::with_capacity(window);
        let mut prev_mean = f64::INFINITY;
        let mut backoff = 1.0;
        for iter in 0..cfg.iters {
            let poses = params_to_poses(&pose_vec);
            let (terms, glogits, gposes, gmasks) = st.evaluate(&depth, &poses, masks.as_deref())?;
            if !terms.total.is_finite() {
                return Err(Error::Diverged(trace.len() + block.len()));
            }
            block.push(TraceEntry { stage, iter, terms });
            if block.len() == window {
                let mean = block.iter().map(|e| e.terms.total).sum::<f64>() / window as f64;
                if mean > prev_mean {
                    depth.logits = snap.logits.clone();
                    pose_vec.clone_from(&snap.pose_vec);
                    masks.clone_from(&snap.masks);
                    depth_opt = snap.depth_opt.clone();
                    pose_opt = snap.pose_opt.clone();
                    mask_opt.clone_from(&snap.mask_opt);
                    block.clear();
                    backoff *= 0.5;
                    continue;
                }
                prev_mean = mean;
                trace.append(&mut block);
                snap = snapshot(&depth, &pose_vec, &masks, &depth_opt, &pose_opt, &mask_opt);
            }
            let scale = lr_schedule(cfg, iter) * backoff;
            depth_opt.update(depth.logits.data_mut(), glogits.data(), scale);
            pose_opt.update(&mut pose_vec, &gposes, scale);
            if let (Some(m), Some(gm), Some(opt)) = (masks.as_mut(), gmasks, mask_opt.as_mut()) {
                let mut flat = flatten(m);
                opt.update(&mut flat, &flatten(&gm), scale);
                unflatten_into(m, &flat);
            }
        }
        // an unfinished block is kept only if it did not end above the last
        // full block
        let keep = block.last().is_some_and(|e| e.terms.total <= prev_mean);
        if keep || prev_mean.is_infinite() {
            trace.append(&mut block);
        } else {
            depth.logits = snap.logits;
            pose_vec = snap.pose_vec;
            masks = snap.masks;
        }
    }
    Ok(DirectResult {
        depth,
        poses: params_to_poses(&pose_vec),
        mask_logits: masks,
        trace,
        static_snippet: false,
    })
}

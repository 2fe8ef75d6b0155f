//! Training loop for the network pair.

use std::fmt;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adam::Adam;
use super::checkpoint::Checkpoint;
use super::direct::Snippet;
use super::net::{flatten_grads, Model, NetSpec};
use crate::error::{Error, Result};
use crate::synth::{total_loss_grad, LossConfig, LossInputs, LossTerms};
use crate::tensor::KernelGrad;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Total number of steps; a resumed run continues up to this count.
    pub steps: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub seed: u64,
    /// Checkpoint period in steps; 0 writes only the final checkpoint.
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            lr: 2e-4,
            beta1: 0.9,
            beta2: 0.999,
            seed: 0,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "step size must be positive, got {}",
                self.lr
            )));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::InvalidArgument("moment coefficients must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Loss terms of one training step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    /// 1-based index of the completed step.
    pub step: u64,
    pub snippet: usize,
    pub terms: LossTerms,
}

impl fmt::Display for StepRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "step={} snippet={} total={} pixel={} smooth={} exp={}",
            self.step, self.snippet, self.terms.total, self.terms.pixel, self.terms.smooth, self.terms.exp
        )
    }
}

impl StepRecord {
    /// Parses one metrics-log line.
    pub fn parse(line: &str) -> Option<Self> {
        let mut step = None;
        let mut snippet = None;
        let mut t = [None; 4];
        for kv in line.split_whitespace() {
            let (k, v) = kv.split_once('=')?;
            match k {
                "step" => step = v.parse().ok(),
                "snippet" => snippet = v.parse().ok(),
                "total" => t[0] = v.parse().ok(),
                "pixel" => t[1] = v.parse().ok(),
                "smooth" => t[2] = v.parse().ok(),
                "exp" => t[3] = v.parse().ok(),
                _ => {}
            }
        }
        Some(Self {
            step: step?,
            snippet: snippet?,
            terms: LossTerms {
                total: t[0]?,
                pixel: t[1]?,
                smooth: t[2]?,
                exp: t[3]?,
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub model: Model,
    pub adam: Adam,
    /// Completed steps.
    pub step: u64,
}

impl TrainState {
    pub fn new(spec: NetSpec, cfg: &TrainConfig) -> Result<Self> {
        let model = Model::new(spec, cfg.seed)?;
        let adam = Adam::new(model.param_count(), cfg.lr, cfg.beta1, cfg.beta2);
        Ok(Self { model, adam, step: 0 })
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        let model = c.model()?;
        let adam = c.adam()?;
        if adam.m.len() != model.param_count() {
            return Err(Error::format("checkpoint", "optimiser state does not match the model"));
        }
        Ok(Self {
            model,
            adam,
            step: c.step,
        })
    }

    pub fn checkpoint(&self, loss_cfg: &LossConfig, config: &str) -> Checkpoint {
        Checkpoint::from_model(
            &self.model,
            &self.adam,
            (loss_cfg.min_depth, loss_cfg.max_depth),
            self.step,
            config,
        )
    }
}

/// Snippet visited at 0-based `step`: each pass over the data uses its own
/// permutation derived from the seed and the pass number.
pub fn snippet_at(n: usize, seed: u64, step: u64) -> usize {
    let epoch = step / n as u64;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    order.shuffle(&mut rng);
    order[(step % n as u64) as usize]
}

fn check_compatible(model: &Model, data: &[Snippet], loss_cfg: &LossConfig) -> Result<()> {
    let spec = &model.spec;
    if data.is_empty() {
        return Err(Error::InvalidArgument("no training snippets".into()));
    }
    if loss_cfg.num_scales != spec.num_scales {
        return Err(Error::InvalidArgument(format!(
            "loss uses {} scales, network predicts {}",
            loss_cfg.num_scales, spec.num_scales
        )));
    }
    if loss_cfg.masks_enabled() && !spec.masks {
        return Err(Error::InvalidArgument(
            "explainability weight set but the network has no mask heads".into(),
        ));
    }
    for s in data {
        if s.sources.len() != spec.num_sources {
            return Err(Error::LengthMismatch(format!(
                "snippet has {} sources, network expects {}",
                s.sources.len(),
                spec.num_sources
            )));
        }
        if s.camera.wraps != spec.wrap {
            return Err(Error::InvalidArgument(
                "camera wrap flag differs from the network's".into(),
            ));
        }
    }
    Ok(())
}

/// Loss terms and flattened parameter gradient for one snippet.
pub fn loss_and_grad(model: &Model, snip: &Snippet, loss_cfg: &LossConfig) -> Result<(LossTerms, Vec<f64>)> {
    let lo = 1.0 / loss_cfg.max_depth;
    let depth = model.depth_forward(&snip.target, lo, loss_cfg.disparity_span())?;
    let pose = model.pose_forward(&snip.target, &snip.sources)?;
    let disparity = depth.disparities();
    let poses = pose.poses();
    let masks = if loss_cfg.masks_enabled() {
        pose.mask_logits()?
    } else {
        None
    };
    let inp = LossInputs {
        target: &snip.target,
        sources: &snip.sources,
        disparity: &disparity,
        poses: &poses,
        mask_logits: masks.as_deref(),
        cam: &snip.camera,
    };
    let (terms, g) = total_loss_grad(&inp, loss_cfg)?;
    let gd = depth.backward(model, &g.disparity)?;
    let gp = pose.backward(model, &g.poses, g.mask_logits.as_deref())?;
    let sum: Vec<KernelGrad> = gd
        .into_iter()
        .zip(gp)
        .map(|(mut a, b)| {
            a.add_assign(&b);
            a
        })
        .collect();
    Ok((terms, flatten_grads(&sum)))
}

/// One optimiser step on the snippet scheduled for `state.step`.
pub fn train_step(
    state: &mut TrainState,
    data: &[Snippet],
    cfg: &TrainConfig,
    loss_cfg: &LossConfig,
) -> Result<StepRecord> {
    let idx = snippet_at(data.len(), cfg.seed, state.step);
    let (terms, grad) = loss_and_grad(&state.model, &data[idx], loss_cfg)?;
    let mut params = state.model.flat_params();
    state.adam.update(&mut params, &grad, 1.0);
    if params.iter().any(|p| !p.is_finite()) {
        return Err(Error::Diverged(state.step as usize));
    }
    state.model.set_flat_params(&params)?;
    state.step += 1;
    Ok(StepRecord {
        step: state.step,
        snippet: idx,
        terms,
    })
}

/// Runs steps until `cfg.steps` are complete, calling `on_step` after each.
pub fn train(
    state: &mut TrainState,
    data: &[Snippet],
    cfg: &TrainConfig,
    loss_cfg: &LossConfig,
    mut on_step: impl FnMut(&TrainState, &StepRecord) -> Result<()>,
) -> Result<Vec<StepRecord>> {
    cfg.validate()?;
    loss_cfg.validate()?;
    check_compatible(&state.model, data, loss_cfg)?;
    let mut log = Vec::new();
    while state.step < cfg.steps {
        let rec = train_step(state, data, cfg, loss_cfg)?;
        on_step(state, &rec)?;
        log.push(rec);
    }
    Ok(log)
}

pub const METRICS_FILE: &str = "metrics.log";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";

pub fn checkpoint_name(step: u64) -> String {
    format!("step-{step:06}.ckpt")
}

/// [`train`] writing `metrics.log`, periodic checkpoints and `final.ckpt`
/// into `out`. When resuming, log lines past the checkpoint's step are
/// dropped before appending.
pub fn train_to_dir(
    state: &mut TrainState,
    data: &[Snippet],
    cfg: &TrainConfig,
    loss_cfg: &LossConfig,
    out: &Path,
    config_echo: &str,
) -> Result<Vec<StepRecord>> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let log_path = out.join(METRICS_FILE);
    let kept = match std::fs::read_to_string(&log_path) {
        Ok(text) => text
            .lines()
            .filter(|l| StepRecord::parse(l).is_some_and(|r| r.step <= state.step))
            .map(|l| format!("{l}\n"))
            .collect::<String>(),
        Err(_) => String::new(),
    };
    crate::datasets::io::write_atomic(&log_path, kept.as_bytes())?;
    let mut file = OpenOptions::new()
        .append(true)
        .open(&log_path)
        .map_err(|e| Error::io(&log_path, e))?;
    let recs = train(state, data, cfg, loss_cfg, |st, rec| {
        writeln!(file, "{rec}").map_err(|e| Error::io(&log_path, e))?;
        if cfg.checkpoint_every > 0 && st.step % cfg.checkpoint_every == 0 {
            st.checkpoint(loss_cfg, config_echo)
                .save(&out.join(checkpoint_name(st.step)))?;
        }
        Ok(())
    })?;
    state
        .checkpoint(loss_cfg, config_echo)
        .save(&out.join(FINAL_CHECKPOINT))?;
    Ok(recs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_pass_visits_each_snippet_once() {
        for epoch in 0..3u64 {
            let mut seen: Vec<usize> = (0..7).map(|k| snippet_at(7, 5, epoch * 7 + k)).collect();
            seen.sort();
            assert_eq!(seen, (0..7).collect::<Vec<_>>());
        }
        let a: Vec<usize> = (0..7).map(|k| snippet_at(7, 5, k)).collect();
        let b: Vec<usize> = (7..14).map(|k| snippet_at(7, 5, k)).collect();
        assert_ne!(a, b);
    }

    #[test]
    fn record_line_roundtrip() {
        let r = StepRecord {
            step: 3,
            snippet: 1,
            terms: LossTerms {
                total: 0.1 + 0.2,
                pixel: 1e-7,
                smooth: 0.0,
                exp: 2.5,
            },
        };
        assert_eq!(StepRecord::parse(&r.to_string()), Some(r));
    }
}

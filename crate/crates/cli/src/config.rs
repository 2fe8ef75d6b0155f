//! Run configuration: a TOML file (dotted keys such as `loss.lambda_s = 2.0`
//! or `[loss]` tables) merged with `--set key=value` overrides.

use std::path::Path;

use cylsfm::estimate::{NetSpec, OptimConfig, TrainConfig};
use cylsfm::synth::loss::SmoothMode;
use cylsfm::{CylCamera, LossConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraSection {
    pub width: usize,
    pub height: usize,
    /// Half-height on the unit cylinder; square pixels when absent.
    pub h_max: Option<f64>,
    pub wrap: bool,
}

impl Default for CameraSection {
    fn default() -> Self {
        Self {
            width: 128,
            height: 32,
            h_max: None,
            wrap: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossSection {
    pub lambda_s: f64,
    pub lambda_e: f64,
    pub lambda_m: f64,
    pub num_scales: usize,
    /// `second_order`, `image_aware` or `image_aware_first_order`.
    pub smooth_mode: String,
    pub min_depth: f64,
    pub max_depth: f64,
}

impl Default for LossSection {
    fn default() -> Self {
        let d = LossConfig::default();
        Self {
            lambda_s: d.lambda_s,
            lambda_e: d.lambda_e,
            lambda_m: d.lambda_m,
            num_scales: d.num_scales,
            smooth_mode: d.smooth_mode.name().into(),
            min_depth: d.min_depth,
            max_depth: d.max_depth,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimSection {
    pub lr_depth: f64,
    pub lr_pose: f64,
    pub lr_mask: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub iters: usize,
    pub stages: usize,
    pub init_depth: f64,
    pub window: usize,
    pub final_lr_scale: f64,
}

impl Default for OptimSection {
    fn default() -> Self {
        let d = OptimConfig::default();
        Self {
            lr_depth: d.lr_depth,
            lr_pose: d.lr_pose,
            lr_mask: d.lr_mask,
            beta1: d.beta1,
            beta2: d.beta2,
            iters: d.iters,
            stages: d.stages,
            init_depth: d.init_depth,
            window: d.window,
            final_lr_scale: d.final_lr_scale,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub steps: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub checkpoint_every: u64,
    pub depth_widths: Vec<usize>,
    pub pose_widths: Vec<usize>,
    pub kernel: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        let n = NetSpec::default();
        Self {
            steps: t.steps,
            lr: t.lr,
            beta1: t.beta1,
            beta2: t.beta2,
            checkpoint_every: t.checkpoint_every,
            depth_widths: n.depth_widths,
            pose_widths: n.pose_widths,
            kernel: n.kernel,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Static-frame displacement threshold.
    pub tau: f64,
    /// Train / val / test shares of the snippets.
    pub fractions: [f64; 3],
    /// Horizontal field of view of cube faces, degrees.
    pub cube_fov: f64,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            tau: cylsfm::datasets::STATIC_TAU,
            fractions: [0.8, 0.1, 0.1],
            cube_fov: 90.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads; 0 lets the pool pick.
    pub threads: usize,
    pub camera: CameraSection,
    pub loss: LossSection,
    pub optim: OptimSection,
    pub train: TrainSection,
    pub data: DataSection,
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Inserts `value` at a dotted `key` path.
fn set_path(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), CliError> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts
        .pop()
        .filter(|s| !s.is_empty())
        .ok_or_else(|| usage(format!("empty key in --set {key}")))?;
    let mut cur = table;
    for p in parts {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| usage(format!("--set {key}: {p} is not a section")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// Parses the right-hand side of `--set` as a TOML value, falling back to a
/// bare string.
fn parse_value(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&wrapped) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

impl RunConfig {
    pub fn load(file: Option<&Path>, sets: &[String]) -> Result<Self, CliError> {
        let mut table = match file {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| usage(format!("cannot read config {}: {e}", p.display())))?;
                toml::from_str::<toml::Table>(&text)
                    .map_err(|e| usage(format!("config {}: {}", p.display(), one_line(&e.to_string()))))?
            }
            None => toml::Table::new(),
        };
        for s in sets {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| usage(format!("--set expects key=value, got {s}")))?;
            set_path(&mut table, k.trim(), parse_value(v.trim()))?;
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| usage(format!("config: {}", one_line(&e.to_string()))))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        self.camera()?;
        self.loss()?.validate().map_err(|e| usage(e.to_string()))?;
        self.optim().validate().map_err(|e| usage(e.to_string()))?;
        self.train_config().validate().map_err(|e| usage(e.to_string()))?;
        self.net_spec(self.camera.wrap)
            .validate()
            .map_err(|e| usage(e.to_string()))?;
        if self.data.fractions.iter().any(|f| !(*f >= 0.0)) || self.data.fractions.iter().sum::<f64>() <= 0.0 {
            return Err(usage("data.fractions must be non-negative with a positive sum"));
        }
        Ok(())
    }

    /// Echo written into checkpoints.
    pub fn echo(&self) -> String {
        toml::to_string(self).unwrap_or_default()
    }

    pub fn camera(&self) -> Result<CylCamera, CliError> {
        let c = &self.camera;
        let mut cam = CylCamera::new(c.width, c.height).map_err(|e| usage(e.to_string()))?;
        if let Some(h) = c.h_max {
            cam = cam.with_h_max(h).map_err(|e| usage(e.to_string()))?;
        }
        cam.wraps = c.wrap;
        Ok(cam)
    }

    pub fn loss(&self) -> Result<LossConfig, CliError> {
        let l = &self.loss;
        let smooth_mode = SmoothMode::parse(&l.smooth_mode)
            .ok_or_else(|| usage(format!("unknown loss.smooth_mode {:?}", l.smooth_mode)))?;
        Ok(LossConfig {
            lambda_s: l.lambda_s,
            lambda_e: l.lambda_e,
            lambda_m: l.lambda_m,
            num_scales: l.num_scales,
            smooth_mode,
            min_depth: l.min_depth,
            max_depth: l.max_depth,
        })
    }

    pub fn optim(&self) -> OptimConfig {
        let o = &self.optim;
        OptimConfig {
            lr_depth: o.lr_depth,
            lr_pose: o.lr_pose,
            lr_mask: o.lr_mask,
            beta1: o.beta1,
            beta2: o.beta2,
            iters: o.iters,
            stages: o.stages,
            init_depth: o.init_depth,
            window: o.window,
            final_lr_scale: o.final_lr_scale,
            seed: self.seed,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            steps: t.steps,
            lr: t.lr,
            beta1: t.beta1,
            beta2: t.beta2,
            seed: self.seed,
            checkpoint_every: t.checkpoint_every,
        }
    }

    pub fn net_spec(&self, wrap: bool) -> NetSpec {
        NetSpec {
            depth_widths: self.train.depth_widths.clone(),
            pose_widths: self.train.pose_widths.clone(),
            kernel: self.train.kernel,
            num_scales: self.loss.num_scales,
            num_sources: 2,
            masks: self.loss.lambda_e > 0.0,
            wrap,
        }
    }
}

pub(crate) fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

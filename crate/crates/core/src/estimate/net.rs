//! Toy depth and pose/mask networks built from wrap-padded convolutions.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::graph::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::synth::Pose6;
use crate::tensor::{EdgeMode, Kernel, KernelGrad, Tensor};

/// Pose outputs are multiplied by this before use, biasing initial motion
/// towards zero.
pub const POSE_SCALE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct NetSpec {
    /// Depth encoder widths, one stride-2 layer each; the decoder mirrors them.
    pub depth_widths: Vec<usize>,
    /// Pose encoder widths, one stride-2 layer each.
    pub pose_widths: Vec<usize>,
    pub kernel: usize,
    pub num_scales: usize,
    pub num_sources: usize,
    /// Adds explainability-mask heads to the pose network.
    pub masks: bool,
    /// Circular horizontal padding in every layer; off gives the flat-image
    /// ablation with zero padding.
    pub wrap: bool,
}

impl Default for NetSpec {
    fn default() -> Self {
        Self {
            depth_widths: vec![8, 16, 32, 32, 32],
            pose_widths: vec![8, 16, 32, 32, 32],
            kernel: 3,
            num_scales: 4,
            num_sources: 2,
            masks: false,
            wrap: true,
        }
    }
}

impl NetSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.depth_widths.is_empty() || self.pose_widths.is_empty() {
            return bad("both encoders need at least one layer".into());
        }
        if self.depth_widths.iter().chain(&self.pose_widths).any(|&w| w == 0) {
            return bad("layer widths must be positive".into());
        }
        if self.kernel % 2 == 0 {
            return bad(format!("kernel size {} must be odd", self.kernel));
        }
        if self.num_scales == 0 || self.num_scales > self.depth_widths.len() {
            return bad(format!(
                "{} output scales with a {}-layer depth encoder",
                self.num_scales,
                self.depth_widths.len()
            ));
        }
        if self.masks && self.num_scales > self.pose_widths.len() {
            return bad("mask heads need a pose encoder at least as deep as the scale count".into());
        }
        if self.num_sources == 0 {
            return bad("at least one source frame is required".into());
        }
        Ok(())
    }

    pub fn edge_mode(&self) -> EdgeMode {
        EdgeMode::from_wrap(self.wrap)
    }

    /// Input sides must be divisible by this.
    pub fn divisor(&self) -> usize {
        1 << self.depth_widths.len().max(self.pose_widths.len())
    }

    pub fn check_input(&self, rows: usize, cols: usize) -> Result<()> {
        let d = self.divisor();
        if rows % d != 0 || cols % d != 0 || rows == 0 {
            return Err(Error::ShapeMismatch(format!(
                "network input {rows}x{cols} must be divisible by {d}"
            )));
        }
        Ok(())
    }

    fn depth_dec_width(&self, i: usize) -> usize {
        // width of decoder output at level i (0 = full resolution)
        self.depth_widths[i.saturating_sub(1)]
    }

    /// Names and shapes `(kh, kw, cin, cout)` of every kernel, in storage order.
    pub fn layout(&self) -> Vec<(String, [usize; 4])> {
        let k = self.kernel;
        let l = self.depth_widths.len();
        let mut out = Vec::new();
        let mut cin = 3;
        for (i, &w) in self.depth_widths.iter().enumerate() {
            out.push((format!("depth.enc{}", i + 1), [k, k, cin, w]));
            cin = w;
        }
        for i in (1..=l).rev() {
            let below = self.depth_dec_width(i);
            let skip = if i == 1 { 3 } else { self.depth_widths[i - 2] };
            out.push((
                format!("depth.dec{i}"),
                [k, k, below + skip, self.depth_dec_width(i - 1)],
            ));
        }
        for s in 0..self.num_scales {
            out.push((format!("depth.disp{s}"), [k, k, self.depth_dec_width(s), 1]));
        }
        let mut cin = 3 * (1 + self.num_sources);
        for (i, &w) in self.pose_widths.iter().enumerate() {
            out.push((format!("pose.enc{}", i + 1), [k, k, cin, w]));
            cin = w;
        }
        out.push(("pose.head".into(), [1, 1, cin, 6 * self.num_sources]));
        if self.masks {
            for s in 0..self.num_scales {
                out.push((
                    format!("pose.mask{s}"),
                    [k, k, self.pose_widths[s], 2 * self.num_sources],
                ));
            }
        }
        out
    }
}

/// Parameters of both networks.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub spec: NetSpec,
    pub names: Vec<String>,
    pub kernels: Vec<Kernel>,
}

impl Model {
    /// Glorot-uniform weights, zero biases.
    pub fn new(spec: NetSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut names = Vec::new();
        let mut kernels = Vec::new();
        for (name, [kh, kw, cin, cout]) in spec.layout() {
            kernels.push(Kernel::glorot(kh, kw, cin, cout, &mut rng)?);
            names.push(name);
        }
        Ok(Self { spec, names, kernels })
    }

    pub fn zeroed(spec: NetSpec) -> Result<Self> {
        spec.validate()?;
        let mut names = Vec::new();
        let mut kernels = Vec::new();
        for (name, [kh, kw, cin, cout]) in spec.layout() {
            kernels.push(Kernel::zeros(kh, kw, cin, cout)?);
            names.push(name);
        }
        Ok(Self { spec, names, kernels })
    }

    fn index(&self, name: &str) -> usize {
        self.names
            .iter()
            .position(|n| n == name)
            .expect("layer present in layout")
    }

    pub fn param_count(&self) -> usize {
        self.kernels.iter().map(Kernel::param_count).sum()
    }

    /// All weights then biases of each kernel, in storage order.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.param_count());
        for k in &self.kernels {
            v.extend_from_slice(&k.weights);
            v.extend_from_slice(&k.bias);
        }
        v
    }

    pub fn set_flat_params(&mut self, v: &[f64]) -> Result<()> {
        if v.len() != self.param_count() {
            return Err(Error::LengthMismatch(format!(
                "{} values for {} parameters",
                v.len(),
                self.param_count()
            )));
        }
        let mut off = 0;
        for k in self.kernels.iter_mut() {
            let nw = k.weights.len();
            k.weights.copy_from_slice(&v[off..off + nw]);
            off += nw;
            let nb = k.bias.len();
            k.bias.copy_from_slice(&v[off..off + nb]);
            off += nb;
        }
        Ok(())
    }

    /// Disparity pyramid (finest first), each map in `[lo, lo + span]`.
    pub fn depth_forward(&self, image: &Tensor, lo: f64, span: f64) -> Result<DepthOut> {
        let spec = &self.spec;
        spec.check_input(image.rows(), image.cols())?;
        if image.chans() != 3 {
            return Err(Error::ShapeMismatch(format!(
                "depth net expects 3 channels, got {}",
                image.chans()
            )));
        }
        let mode = spec.edge_mode();
        let p = &self.kernels;
        let mut g = Graph::new();
        let mut enc = vec![g.input(image.clone())];
        for i in 1..=spec.depth_widths.len() {
            let c = g.conv(p, enc[i - 1], self.index(&format!("depth.enc{i}")), 2, mode)?;
            enc.push(g.relu(c));
        }
        let l = spec.depth_widths.len();
        let mut dec = vec![0; l + 1];
        dec[l] = enc[l];
        for i in (1..=l).rev() {
            let u = g.upsample(dec[i], mode);
            let cat = g.concat(&[u, enc[i - 1]])?;
            let c = g.conv(p, cat, self.index(&format!("depth.dec{i}")), 1, mode)?;
            dec[i - 1] = g.relu(c);
        }
        let mut disparity = Vec::with_capacity(spec.num_scales);
        for s in 0..spec.num_scales {
            let c = g.conv(p, dec[s], self.index(&format!("depth.disp{s}")), 1, mode)?;
            disparity.push(g.sigmoid(c, lo, span));
        }
        Ok(DepthOut { graph: g, disparity })
    }

    /// Target-to-source poses and, when enabled, two-channel mask logits per
    /// scale and source.
    pub fn pose_forward(&self, target: &Tensor, sources: &[Tensor]) -> Result<PoseOut> {
        let spec = &self.spec;
        if sources.len() != spec.num_sources {
            return Err(Error::LengthMismatch(format!(
                "pose net built for {} sources, given {}",
                spec.num_sources,
                sources.len()
            )));
        }
        spec.check_input(target.rows(), target.cols())?;
        let mut parts = vec![target];
        parts.extend(sources.iter());
        if parts.iter().any(|t| t.chans() != 3) {
            return Err(Error::ShapeMismatch("pose net expects 3-channel images".into()));
        }
        let stack = Tensor::concat_channels(&parts)?;
        let mode = spec.edge_mode();
        let p = &self.kernels;
        let mut g = Graph::new();
        let mut enc = vec![g.input(stack)];
        for i in 1..=spec.pose_widths.len() {
            let c = g.conv(p, enc[i - 1], self.index(&format!("pose.enc{i}")), 2, mode)?;
            enc.push(g.relu(c));
        }
        let head = g.conv(p, *enc.last().unwrap(), self.index("pose.head"), 1, mode)?;
        let pose = g.mean_scale(head, POSE_SCALE);
        let mut masks = Vec::new();
        if spec.masks {
            for s in 0..spec.num_scales {
                let u = g.upsample(enc[s + 1], mode);
                masks.push(g.conv(p, u, self.index(&format!("pose.mask{s}")), 1, mode)?);
            }
        }
        Ok(PoseOut {
            graph: g,
            pose,
            masks,
            num_sources: spec.num_sources,
        })
    }
}

pub struct DepthOut {
    pub graph: Graph,
    pub disparity: Vec<NodeId>,
}

impl DepthOut {
    pub fn disparities(&self) -> Vec<Tensor> {
        self.disparity.iter().map(|&i| self.graph.value(i).clone()).collect()
    }

    /// Kernel gradients given gradients on each disparity map.
    pub fn backward(&self, model: &Model, grads: &[Tensor]) -> Result<Vec<KernelGrad>> {
        let seeds = self.disparity.iter().copied().zip(grads.iter().cloned()).collect();
        Ok(self.graph.backward(&model.kernels, seeds)?.0)
    }
}

pub struct PoseOut {
    pub graph: Graph,
    pub pose: NodeId,
    pub masks: Vec<NodeId>,
    num_sources: usize,
}

impl PoseOut {
    pub fn poses(&self) -> Vec<Pose6> {
        self.graph
            .value(self.pose)
            .data()
            .chunks(6)
            .map(Pose6::from_slice)
            .collect()
    }

    /// `[scale][source]` two-channel logits, if the model has mask heads.
    pub fn mask_logits(&self) -> Result<Option<Vec<Vec<Tensor>>>> {
        if self.masks.is_empty() {
            return Ok(None);
        }
        let counts = vec![2; self.num_sources];
        let v = self
            .masks
            .iter()
            .map(|&m| self.graph.value(m).split_channels(&counts))
            .collect::<Result<_>>()?;
        Ok(Some(v))
    }

    pub fn backward(
        &self,
        model: &Model,
        pose_grads: &[[f64; 6]],
        mask_grads: Option<&[Vec<Tensor>]>,
    ) -> Result<Vec<KernelGrad>> {
        let flat: Vec<f64> = pose_grads.iter().flatten().copied().collect();
        let mut seeds = vec![(self.pose, Tensor::from_vec(1, 1, flat.len(), flat)?)];
        if let Some(mg) = mask_grads {
            for (&node, per_src) in self.masks.iter().zip(mg) {
                let refs: Vec<&Tensor> = per_src.iter().collect();
                seeds.push((node, Tensor::concat_channels(&refs)?));
            }
        }
        Ok(self.graph.backward(&model.kernels, seeds)?.0)
    }
}

/// Flattens per-kernel gradients in [`Model::flat_params`] order.
pub fn flatten_grads(grads: &[KernelGrad]) -> Vec<f64> {
    let mut v = Vec::new();
    for g in grads {
        v.extend_from_slice(&g.weights);
        v.extend_from_slice(&g.bias);
    }
    v
}

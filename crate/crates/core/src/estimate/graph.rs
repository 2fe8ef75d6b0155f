//! Minimal reverse-mode tape over [`Tensor`] values with convolution
//! parameters held outside the tape.

use crate::error::{Error, Result};
use crate::synth::sigmoid;
use crate::tensor::{
    conv2d, conv2d_backward, upsample_double, upsample_double_backward, EdgeMode, Kernel, KernelGrad, Tensor,
};

pub type NodeId = usize;

#[derive(Debug, Clone)]
enum Op {
    Input,
    Conv {
        x: NodeId,
        k: usize,
        stride: usize,
        mode: EdgeMode,
    },
    Relu(NodeId),
    /// `lo + span * sigmoid(x)`
    Sigmoid {
        x: NodeId,
        lo: f64,
        span: f64,
    },
    Upsample {
        x: NodeId,
        mode: EdgeMode,
    },
    Concat(Vec<NodeId>),
    /// Spatial mean times `scale`, giving a `1 × 1 × C` tensor.
    MeanScale {
        x: NodeId,
        scale: f64,
    },
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Tensor,
}

/// Records a forward pass so that [`Graph::backward`] can replay it.
#[derive(Debug, Clone, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, op: Op, value: Tensor) -> NodeId {
        self.nodes.push(Node { op, value });
        self.nodes.len() - 1
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn input(&mut self, t: Tensor) -> NodeId {
        self.push(Op::Input, t)
    }

    pub fn conv(&mut self, params: &[Kernel], x: NodeId, k: usize, stride: usize, mode: EdgeMode) -> Result<NodeId> {
        let v = conv2d(self.value(x), &params[k], stride, mode)?;
        Ok(self.push(Op::Conv { x, k, stride, mode }, v))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).map(|a| a.max(0.0));
        self.push(Op::Relu(x), v)
    }

    pub fn sigmoid(&mut self, x: NodeId, lo: f64, span: f64) -> NodeId {
        let v = self.value(x).map(|a| lo + span * sigmoid(a));
        self.push(Op::Sigmoid { x, lo, span }, v)
    }

    pub fn upsample(&mut self, x: NodeId, mode: EdgeMode) -> NodeId {
        let v = upsample_double(self.value(x), mode);
        self.push(Op::Upsample { x, mode }, v)
    }

    pub fn concat(&mut self, xs: &[NodeId]) -> Result<NodeId> {
        let parts: Vec<&Tensor> = xs.iter().map(|&i| self.value(i)).collect();
        let v = Tensor::concat_channels(&parts)?;
        Ok(self.push(Op::Concat(xs.to_vec()), v))
    }

    pub fn mean_scale(&mut self, x: NodeId, scale: f64) -> NodeId {
        let t = self.value(x);
        let n = (t.rows() * t.cols()) as f64;
        let mut v = Tensor::zeros(1, 1, t.chans());
        for r in 0..t.rows() {
            for c in 0..t.cols() {
                for (o, a) in v.data_mut().iter_mut().zip(t.pixel(r, c)) {
                    *o += a;
                }
            }
        }
        v.scale_in_place(scale / n);
        self.push(Op::MeanScale { x, scale }, v)
    }

    /// Propagates `seeds` (upstream gradients on chosen nodes) back through
    /// the tape. Returns per-kernel gradients and per-node gradients.
    pub fn backward(
        &self,
        params: &[Kernel],
        seeds: Vec<(NodeId, Tensor)>,
    ) -> Result<(Vec<KernelGrad>, Vec<Option<Tensor>>)> {
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        for (id, g) in seeds {
            if g.shape() != self.value(id).shape() {
                return Err(Error::ShapeMismatch(format!(
                    "seed gradient {:?} for node of shape {:?}",
                    g.shape(),
                    self.value(id).shape()
                )));
            }
            accumulate(&mut grads[id], g)?;
        }
        let mut kgrads: Vec<KernelGrad> = params.iter().map(KernelGrad::zeros_like).collect();
        for id in (0..self.nodes.len()).rev() {
            let Some(g) = grads[id].clone() else { continue };
            match &self.nodes[id].op {
                Op::Input => {}
                Op::Conv { x, k, stride, mode } => {
                    let (gx, kg) = conv2d_backward(self.value(*x), &params[*k], *stride, *mode, &g)?;
                    kgrads[*k].add_assign(&kg);
                    accumulate(&mut grads[*x], gx)?;
                }
                Op::Relu(x) => {
                    let gx = self.value(*x).zip_map(&g, |a, b| if a > 0.0 { b } else { 0.0 })?;
                    accumulate(&mut grads[*x], gx)?;
                }
                Op::Sigmoid { x, lo, span } => {
                    let out = &self.nodes[id].value;
                    let gx = out.zip_map(&g, |y, b| {
                        let s = (y - lo) / span;
                        b * span * s * (1.0 - s)
                    })?;
                    accumulate(&mut grads[*x], gx)?;
                }
                Op::Upsample { x, mode } => {
                    let gx = upsample_double_backward(&g, *mode)?;
                    accumulate(&mut grads[*x], gx)?;
                }
                Op::Concat(xs) => {
                    let counts: Vec<usize> = xs.iter().map(|&i| self.value(i).chans()).collect();
                    for (&i, part) in xs.iter().zip(g.split_channels(&counts)?) {
                        accumulate(&mut grads[i], part)?;
                    }
                }
                Op::MeanScale { x, scale } => {
                    let xv = self.value(*x);
                    let n = (xv.rows() * xv.cols()) as f64;
                    let gx = Tensor::from_fn(xv.rows(), xv.cols(), xv.chans(), |_, _, k| g.get(0, 0, k) * scale / n);
                    accumulate(&mut grads[*x], gx)?;
                }
            }
        }
        Ok((kgrads, grads))
    }
}

fn accumulate(slot: &mut Option<Tensor>, g: Tensor) -> Result<()> {
    match slot {
        Some(t) => t.add_assign(&g),
        None => {
            *slot = Some(g);
            Ok(())
        }
    }
}

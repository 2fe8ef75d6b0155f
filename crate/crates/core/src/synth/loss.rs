//! Photometric, smoothness and explainability terms. Every term is a mean so
//! weights do not depend on resolution.

use crate::error::{Error, Result};
use crate::tensor::{
    dxx, dxx_adjoint, dxy, dxy_adjoint, dyx, dyx_adjoint, dyy, dyy_adjoint, grad_x, grad_x_adjoint, grad_y,
    grad_y_adjoint, EdgeMode, Tensor,
};

#[inline]
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn check_single_channel(t: &Tensor, what: &str) -> Result<()> {
    if t.chans() != 1 {
        return Err(Error::ShapeMismatch(format!(
            "{what} must be single-channel, has {} channels",
            t.chans()
        )));
    }
    Ok(())
}

fn check_spatial(a: &Tensor, b: &Tensor, what: &str) -> Result<()> {
    if a.rows() != b.rows() || a.cols() != b.cols() {
        return Err(Error::ShapeMismatch(format!(
            "{what}: {}x{} vs {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    Ok(())
}

/// Gradient of the photometric term.
#[derive(Debug, Clone)]
pub struct PhotometricGrad {
    pub value: f64,
    pub proj: Tensor,
    pub weights: Option<Tensor>,
}

fn photometric_impl(
    proj: &Tensor,
    target: &Tensor,
    weights: Option<&Tensor>,
    valid: &Tensor,
    want_grad: bool,
) -> Result<PhotometricGrad> {
    proj.check_same_shape(target, "photometric images")?;
    check_single_channel(valid, "validity mask")?;
    check_spatial(proj, valid, "validity mask")?;
    if let Some(w) = weights {
        check_single_channel(w, "mask weights")?;
        check_spatial(proj, w, "mask weights")?;
    }
    let n_valid = valid.data().iter().filter(|&&v| v != 0.0).count();
    if n_valid == 0 {
        return Err(Error::EmptyMask);
    }
    let chans = proj.chans();
    let norm = 1.0 / (n_valid * chans) as f64;
    let mut value = 0.0;
    let mut gproj = if want_grad {
        Tensor::zeros(proj.rows(), proj.cols(), chans)
    } else {
        Tensor::zeros(0, 0, 0)
    };
    let mut gw = match (want_grad, weights) {
        (true, Some(w)) => Some(Tensor::zeros(w.rows(), w.cols(), 1)),
        _ => None,
    };
    for r in 0..proj.rows() {
        for c in 0..proj.cols() {
            if valid.get(r, c, 0) == 0.0 {
                continue;
            }
            let e = weights.map_or(1.0, |w| w.get(r, c, 0));
            let (p, t) = (proj.pixel(r, c), target.pixel(r, c));
            let mut abs_sum = 0.0;
            for k in 0..chans {
                let diff = p[k] - t[k];
                abs_sum += diff.abs();
                if want_grad {
                    gproj.add_at(r, c, k, e * sign(diff) * norm);
                }
            }
            value += e * abs_sum;
            if let Some(g) = gw.as_mut() {
                g.set(r, c, 0, abs_sum * norm);
            }
        }
    }
    Ok(PhotometricGrad {
        value: value * norm,
        proj: gproj,
        weights: gw,
    })
}

/// Mean of `E · |I_proj - I_target|` over valid pixels and channels.
pub fn photometric_loss(proj: &Tensor, target: &Tensor, weights: Option<&Tensor>, valid: &Tensor) -> Result<f64> {
    Ok(photometric_impl(proj, target, weights, valid, false)?.value)
}

pub fn photometric_loss_grad(
    proj: &Tensor,
    target: &Tensor,
    weights: Option<&Tensor>,
    valid: &Tensor,
) -> Result<PhotometricGrad> {
    photometric_impl(proj, target, weights, valid, true)
}

/// Which depth regulariser the loss applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmoothMode {
    /// Unweighted `|Dxx| + |Dxy| + |Dyx| + |Dyy|`, weight `λ_s`.
    SecondOrder,
    /// Second differences attenuated at image edges, weight `λ_m`.
    ImageAware,
    /// First differences attenuated at image edges, weight `λ_m`.
    ImageAwareFirstOrder,
}

impl SmoothMode {
    pub fn name(&self) -> &'static str {
        match self {
            SmoothMode::SecondOrder => "second_order",
            SmoothMode::ImageAware => "image_aware",
            SmoothMode::ImageAwareFirstOrder => "image_aware_first_order",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "second_order" => Some(SmoothMode::SecondOrder),
            "image_aware" => Some(SmoothMode::ImageAware),
            "image_aware_first_order" => Some(SmoothMode::ImageAwareFirstOrder),
            _ => None,
        }
    }
}

type Lin = fn(&Tensor, EdgeMode) -> Tensor;

fn lin_grad_x(t: &Tensor, m: EdgeMode) -> Tensor {
    grad_x(t, m)
}
fn lin_grad_x_adj(t: &Tensor, m: EdgeMode) -> Tensor {
    grad_x_adjoint(t, m)
}
fn lin_grad_y(t: &Tensor, _: EdgeMode) -> Tensor {
    grad_y(t)
}
fn lin_grad_y_adj(t: &Tensor, _: EdgeMode) -> Tensor {
    grad_y_adjoint(t)
}
fn lin_dyy(t: &Tensor, _: EdgeMode) -> Tensor {
    dyy(t)
}
fn lin_dyy_adj(t: &Tensor, _: EdgeMode) -> Tensor {
    dyy_adjoint(t)
}

/// `(forward, adjoint)` pairs of the difference operators each mode sums.
fn operators(mode: SmoothMode) -> Vec<(Lin, Lin)> {
    match mode {
        SmoothMode::SecondOrder => vec![
            (dxx, dxx_adjoint),
            (dxy, dxy_adjoint),
            (dyx, dyx_adjoint),
            (lin_dyy, lin_dyy_adj),
        ],
        SmoothMode::ImageAware => vec![(dxx, dxx_adjoint), (dxy, dxy_adjoint), (lin_dyy, lin_dyy_adj)],
        SmoothMode::ImageAwareFirstOrder => {
            vec![(lin_grad_x, lin_grad_x_adj), (lin_grad_y, lin_grad_y_adj)]
        }
    }
}

/// Per-pixel attenuation `exp(-g)`, `g` the channel mean of `|∂x I| + |∂y I|`.
pub fn edge_weights(image: &Tensor, edges: EdgeMode) -> Tensor {
    let gx = grad_x(image, edges);
    let gy = grad_y(image);
    let chans = image.chans().max(1) as f64;
    Tensor::from_fn(image.rows(), image.cols(), 1, |r, c, _| {
        let g: f64 = gx
            .pixel(r, c)
            .iter()
            .zip(gy.pixel(r, c))
            .map(|(a, b)| a.abs() + b.abs())
            .sum();
        (-g / chans).exp()
    })
}

fn weighted_smooth(
    disp: &Tensor,
    weights: Option<&Tensor>,
    mode: SmoothMode,
    edges: EdgeMode,
    want_grad: bool,
) -> Result<(f64, Option<Tensor>)> {
    check_single_channel(disp, "disparity")?;
    let n = disp.len();
    if n == 0 {
        return Ok((0.0, want_grad.then(|| disp.clone())));
    }
    let norm = 1.0 / n as f64;
    let mut value = 0.0;
    let mut grad = want_grad.then(|| Tensor::zeros(disp.rows(), disp.cols(), 1));
    for (fwd, adj) in operators(mode) {
        let d = fwd(disp, edges);
        let mut g = Tensor::zeros(d.rows(), d.cols(), 1);
        for (idx, &v) in d.data().iter().enumerate() {
            let w = weights.map_or(1.0, |w| w.data()[idx]);
            value += w * v.abs();
            if want_grad {
                g.data_mut()[idx] = w * sign(v) * norm;
            }
        }
        if let Some(acc) = grad.as_mut() {
            acc.add_assign(&adj(&g, edges))?;
        }
    }
    Ok((value * norm, grad))
}

/// Mean of `|Dxx| + |Dxy| + |Dyx| + |Dyy|` over the disparity map.
pub fn smooth_loss_second_order(disp: &Tensor, edges: EdgeMode) -> Result<f64> {
    Ok(weighted_smooth(disp, None, SmoothMode::SecondOrder, edges, false)?.0)
}

pub fn smooth_loss_second_order_grad(disp: &Tensor, edges: EdgeMode) -> Result<(f64, Tensor)> {
    let (v, g) = weighted_smooth(disp, None, SmoothMode::SecondOrder, edges, true)?;
    Ok((v, g.expect("gradient requested")))
}

fn image_aware_mode(first_order: bool) -> SmoothMode {
    if first_order {
        SmoothMode::ImageAwareFirstOrder
    } else {
        SmoothMode::ImageAware
    }
}

/// Edge-attenuated smoothness: `mean(exp(-g) · (|Dxx| + |Dxy| + |Dyy|))`, or
/// the first-difference variant when `first_order` is set.
pub fn smooth_loss_image_aware(disp: &Tensor, image: &Tensor, edges: EdgeMode, first_order: bool) -> Result<f64> {
    check_spatial(disp, image, "image-aware smoothness")?;
    let w = edge_weights(image, edges);
    Ok(weighted_smooth(disp, Some(&w), image_aware_mode(first_order), edges, false)?.0)
}

pub fn smooth_loss_image_aware_grad(
    disp: &Tensor,
    image: &Tensor,
    edges: EdgeMode,
    first_order: bool,
) -> Result<(f64, Tensor)> {
    check_spatial(disp, image, "image-aware smoothness")?;
    let w = edge_weights(image, edges);
    let (v, g) = weighted_smooth(disp, Some(&w), image_aware_mode(first_order), edges, true)?;
    Ok((v, g.expect("gradient requested")))
}

/// Smoothness term selected by `mode`; the image is ignored for
/// [`SmoothMode::SecondOrder`].
pub fn smooth_loss_grad(mode: SmoothMode, disp: &Tensor, image: &Tensor, edges: EdgeMode) -> Result<(f64, Tensor)> {
    match mode {
        SmoothMode::SecondOrder => smooth_loss_second_order_grad(disp, edges),
        SmoothMode::ImageAware => smooth_loss_image_aware_grad(disp, image, edges, false),
        SmoothMode::ImageAwareFirstOrder => smooth_loss_image_aware_grad(disp, image, edges, true),
    }
}

fn check_logits(logits: &Tensor) -> Result<()> {
    if logits.chans() != 2 {
        return Err(Error::ShapeMismatch(format!(
            "mask logits need 2 channels, got {}",
            logits.chans()
        )));
    }
    Ok(())
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^{-z})` without overflow.
#[inline]
fn softplus_neg(z: f64) -> f64 {
    if z > 0.0 {
        (-z).exp().ln_1p()
    } else {
        -z + z.exp().ln_1p()
    }
}

/// Probability of the "explained" class (channel 0) under a two-way softmax.
pub fn mask_weights(logits: &Tensor) -> Result<Tensor> {
    check_logits(logits)?;
    Ok(Tensor::from_fn(logits.rows(), logits.cols(), 1, |r, c, _| {
        let px = logits.pixel(r, c);
        sigmoid(px[0] - px[1])
    }))
}

/// Backward of [`mask_weights`].
pub fn mask_weights_backward(logits: &Tensor, grad_weights: &Tensor) -> Result<Tensor> {
    check_logits(logits)?;
    check_spatial(logits, grad_weights, "mask weight gradient")?;
    let mut out = Tensor::zeros(logits.rows(), logits.cols(), 2);
    for r in 0..logits.rows() {
        for c in 0..logits.cols() {
            let px = logits.pixel(r, c);
            let w = sigmoid(px[0] - px[1]);
            let g = grad_weights.get(r, c, 0) * w * (1.0 - w);
            out.set(r, c, 0, g);
            out.set(r, c, 1, -g);
        }
    }
    Ok(out)
}

/// Mean cross-entropy of the mask against the all-explained label.
pub fn explainability_loss(logits: &Tensor) -> Result<f64> {
    Ok(explainability_loss_grad(logits)?.0)
}

pub fn explainability_loss_grad(logits: &Tensor) -> Result<(f64, Tensor)> {
    check_logits(logits)?;
    let n = (logits.rows() * logits.cols()).max(1) as f64;
    let mut value = 0.0;
    let mut grad = Tensor::zeros(logits.rows(), logits.cols(), 2);
    for r in 0..logits.rows() {
        for c in 0..logits.cols() {
            let px = logits.pixel(r, c);
            let z = px[0] - px[1];
            value += softplus_neg(z);
            let g = -sigmoid(-z) / n;
            grad.set(r, c, 0, g);
            grad.set(r, c, 1, -g);
        }
    }
    Ok((value / n, grad))
}

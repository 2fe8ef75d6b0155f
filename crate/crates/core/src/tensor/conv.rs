use rand::Rng;

use super::pad::{pad_cols, pad_cols_adjoint};
use super::{EdgeMode, Tensor};
use crate::error::{Error, Result};

/// Convolution filter bank. Weights are laid out `(k_h, k_w, in, out)` with
/// the output channel fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    pub kh: usize,
    pub kw: usize,
    pub cin: usize,
    pub cout: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Gradient of a scalar with respect to a [`Kernel`].
#[derive(Debug, Clone, PartialEq)]
pub struct KernelGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl KernelGrad {
    pub fn zeros_like(k: &Kernel) -> Self {
        Self {
            weights: vec![0.0; k.weights.len()],
            bias: vec![0.0; k.bias.len()],
        }
    }

    pub fn add_assign(&mut self, other: &KernelGrad) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
        for (a, b) in self.bias.iter_mut().zip(&other.bias) {
            *a += b;
        }
    }
}

impl Kernel {
    pub fn zeros(kh: usize, kw: usize, cin: usize, cout: usize) -> Result<Self> {
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(Error::ShapeMismatch(format!("kernel size {kh}x{kw} must be odd")));
        }
        if cin == 0 || cout == 0 {
            return Err(Error::ShapeMismatch("kernel needs at least one channel".into()));
        }
        Ok(Self {
            kh,
            kw,
            cin,
            cout,
            weights: vec![0.0; kh * kw * cin * cout],
            bias: vec![0.0; cout],
        })
    }

    pub fn from_weights(
        kh: usize,
        kw: usize,
        cin: usize,
        cout: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self> {
        let mut k = Self::zeros(kh, kw, cin, cout)?;
        if weights.len() != k.weights.len() || bias.len() != cout {
            return Err(Error::ShapeMismatch(format!(
                "kernel {kh}x{kw}x{cin}x{cout} given {} weights and {} biases",
                weights.len(),
                bias.len()
            )));
        }
        k.weights = weights;
        k.bias = bias;
        Ok(k)
    }

    /// Uniform initialisation in `±sqrt(6 / (fan_in + fan_out))`, zero bias.
    pub fn glorot(kh: usize, kw: usize, cin: usize, cout: usize, rng: &mut impl Rng) -> Result<Self> {
        let mut k = Self::zeros(kh, kw, cin, cout)?;
        let fan = (kh * kw * (cin + cout)) as f64;
        let limit = (6.0 / fan).sqrt();
        for w in k.weights.iter_mut() {
            *w = rng.gen_range(-limit..limit);
        }
        Ok(k)
    }

    #[inline]
    pub fn widx(&self, dy: usize, dx: usize, i: usize, o: usize) -> usize {
        ((dy * self.kw + dx) * self.cin + i) * self.cout + o
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

fn out_shape(input: &Tensor, kern: &Kernel, stride: usize) -> Result<(usize, usize)> {
    if stride != 1 && stride != 2 {
        return Err(Error::InvalidArgument(format!("stride {stride} not in {{1, 2}}")));
    }
    if input.chans() != kern.cin {
        return Err(Error::ShapeMismatch(format!(
            "input has {} channels, kernel expects {}",
            input.chans(),
            kern.cin
        )));
    }
    if input.cols() % stride != 0 || input.rows() % stride != 0 {
        return Err(Error::ShapeMismatch(format!(
            "{}x{} input not divisible by stride {stride}",
            input.rows(),
            input.cols()
        )));
    }
    Ok((input.rows() / stride, input.cols() / stride))
}

/// 2-D convolution with horizontal padding chosen by `mode` and zero padding
/// vertically; output size is the input size divided by `stride`.
pub fn conv2d(input: &Tensor, kern: &Kernel, stride: usize, mode: EdgeMode) -> Result<Tensor> {
    let (out_rows, out_cols) = out_shape(input, kern, stride)?;
    let (ph, pw) = ((kern.kh - 1) / 2, (kern.kw - 1) / 2);
    let padded = pad_cols(input, pw, mode)?;
    let rows = input.rows() as isize;
    let (cin, cout) = (kern.cin, kern.cout);
    let mut out = Tensor::zeros(out_rows, out_cols, cout);
    for ro in 0..out_rows {
        for co in 0..out_cols {
            let acc_start = out.index(ro, co, 0);
            let mut acc = kern.bias.clone();
            for dy in 0..kern.kh {
                let ri = (ro * stride + dy) as isize - ph as isize;
                if ri < 0 || ri >= rows {
                    continue;
                }
                for dx in 0..kern.kw {
                    let px = padded.pixel(ri as usize, co * stride + dx);
                    for (i, &v) in px.iter().enumerate().take(cin) {
                        if v == 0.0 {
                            continue;
                        }
                        let w0 = kern.widx(dy, dx, i, 0);
                        let wrow = &kern.weights[w0..w0 + cout];
                        for (a, &w) in acc.iter_mut().zip(wrow) {
                            *a += v * w;
                        }
                    }
                }
            }
            out.data_mut()[acc_start..acc_start + cout].copy_from_slice(&acc);
        }
    }
    Ok(out)
}

/// Backward of [`conv2d`]: gradients with respect to the input and the kernel.
pub fn conv2d_backward(
    input: &Tensor,
    kern: &Kernel,
    stride: usize,
    mode: EdgeMode,
    grad_out: &Tensor,
) -> Result<(Tensor, KernelGrad)> {
    let (out_rows, out_cols) = out_shape(input, kern, stride)?;
    if grad_out.shape() != (out_rows, out_cols, kern.cout) {
        return Err(Error::ShapeMismatch(format!(
            "conv upstream gradient {:?}, expected {:?}",
            grad_out.shape(),
            (out_rows, out_cols, kern.cout)
        )));
    }
    let (ph, pw) = ((kern.kh - 1) / 2, (kern.kw - 1) / 2);
    let padded = pad_cols(input, pw, mode)?;
    let rows = input.rows() as isize;
    let (cin, cout) = (kern.cin, kern.cout);
    let mut grad_padded = Tensor::zeros(padded.rows(), padded.cols(), cin);
    let mut kg = KernelGrad::zeros_like(kern);
    for ro in 0..out_rows {
        for co in 0..out_cols {
            let g = grad_out.pixel(ro, co);
            for (b, &gv) in kg.bias.iter_mut().zip(g) {
                *b += gv;
            }
            for dy in 0..kern.kh {
                let ri = (ro * stride + dy) as isize - ph as isize;
                if ri < 0 || ri >= rows {
                    continue;
                }
                let ri = ri as usize;
                for dx in 0..kern.kw {
                    let cp = co * stride + dx;
                    for i in 0..cin {
                        let v = padded.get(ri, cp, i);
                        let w0 = kern.widx(dy, dx, i, 0);
                        let wrow = &kern.weights[w0..w0 + cout];
                        let gw = &mut kg.weights[w0..w0 + cout];
                        let mut acc = 0.0;
                        for o in 0..cout {
                            gw[o] += v * g[o];
                            acc += wrow[o] * g[o];
                        }
                        grad_padded.add_at(ri, cp, i, acc);
                    }
                }
            }
        }
    }
    let grad_in = pad_cols_adjoint(&grad_padded, pw, mode)?;
    Ok((grad_in, kg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Straight transcription of the definition: every tap looks up its source
    /// pixel with explicit modular column arithmetic.
    fn naive_conv(input: &Tensor, k: &Kernel, stride: usize, mode: EdgeMode) -> Tensor {
        let (rows, cols, _) = input.shape();
        let (ph, pw) = ((k.kh - 1) as isize / 2, (k.kw - 1) as isize / 2);
        Tensor::from_fn(rows / stride, cols / stride, k.cout, |r, c, o| {
            let mut s = k.bias[o];
            for dy in 0..k.kh {
                for dx in 0..k.kw {
                    let ri = (r * stride) as isize + dy as isize - ph;
                    let mut ci = (c * stride) as isize + dx as isize - pw;
                    if ri < 0 || ri >= rows as isize {
                        continue;
                    }
                    if ci < 0 || ci >= cols as isize {
                        match mode {
                            EdgeMode::Wrap => ci = ci.rem_euclid(cols as isize),
                            EdgeMode::Bounded => continue,
                        }
                    }
                    for i in 0..k.cin {
                        s += input.get(ri as usize, ci as usize, i) * k.weights[k.widx(dy, dx, i, o)];
                    }
                }
            }
            s
        })
    }

    fn random_tensor(rng: &mut ChaCha8Rng, r: usize, c: usize, k: usize) -> Tensor {
        Tensor::from_fn(r, c, k, |_, _, _| rng.gen_range(-1.0..1.0))
    }

    fn random_kernel(rng: &mut ChaCha8Rng, kh: usize, kw: usize, cin: usize, cout: usize) -> Kernel {
        let mut k = Kernel::glorot(kh, kw, cin, cout, rng).unwrap();
        for b in k.bias.iter_mut() {
            *b = rng.gen_range(-0.5..0.5);
        }
        k
    }

    #[test]
    fn wrapped_window_sums_row() {
        let input = Tensor::from_vec(1, 3, 1, vec![1.0, 2.0, 3.0]).unwrap();
        let k = Kernel::from_weights(1, 3, 1, 1, vec![1.0; 3], vec![0.0]).unwrap();
        let out = conv2d(&input, &k, 1, EdgeMode::Wrap).unwrap();
        assert_eq!(out.data(), &[6.0, 6.0, 6.0]);
    }

    #[test]
    fn identity_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let input = random_tensor(&mut rng, 4, 6, 1);
        let k = Kernel::from_weights(1, 1, 1, 1, vec![1.0], vec![0.0]).unwrap();
        assert_eq!(conv2d(&input, &k, 1, EdgeMode::Wrap).unwrap(), input);
    }

    #[test]
    fn matches_naive_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for trial in 0..20 {
            let stride = 1 + trial % 2;
            let (kh, kw) = [(3, 3), (1, 3), (3, 5), (5, 1)][trial % 4];
            let input = random_tensor(&mut rng, 6, 8, 3);
            let k = random_kernel(&mut rng, kh, kw, 3, 4);
            for mode in [EdgeMode::Wrap, EdgeMode::Bounded] {
                let fast = conv2d(&input, &k, stride, mode).unwrap();
                let slow = naive_conv(&input, &k, stride, mode);
                let err = fast.zip_map(&slow, |a, b| (a - b).abs()).unwrap().max_abs();
                assert!(err < 1e-10, "trial {trial} mode {mode:?}: {err}");
            }
        }
    }

    #[test]
    fn circular_shift_equivariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for s in [1isize, 3, 5, -2] {
            let input = random_tensor(&mut rng, 5, 8, 2);
            let k = random_kernel(&mut rng, 3, 3, 2, 3);
            let a = conv2d(&input.roll_cols(s), &k, 1, EdgeMode::Wrap).unwrap();
            let b = conv2d(&input, &k, 1, EdgeMode::Wrap).unwrap().roll_cols(s);
            assert_eq!(a, b);
        }
        // stride 2 halves the shift
        let input = random_tensor(&mut rng, 4, 8, 2);
        let k = random_kernel(&mut rng, 3, 3, 2, 2);
        let a = conv2d(&input.roll_cols(4), &k, 2, EdgeMode::Wrap).unwrap();
        let b = conv2d(&input, &k, 2, EdgeMode::Wrap).unwrap().roll_cols(2);
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_shapes() {
        let input = Tensor::zeros(4, 6, 2);
        let k = Kernel::zeros(3, 3, 3, 1).unwrap();
        assert!(matches!(
            conv2d(&input, &k, 1, EdgeMode::Wrap),
            Err(Error::ShapeMismatch(_))
        ));
        let k = Kernel::zeros(3, 3, 2, 1).unwrap();
        assert!(conv2d(&Tensor::zeros(4, 5, 2), &k, 2, EdgeMode::Wrap).is_err());
        assert!(Kernel::zeros(2, 3, 1, 1).is_err());
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for (stride, mode) in [(1, EdgeMode::Wrap), (2, EdgeMode::Wrap), (1, EdgeMode::Bounded)] {
            let input = random_tensor(&mut rng, 6, 8, 2);
            let mut k = random_kernel(&mut rng, 3, 3, 2, 3);
            let probe = random_tensor(&mut rng, 6 / stride, 8 / stride, 3);
            let f = |x: &Tensor, k: &Kernel| conv2d(x, k, stride, mode).unwrap().dot(&probe);
            let (gi, gk) = conv2d_backward(&input, &k, stride, mode, &probe).unwrap();
            let h = 1e-5;
            let mut x = input.clone();
            for idx in (0..x.len()).step_by(7) {
                let v = x.data()[idx];
                x.data_mut()[idx] = v + h;
                let fp = f(&x, &k);
                x.data_mut()[idx] = v - h;
                let fm = f(&x, &k);
                x.data_mut()[idx] = v;
                let num = (fp - fm) / (2.0 * h);
                assert!((num - gi.data()[idx]).abs() < 1e-8);
            }
            for idx in (0..k.weights.len()).step_by(5) {
                let v = k.weights[idx];
                k.weights[idx] = v + h;
                let fp = f(&input, &k);
                k.weights[idx] = v - h;
                let fm = f(&input, &k);
                k.weights[idx] = v;
                assert!(((fp - fm) / (2.0 * h) - gk.weights[idx]).abs() < 1e-8);
            }
            for o in 0..3 {
                let v = k.bias[o];
                k.bias[o] = v + h;
                let fp = f(&input, &k);
                k.bias[o] = v - h;
                let fm = f(&input, &k);
                k.bias[o] = v;
                assert!(((fp - fm) / (2.0 * h) - gk.bias[o]).abs() < 1e-8);
            }
        }
    }
}

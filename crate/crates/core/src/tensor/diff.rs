//! Finite differences. Horizontal operators index columns circularly in
//! [`EdgeMode::Wrap`]; everywhere else the value at a boundary row/column is a
//! copy of its nearest interior neighbour. All operators are linear, and each
//! has an explicit adjoint used for backpropagation.

use super::{EdgeMode, Tensor};

#[derive(Clone, Copy, PartialEq)]
enum Axis {
    Rows,
    Cols,
}

/// Visits every 1-D line of `t` along `axis` as `(start, stride)` into the data.
fn lines(t: &Tensor, axis: Axis) -> (usize, Vec<(usize, usize)>) {
    let (rows, cols, chans) = t.shape();
    match axis {
        Axis::Cols => {
            let mut v = Vec::with_capacity(rows * chans);
            for r in 0..rows {
                for k in 0..chans {
                    v.push((t.index(r, 0, k), chans));
                }
            }
            (cols, v)
        }
        Axis::Rows => {
            let mut v = Vec::with_capacity(cols * chans);
            for c in 0..cols {
                for k in 0..chans {
                    v.push((t.index(0, c, k), cols * chans));
                }
            }
            (rows, v)
        }
    }
}

fn first_fwd(x: &[f64], s: usize, n: usize, st: usize, wrap: bool, y: &mut [f64]) {
    if n < 2 {
        return;
    }
    let at = |i: usize| s + i * st;
    for i in 0..n - 1 {
        y[at(i)] = x[at(i + 1)] - x[at(i)];
    }
    y[at(n - 1)] = if wrap { x[at(0)] - x[at(n - 1)] } else { y[at(n - 2)] };
}

fn first_adj(g: &[f64], s: usize, n: usize, st: usize, wrap: bool, out: &mut [f64]) {
    if n < 2 {
        return;
    }
    let at = |i: usize| s + i * st;
    for i in 0..n {
        let (gi, from, to) = if i < n - 1 {
            let mut gi = g[at(i)];
            if !wrap && i == n - 2 {
                gi += g[at(n - 1)];
            }
            (gi, i, i + 1)
        } else if wrap {
            (g[at(i)], n - 1, 0)
        } else {
            continue;
        };
        out[at(to)] += gi;
        out[at(from)] -= gi;
    }
}

fn second_fwd(x: &[f64], s: usize, n: usize, st: usize, wrap: bool, y: &mut [f64]) {
    let at = |i: usize| s + i * st;
    if wrap {
        if n < 2 {
            return;
        }
        for i in 0..n {
            let prev = (i + n - 1) % n;
            let next = (i + 1) % n;
            y[at(i)] = x[at(next)] - 2.0 * x[at(i)] + x[at(prev)];
        }
    } else {
        if n < 3 {
            return;
        }
        for i in 1..n - 1 {
            y[at(i)] = x[at(i + 1)] - 2.0 * x[at(i)] + x[at(i - 1)];
        }
        y[at(0)] = y[at(1)];
        y[at(n - 1)] = y[at(n - 2)];
    }
}

fn second_adj(g: &[f64], s: usize, n: usize, st: usize, wrap: bool, out: &mut [f64]) {
    let at = |i: usize| s + i * st;
    if wrap {
        if n < 2 {
            return;
        }
        for i in 0..n {
            let gi = g[at(i)];
            let prev = (i + n - 1) % n;
            let next = (i + 1) % n;
            out[at(next)] += gi;
            out[at(i)] -= 2.0 * gi;
            out[at(prev)] += gi;
        }
    } else {
        if n < 3 {
            return;
        }
        for i in 1..n - 1 {
            let mut gi = g[at(i)];
            if i == 1 {
                gi += g[at(0)];
            }
            if i == n - 2 {
                gi += g[at(n - 1)];
            }
            out[at(i + 1)] += gi;
            out[at(i)] -= 2.0 * gi;
            out[at(i - 1)] += gi;
        }
    }
}

type LineOp = fn(&[f64], usize, usize, usize, bool, &mut [f64]);

fn along(t: &Tensor, axis: Axis, wrap: bool, op: LineOp) -> Tensor {
    let (rows, cols, chans) = t.shape();
    let mut out = Tensor::zeros(rows, cols, chans);
    let (n, ls) = lines(t, axis);
    for (start, stride) in ls {
        op(t.data(), start, n, stride, wrap, out.data_mut());
    }
    out
}

fn wraps(mode: EdgeMode) -> bool {
    mode == EdgeMode::Wrap
}

/// Forward horizontal difference `t[c+1] - t[c]`.
pub fn grad_x(t: &Tensor, mode: EdgeMode) -> Tensor {
    along(t, Axis::Cols, wraps(mode), first_fwd)
}

pub fn grad_x_adjoint(g: &Tensor, mode: EdgeMode) -> Tensor {
    along(g, Axis::Cols, wraps(mode), first_adj)
}

/// Forward vertical difference `t[r+1] - t[r]`; the last row repeats the one above.
pub fn grad_y(t: &Tensor) -> Tensor {
    along(t, Axis::Rows, false, first_fwd)
}

pub fn grad_y_adjoint(g: &Tensor) -> Tensor {
    along(g, Axis::Rows, false, first_adj)
}

/// Central second difference along columns.
pub fn dxx(t: &Tensor, mode: EdgeMode) -> Tensor {
    along(t, Axis::Cols, wraps(mode), second_fwd)
}

pub fn dxx_adjoint(g: &Tensor, mode: EdgeMode) -> Tensor {
    along(g, Axis::Cols, wraps(mode), second_adj)
}

/// Central second difference along rows.
pub fn dyy(t: &Tensor) -> Tensor {
    along(t, Axis::Rows, false, second_fwd)
}

pub fn dyy_adjoint(g: &Tensor) -> Tensor {
    along(g, Axis::Rows, false, second_adj)
}

/// Mixed difference: vertical difference of the horizontal difference.
pub fn dxy(t: &Tensor, mode: EdgeMode) -> Tensor {
    grad_y(&grad_x(t, mode))
}

pub fn dxy_adjoint(g: &Tensor, mode: EdgeMode) -> Tensor {
    grad_x_adjoint(&grad_y_adjoint(g), mode)
}

/// Mixed difference: horizontal difference of the vertical difference.
pub fn dyx(t: &Tensor, mode: EdgeMode) -> Tensor {
    grad_x(&grad_y(t), mode)
}

pub fn dyx_adjoint(g: &Tensor, mode: EdgeMode) -> Tensor {
    grad_y_adjoint(&grad_x_adjoint(g, mode))
}

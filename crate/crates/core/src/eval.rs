//! Depth accuracy metrics and snippet trajectory error.

use std::fmt;

use crate::camera::Point3;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// The seven standard depth metrics. The δ terms are fractions in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DepthMetrics {
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub rmse: f64,
    pub rmse_log: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
}

impl DepthMetrics {
    pub const HEADER: &'static str = "abs_rel sq_rel rmse rmse_log delta1 delta2 delta3";

    pub fn to_array(&self) -> [f64; 7] {
        [
            self.abs_rel,
            self.sq_rel,
            self.rmse,
            self.rmse_log,
            self.delta1,
            self.delta2,
            self.delta3,
        ]
    }

    /// Field-wise mean over several images.
    pub fn mean(all: &[DepthMetrics]) -> DepthMetrics {
        if all.is_empty() {
            return DepthMetrics::default();
        }
        let n = all.len() as f64;
        let mut acc = [0.0; 7];
        for m in all {
            for (a, v) in acc.iter_mut().zip(m.to_array()) {
                *a += v;
            }
        }
        let a = acc.map(|v| v / n);
        DepthMetrics {
            abs_rel: a[0],
            sq_rel: a[1],
            rmse: a[2],
            rmse_log: a[3],
            delta1: a[4],
            delta2: a[5],
            delta3: a[6],
        }
    }
}

impl fmt::Display for DepthMetrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "abs_rel={:.6} sq_rel={:.6} rmse={:.6} rmse_log={:.6} delta1={:.6} delta2={:.6} delta3={:.6}",
            self.abs_rel, self.sq_rel, self.rmse, self.rmse_log, self.delta1, self.delta2, self.delta3
        )
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Mask keeping ground truth inside `[min_depth, max_depth]`.
pub fn default_mask(gt: &Tensor, min_depth: f64, max_depth: f64) -> Tensor {
    gt.map(|g| if g >= min_depth && g <= max_depth { 1.0 } else { 0.0 })
}

/// Metrics of `pred` against `gt` over pixels where `mask` is nonzero,
/// optionally after scaling `pred` by `median(gt) / median(pred)`.
pub fn depth_metrics(pred: &Tensor, gt: &Tensor, mask: &Tensor, median_scale: bool) -> Result<DepthMetrics> {
    pred.check_same_shape(gt, "pred/gt depth")?;
    pred.check_same_shape(mask, "depth mask")?;
    let mut pairs = Vec::new();
    for ((&p, &g), &m) in pred.data().iter().zip(gt.data()).zip(mask.data()) {
        if m == 0.0 {
            continue;
        }
        if !(g > 0.0) {
            return Err(Error::NonPositiveDepth(g));
        }
        if !(p > 0.0) {
            return Err(Error::NonPositiveDepth(p));
        }
        pairs.push((p, g));
    }
    if pairs.is_empty() {
        return Err(Error::EmptyMask);
    }
    let scale = if median_scale {
        median(pairs.iter().map(|x| x.1).collect()) / median(pairs.iter().map(|x| x.0).collect())
    } else {
        1.0
    };
    let n = pairs.len() as f64;
    let mut acc = [0.0; 7];
    for &(p, g) in &pairs {
        let p = p * scale;
        let d = p - g;
        acc[0] += d.abs() / g;
        acc[1] += d * d / g;
        acc[2] += d * d;
        acc[3] += (p.ln() - g.ln()).powi(2);
        let ratio = (p / g).max(g / p);
        acc[4] += f64::from(ratio < 1.25);
        acc[5] += f64::from(ratio < 1.25f64.powi(2));
        acc[6] += f64::from(ratio < 1.25f64.powi(3));
    }
    Ok(DepthMetrics {
        abs_rel: acc[0] / n,
        sq_rel: acc[1] / n,
        rmse: (acc[2] / n).sqrt(),
        rmse_log: (acc[3] / n).sqrt(),
        delta1: acc[4] / n,
        delta2: acc[5] / n,
        delta3: acc[6] / n,
    })
}

/// Mean and spread of per-snippet trajectory error.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AteReport {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl fmt::Display for AteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "ate_mean={:.6} ate_std={:.6} snippets={}",
            self.mean, self.std, self.count
        )
    }
}

/// Trajectory error of one snippet after first-frame anchoring and
/// least-squares scale alignment.
pub fn snippet_ate(pred: &[Point3], gt: &[Point3]) -> Result<f64> {
    if pred.len() != gt.len() || pred.is_empty() {
        return Err(Error::LengthMismatch(format!(
            "{} predicted vs {} ground-truth positions",
            pred.len(),
            gt.len()
        )));
    }
    let p: Vec<Point3> = pred.iter().map(|v| v - pred[0]).collect();
    let g: Vec<Point3> = gt.iter().map(|v| v - gt[0]).collect();
    let num: f64 = p.iter().zip(&g).map(|(a, b)| a.dot(b)).sum();
    let den: f64 = p.iter().map(|a| a.norm_squared()).sum();
    let s = if den > 0.0 { num / den } else { 0.0 };
    Ok(p.iter().zip(&g).map(|(a, b)| (a * s - b).norm()).sum::<f64>() / p.len() as f64)
}

/// Aggregates [`snippet_ate`] over snippets (population standard deviation).
pub fn ate(pred: &[Vec<Point3>], gt: &[Vec<Point3>]) -> Result<AteReport> {
    if pred.len() != gt.len() {
        return Err(Error::LengthMismatch(format!(
            "{} predicted vs {} ground-truth snippets",
            pred.len(),
            gt.len()
        )));
    }
    let errs: Vec<f64> = pred
        .iter()
        .zip(gt)
        .map(|(p, g)| snippet_ate(p, g))
        .collect::<Result<_>>()?;
    if errs.is_empty() {
        return Ok(AteReport::default());
    }
    let n = errs.len() as f64;
    let mean = errs.iter().sum::<f64>() / n;
    let var = errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n;
    Ok(AteReport {
        mean,
        std: var.sqrt(),
        count: errs.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(v: &[f64]) -> Tensor {
        Tensor::from_vec(1, v.len(), 1, v.to_vec()).unwrap()
    }

    #[test]
    fn identical_depth_is_perfect() {
        let g = t(&[1.0, 2.0, 7.5, 30.0]);
        let m = Tensor::filled(1, 4, 1, 1.0);
        let r = depth_metrics(&g, &g, &m, true).unwrap();
        assert_eq!(r.to_array(), [0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let doubled = g.map(|v| 2.0 * v);
        let r = depth_metrics(&doubled, &g, &m, true).unwrap();
        assert!(r.to_array()[..4].iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn delta_threshold_is_strict() {
        let g = t(&[1.0, 2.0, 4.0]);
        let m = Tensor::filled(1, 3, 1, 1.0);
        let r = depth_metrics(&g.map(|v| 1.25 * v), &g, &m, false).unwrap();
        assert!((r.abs_rel - 0.25).abs() < 1e-15);
        assert_eq!((r.delta1, r.delta2, r.delta3), (0.0, 1.0, 1.0));
    }

    #[test]
    fn errors() {
        let g = t(&[1.0, 2.0]);
        assert!(matches!(
            depth_metrics(&g, &g, &Tensor::zeros(1, 2, 1), true),
            Err(Error::EmptyMask)
        ));
        assert!(matches!(
            depth_metrics(&g, &t(&[1.0, 0.0]), &Tensor::filled(1, 2, 1, 1.0), true),
            Err(Error::NonPositiveDepth(_))
        ));
        let p = vec![Point3::zeros(); 3];
        assert!(matches!(snippet_ate(&p, &p[..2]), Err(Error::LengthMismatch(_))));
    }

    #[test]
    fn ate_examples() {
        let gt = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(0.0, 0.0, 1.0),
            Point3::new(0.0, 0.0, 2.0),
        ];
        assert_eq!(snippet_ate(&gt, &gt).unwrap(), 0.0);
        let half: Vec<Point3> = gt.iter().map(|p| p * 0.5).collect();
        assert!(snippet_ate(&half, &gt).unwrap() < 1e-15);
        let zero = vec![Point3::zeros(); 3];
        assert!((snippet_ate(&zero, &gt).unwrap() - 1.0).abs() < 1e-15);
        let r = ate(&[gt.clone(), half], &[gt.clone(), gt]).unwrap();
        assert_eq!((r.mean, r.std, r.count), (0.0, 0.0, 2));
    }
}

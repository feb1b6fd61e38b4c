//! Depth metrics under scale-only or joint scale-and-shift alignment.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DepthAlignment {
    /// `D_hat = s D` with `s = median(D* / D)`.
    Scale,
    /// `D_hat = s D + b` by least squares.
    ScaleShift,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DepthReport {
    pub abs_rel: f64,
    pub delta_125: f64,
    /// Pixels excluded for non-positive ground truth (flagged, not counted).
    pub excluded: usize,
}

fn fit(pred: &[f64], gt: &[f64], mode: DepthAlignment) -> (f64, f64) {
    match mode {
        DepthAlignment::Scale => {
            let mut ratios: Vec<f64> =
                pred.iter().zip(gt).filter(|(p, _)| **p > 0.0).map(|(p, g)| g / p).collect();
            if ratios.is_empty() {
                return (1.0, 0.0);
            }
            ratios.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let n = ratios.len();
            let s = if n % 2 == 1 {
                ratios[n / 2]
            } else {
                0.5 * (ratios[n / 2 - 1] + ratios[n / 2])
            };
            (s, 0.0)
        }
        DepthAlignment::ScaleShift => {
            let n = pred.len() as f64;
            let mp = pred.iter().sum::<f64>() / n;
            let mg = gt.iter().sum::<f64>() / n;
            let mut cov = 0.0;
            let mut var = 0.0;
            for (p, g) in pred.iter().zip(gt) {
                cov += (p - mp) * (g - mg);
                var += (p - mp) * (p - mp);
            }
            if var < 1e-18 {
                (0.0, mg)
            } else {
                let s = cov / var;
                (s, mg - s * mp)
            }
        }
    }
}

/// AbsRel and the `max(r, 1/r) < 1.25` inlier fraction after alignment.
///
/// `views` partitions the stacked arrays into equal-size views; with
/// `per_sequence` the alignment is fit once over all views jointly,
/// otherwise per view.
pub fn depth_metrics(
    pred: &[f64],
    gt: &[f64],
    valid: &[bool],
    mode: DepthAlignment,
    views: usize,
    per_sequence: bool,
) -> Result<DepthReport> {
    assert_eq!(pred.len(), gt.len(), "depth lengths");
    assert_eq!(pred.len(), valid.len(), "mask length");
    assert!(views > 0 && pred.len() % views == 0, "views must evenly split the arrays");
    let chunk = pred.len() / views;
    let usable = |lo: usize, hi: usize| -> (Vec<f64>, Vec<f64>, usize) {
        let mut p = Vec::new();
        let mut g = Vec::new();
        let mut excluded = 0;
        for k in lo..hi {
            if !valid[k] {
                continue;
            }
            if gt[k] <= 0.0 {
                excluded += 1;
                continue;
            }
            p.push(pred[k]);
            g.push(gt[k]);
        }
        (p, g, excluded)
    };

    let groups: Vec<(usize, usize)> = if per_sequence {
        vec![(0, pred.len())]
    } else {
        (0..views).map(|v| (v * chunk, (v + 1) * chunk)).collect()
    };

    let mut abs_rel_sum = 0.0;
    let mut inliers = 0usize;
    let mut count = 0usize;
    let mut excluded_total = 0usize;
    for (lo, hi) in groups {
        let (p, g, excluded) = usable(lo, hi);
        excluded_total += excluded;
        if p.is_empty() {
            continue;
        }
        let (s, b) = fit(&p, &g, mode);
        for (pv, gv) in p.iter().zip(&g) {
            let d_hat = s * pv + b;
            abs_rel_sum += (d_hat - gv).abs() / gv;
            if d_hat > 0.0 {
                let r = (d_hat / gv).max(gv / d_hat);
                if r < 1.25 {
                    inliers += 1;
                }
            }
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::Degenerate("no valid overlap for depth metrics".into()));
    }
    Ok(DepthReport {
        abs_rel: abs_rel_sum / count as f64,
        delta_125: inliers as f64 / count as f64,
        excluded: excluded_total,
    })
}

//! Exact global-scale solver.
//!
//! The scale aligning predicted points to ground truth minimizes
//! `sum_k |s a_k - b_k| / z_k` over all valid coordinates. Since
//! `|s a - b| = |a| * |s - b/a|`, the minimizer is the weighted median of the
//! ratios `b_k / a_k` with weights `|a_k| / z_k`; near-zero `a_k` contribute
//! a constant and are dropped.

use crate::{Error, Result};

const COORD_EPS: f64 = 1e-12;
const SCALE_FLOOR: f64 = 1e-6;

/// Exact minimizer of the depth-weighted L1 alignment objective.
///
/// `pred` and `gt` are `n*3` coordinate arrays, `gt_z` has one positive depth
/// per point, `mask` selects valid points. Ties in the weighted median break
/// toward the smaller ratio. The result is clamped to `>= 1e-6`.
pub fn roe_scale(pred: &[f64], gt: &[f64], gt_z: &[f64], mask: &[bool]) -> Result<f64> {
    let n = gt_z.len();
    assert_eq!(pred.len(), n * 3, "pred coordinate count");
    assert_eq!(gt.len(), n * 3, "gt coordinate count");
    assert_eq!(mask.len(), n, "mask length");
    let mut terms: Vec<(f64, f64)> = Vec::with_capacity(n * 3);
    for k in 0..n {
        if !mask[k] {
            continue;
        }
        let z = gt_z[k];
        debug_assert!(z > 0.0, "gt_z must be positive on the mask");
        for c in 0..3 {
            let a = pred[k * 3 + c];
            if a.abs() < COORD_EPS {
                continue;
            }
            terms.push((gt[k * 3 + c] / a, a.abs() / z));
        }
    }
    if terms.is_empty() {
        return Err(Error::Degenerate("no valid coordinates for scale alignment".into()));
    }
    Ok(weighted_median(&mut terms).max(SCALE_FLOOR))
}

/// First ratio (in sorted order) whose cumulative weight reaches half the
/// total.
pub(crate) fn weighted_median(terms: &mut [(f64, f64)]) -> f64 {
    terms.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite ratios"));
    let total: f64 = terms.iter().map(|t| t.1).sum();
    let half = total / 2.0;
    let mut acc = 0.0;
    for &(ratio, weight) in terms.iter() {
        acc += weight;
        if acc >= half {
            return ratio;
        }
    }
    terms.last().expect("nonempty").0
}

//! Trajectory error and pairwise pose accuracy.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::geometry::{relative_camera, relative_pose, umeyama_align, vec3, Camera};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TrajectoryReport {
    /// RMSE of camera-center distances after Sim(3) alignment.
    pub ate_rmse: f64,
    /// Mean translation error of consecutive relative poses (scale-aligned).
    pub rpe_trans: f64,
    /// Mean geodesic rotation error of consecutive relative poses, degrees.
    pub rpe_rot: f64,
}

/// ATE after Sim(3) Umeyama alignment of camera centers, plus RPE over
/// consecutive frame pairs. Depends on view order through RPE.
pub fn ate_rpe(pred: &[Camera], gt: &[Camera]) -> Result<TrajectoryReport> {
    if pred.len() != gt.len() {
        return Err(Error::Usage(format!(
            "trajectory lengths differ: {} vs {}",
            pred.len(),
            gt.len()
        )));
    }
    if pred.len() < 2 {
        return Err(Error::Degenerate("trajectory needs at least 2 poses".into()));
    }
    let src: Vec<[f64; 3]> = pred.iter().map(|c| c.center()).collect();
    let dst: Vec<[f64; 3]> = gt.iter().map(|c| c.center()).collect();
    let sim = umeyama_align(&src, &dst, true)?;
    let mut sq = 0.0;
    for (s, d) in src.iter().zip(&dst) {
        let e = vec3::sub(sim.apply(*s), *d);
        sq += vec3::dot(e, e);
    }
    let ate_rmse = (sq / src.len() as f64).sqrt();

    let mut rpe_trans = 0.0;
    let mut rpe_rot = 0.0;
    let pairs = pred.len() - 1;
    for i in 0..pairs {
        let rel_p = relative_camera(&pred[i], &pred[i + 1]);
        let rel_g = relative_camera(&gt[i], &gt[i + 1]);
        let tp = vec3::scale(rel_p.trans, sim.scale);
        rpe_trans += vec3::norm(vec3::sub(tp, rel_g.trans));
        rpe_rot += relative_pose(&rel_p, &rel_g).rot_angle_deg;
    }
    Ok(TrajectoryReport {
        ate_rmse,
        rpe_trans: rpe_trans / pairs as f64,
        rpe_rot: rpe_rot / pairs as f64,
    })
}

/// Pairwise pose AUC at angular thresholds (degrees), reported in [0,100].
///
/// For every ordered pair the error is the max of the relative-rotation
/// angle error and the relative-translation direction error; accuracy is
/// accumulated at integer-degree thresholds 1..=tau and averaged.
pub fn pose_auc(
    pred: &[Camera],
    gt: &[Camera],
    thresholds: &[u32],
) -> Result<BTreeMap<u32, f64>> {
    if pred.len() != gt.len() {
        return Err(Error::Usage(format!(
            "pose set lengths differ: {} vs {}",
            pred.len(),
            gt.len()
        )));
    }
    if pred.len() < 2 {
        return Err(Error::Degenerate("pose AUC needs at least 2 views".into()));
    }
    let n = pred.len();
    let mut errors = Vec::with_capacity(n * (n - 1));
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let rel_p = relative_camera(&pred[i], &pred[j]);
            let rel_g = relative_camera(&gt[i], &gt[j]);
            let delta = relative_pose(&rel_p, &rel_g);
            errors.push(delta.rot_angle_deg.max(delta.trans_dir_angle_deg));
        }
    }
    let mut out = BTreeMap::new();
    for &tau in thresholds {
        let mut acc = 0.0;
        for t in 1..=tau {
            let frac =
                errors.iter().filter(|&&e| e < t as f64).count() as f64 / errors.len() as f64;
            acc += frac;
        }
        out.insert(tau, 100.0 * acc / tau as f64);
    }
    Ok(out)
}

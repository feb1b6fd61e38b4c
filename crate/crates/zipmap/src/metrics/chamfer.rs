//! Chamfer accuracy/completeness/normal-consistency with ICP refinement.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{umeyama_align, vec3, Sim3};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PointCloudReport {
    pub acc_mean: f64,
    pub acc_median: f64,
    pub comp_mean: f64,
    pub comp_median: f64,
    pub nc_mean: f64,
    pub nc_median: f64,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Index of the nearest point in `cloud` for each query point (brute force,
/// deterministic regardless of thread count).
fn nearest_indices(queries: &[[f64; 3]], cloud: &[[f64; 3]]) -> Vec<usize> {
    queries
        .par_iter()
        .map(|q| {
            let mut best = (f64::INFINITY, 0usize);
            for (i, p) in cloud.iter().enumerate() {
                let d = vec3::sub(*q, *p);
                let dd = vec3::dot(d, d);
                if dd < best.0 {
                    best = (dd, i);
                }
            }
            best.1
        })
        .collect()
}

/// Chamfer metrics after optional matched-subset initialization and a fixed
/// number of point-to-point ICP iterations (nearest neighbor + Umeyama with
/// scale, no trimming).
///
/// `matched` gives index pairs (pred_idx, gt_idx) with known correspondence
/// for the initial alignment; pass an empty slice to start from identity.
pub fn chamfer_metrics(
    pred: &[[f64; 3]],
    pred_normals: &[[f64; 3]],
    gt: &[[f64; 3]],
    gt_normals: &[[f64; 3]],
    icp_iters: usize,
    matched: &[(usize, usize)],
) -> Result<PointCloudReport> {
    if pred.is_empty() || gt.is_empty() {
        return Err(Error::Usage("chamfer on an empty cloud".into()));
    }
    assert_eq!(pred.len(), pred_normals.len(), "pred normals count");
    assert_eq!(gt.len(), gt_normals.len(), "gt normals count");

    let mut cur: Vec<[f64; 3]> = pred.to_vec();
    let mut cur_n: Vec<[f64; 3]> = pred_normals.to_vec();
    let apply = |sim: &Sim3, pts: &mut Vec<[f64; 3]>, normals: &mut Vec<[f64; 3]>| {
        for p in pts.iter_mut() {
            *p = sim.apply(*p);
        }
        for n in normals.iter_mut() {
            *n = sim.rotate(*n);
        }
    };
    if matched.len() >= 3 {
        let src: Vec<[f64; 3]> = matched.iter().map(|&(i, _)| pred[i]).collect();
        let dst: Vec<[f64; 3]> = matched.iter().map(|&(_, j)| gt[j]).collect();
        if let Ok(sim) = umeyama_align(&src, &dst, true) {
            apply(&sim, &mut cur, &mut cur_n);
        }
    }
    for _ in 0..icp_iters {
        let nn = nearest_indices(&cur, gt);
        let dst: Vec<[f64; 3]> = nn.iter().map(|&j| gt[j]).collect();
        match umeyama_align(&cur, &dst, true) {
            Ok(sim) => apply(&sim, &mut cur, &mut cur_n),
            Err(_) => break, // degenerate correspondence set; keep best so far
        }
    }

    let nn_pred = nearest_indices(&cur, gt);
    let nn_gt = nearest_indices(gt, &cur);
    let mut acc: Vec<f64> = cur
        .iter()
        .zip(&nn_pred)
        .map(|(p, &j)| vec3::norm(vec3::sub(*p, gt[j])))
        .collect();
    let mut comp: Vec<f64> = gt
        .iter()
        .zip(&nn_gt)
        .map(|(g, &i)| vec3::norm(vec3::sub(*g, cur[i])))
        .collect();
    // normal consistency pooled over both matching directions
    let mut nc: Vec<f64> = cur
        .iter()
        .enumerate()
        .map(|(i, _)| vec3::dot(cur_n[i], gt_normals[nn_pred[i]]).abs())
        .chain(gt.iter().enumerate().map(|(j, _)| vec3::dot(gt_normals[j], cur_n[nn_gt[j]]).abs()))
        .collect();

    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(PointCloudReport {
        acc_mean: mean(&acc),
        acc_median: median(&mut acc),
        comp_mean: mean(&comp),
        comp_median: median(&mut comp),
        nc_mean: mean(&nc),
        nc_median: median(&mut nc),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    fn random_cloud(rng: &mut Rng, n: usize) -> (Vec<[f64; 3]>, Vec<[f64; 3]>) {
        let pts: Vec<[f64; 3]> =
            (0..n).map(|_| [rng.normal(), rng.normal(), rng.normal()]).collect();
        let normals: Vec<[f64; 3]> = (0..n)
            .map(|_| vec3::normalize([rng.normal(), rng.normal(), rng.normal()]))
            .collect();
        (pts, normals)
    }

    #[test]
    fn identical_clouds_are_perfect() {
        let mut rng = Rng::new(61);
        let (pts, normals) = random_cloud(&mut rng, 60);
        let rep = chamfer_metrics(&pts, &normals, &pts, &normals, 0, &[]).unwrap();
        assert_eq!(rep.acc_mean, 0.0);
        assert_eq!(rep.comp_mean, 0.0);
        assert_eq!(rep.nc_mean, 1.0);
        assert_eq!(rep.nc_median, 1.0);
    }

    #[test]
    fn icp_removes_a_rigid_offset() {
        let mut rng = Rng::new(62);
        let (pts, normals) = random_cloud(&mut rng, 80);
        let moved: Vec<[f64; 3]> =
            pts.iter().map(|p| [p[0] + 0.05, p[1] - 0.03, p[2] + 0.04]).collect();
        let rep = chamfer_metrics(&moved, &normals, &pts, &normals, 10, &[]).unwrap();
        assert!(rep.acc_mean < 1e-4, "acc {}", rep.acc_mean);
        assert!(rep.comp_mean < 1e-4, "comp {}", rep.comp_mean);
    }

    #[test]
    fn matched_initialization_absorbs_large_similarity() {
        let mut rng = Rng::new(63);
        let (pts, normals) = random_cloud(&mut rng, 50);
        // big rotation + scale, too far for bare ICP from identity
        let q = {
            let q = [0.2, 0.9, -0.3, 0.1];
            let n: f64 = q.iter().map(|v| v * v).sum::<f64>().sqrt();
            [q[0] / n, q[1] / n, q[2] / n, q[3] / n]
        };
        let sim = Sim3 {
            scale: 2.0,
            rot: crate::geometry::quat_to_mat(q),
            trans: [3.0, -2.0, 1.0],
        };
        let moved: Vec<[f64; 3]> = pts.iter().map(|p| sim.apply(*p)).collect();
        let moved_n: Vec<[f64; 3]> = normals.iter().map(|n| sim.rotate(*n)).collect();
        let matched: Vec<(usize, usize)> = (0..pts.len()).map(|i| (i, i)).collect();
        let rep = chamfer_metrics(&moved, &moved_n, &pts, &normals, 2, &matched).unwrap();
        assert!(rep.acc_mean < 1e-6, "acc {}", rep.acc_mean);
        assert!(rep.nc_mean > 1.0 - 1e-9);
    }

    #[test]
    fn nearest_neighbors_match_naive_oracle() {
        let mut rng = Rng::new(64);
        let (a, _) = random_cloud(&mut rng, 100);
        let (b, _) = random_cloud(&mut rng, 77);
        let got = nearest_indices(&a, &b);
        for (i, q) in a.iter().enumerate() {
            let mut best = (f64::INFINITY, 0usize);
            for (j, p) in b.iter().enumerate() {
                let d = vec3::sub(*q, *p);
                let dd = vec3::dot(d, d);
                if dd < best.0 {
                    best = (dd, j);
                }
            }
            assert_eq!(got[i], best.1);
        }
    }

    #[test]
    fn empty_cloud_is_a_usage_error() {
        assert!(chamfer_metrics(&[], &[], &[[0.0; 3]], &[[1.0, 0.0, 0.0]], 1, &[]).is_err());
    }
}

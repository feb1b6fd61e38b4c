//! Metric behavior on controlled perturbations of ground truth.
//!
//! Run with: `cargo run --release --example evaluate_metrics`

use zipmap::geometry::{unproject, vec3, Camera};
use zipmap::losses::normalize_ground_truth;
use zipmap::metrics::{ate_rpe, chamfer_metrics, depth_metrics, pose_auc, DepthAlignment};
use zipmap::numerics::Rng;
use zipmap::synthdata::generate_scene;

fn main() -> zipmap::Result<()> {
    let scene = generate_scene(23, 8, 32, 32, 0.4)?;
    let normed = normalize_ground_truth(&scene)?;
    let gt_cams: Vec<Camera> = normed.views.iter().map(|v| v.camera).collect();
    let mut rng = Rng::new(8);

    for noise in [0.0, 0.01, 0.05] {
        // jitter camera centers by `noise` in the normalized gauge
        let pred: Vec<Camera> = gt_cams
            .iter()
            .map(|cam| {
                let c = cam.center();
                let nc = [
                    c[0] + noise * rng.normal(),
                    c[1] + noise * rng.normal(),
                    c[2] + noise * rng.normal(),
                ];
                let r = cam.rotation();
                let t = [
                    -(r[0][0] * nc[0] + r[0][1] * nc[1] + r[0][2] * nc[2]),
                    -(r[1][0] * nc[0] + r[1][1] * nc[1] + r[1][2] * nc[2]),
                    -(r[2][0] * nc[0] + r[2][1] * nc[1] + r[2][2] * nc[2]),
                ];
                Camera { trans: t, ..*cam }
            })
            .collect();
        let traj = ate_rpe(&pred, &gt_cams)?;
        let auc = pose_auc(&pred, &gt_cams, &[5, 15, 30])?;
        println!(
            "center noise {noise:.2}: ATE {:.4}, RPE(t) {:.4}, RPE(r) {:.2} deg, AUC@30 {:.1}",
            traj.ate_rmse, traj.rpe_trans, traj.rpe_rot, auc[&30]
        );
    }

    // chamfer between the true cloud and a depth-perturbed copy
    let (h, w) = (normed.h, normed.w);
    let mut gt_pts = Vec::new();
    let mut gt_normals = Vec::new();
    for view in &normed.views {
        let pm = unproject(&view.depth_f64(), h, w, &view.camera)?;
        for i in 0..h * w {
            if view.valid[i] {
                let p = [pm.data[i * 3], pm.data[i * 3 + 1], pm.data[i * 3 + 2]];
                gt_pts.push(view.camera.cam_to_world(p));
                gt_normals.push(vec3::normalize(p));
            }
        }
    }
    let moved: Vec<[f64; 3]> =
        gt_pts.iter().map(|p| [p[0] + 0.02, p[1] - 0.015, p[2] + 0.02]).collect();
    let rep = chamfer_metrics(&moved, &gt_normals, &gt_pts, &gt_normals, 10, &[])?;
    println!(
        "chamfer on a rigidly shifted cloud after ICP: acc {:.5}, comp {:.5}, nc {:.3}",
        rep.acc_mean, rep.comp_mean, rep.nc_mean
    );

    // depth metrics under the two alignments
    let gt_depth: Vec<f64> =
        normed.views.iter().flat_map(|v| v.depth.iter().map(|&d| d as f64)).collect();
    let valid: Vec<bool> = normed.views.iter().flat_map(|v| v.valid.iter().copied()).collect();
    let biased: Vec<f64> = gt_depth.iter().map(|d| 1.7 * d + 0.2).collect();
    for (mode, name) in
        [(DepthAlignment::Scale, "scale-only"), (DepthAlignment::ScaleShift, "scale+shift")]
    {
        let rep = depth_metrics(&biased, &gt_depth, &valid, mode, normed.views.len(), true)?;
        println!(
            "depth 1.7*D+0.2 under {name}: AbsRel {:.4}, delta<1.25 {:.3}",
            rep.abs_rel, rep.delta_125
        );
    }
    Ok(())
}

//! One-pass reconstruction: cameras, depths, points, fused cloud.
//!
//! Uses a briefly-trained tiny model so the outputs are structured rather
//! than random. Run with: `cargo run --release --example reconstruct`

use zipmap::backbone::{forward_bidirectional, BackboneMode, ModelConfig};
use zipmap::heads::{decode_all, save_prediction, write_ply};
use zipmap::losses::normalize_ground_truth;
use zipmap::metrics::{ate_rpe, depth_metrics, DepthAlignment};
use zipmap::numerics::no_grad;
use zipmap::synthdata::generate_scene;
use zipmap::trainer::{load_checkpoint, train, TrainConfig};

fn main() -> zipmap::Result<()> {
    // quick warm-up training so predictions carry signal
    let mut config = TrainConfig::toy();
    config.model = ModelConfig {
        dim: 32,
        fast_width: 64,
        layers: 2,
        patch: 8,
        heads: 2,
        ffn_mult: 2,
        head_mid: 8,
        ns_iters: 5,
        rope_base: 10_000.0,
    };
    config.lr_other = 1e-4;
    config.stage1_steps = 300;
    config.stage2_steps = 0;
    config.checkpoint_every = 0;
    let bundles: Vec<_> =
        (0..12).map(|i| generate_scene(70 + i, 6, 32, 32, 0.4)).collect::<Result<_, _>>()?;
    let out = std::env::temp_dir().join("zipmap_example_recon");
    train(&config, &bundles, &out, None, None)?;
    let ck = load_checkpoint::<f32>(out.join("checkpoint_final"))?;

    // reconstruct a held-out scene
    let scene = generate_scene(999, 6, 32, 32, 0.4)?;
    let normed = normalize_ground_truth(&scene)?;
    let imgs: Vec<&[f32]> = normed.views.iter().map(|v| v.image.as_slice()).collect();
    let pred = no_grad(|| -> zipmap::Result<_> {
        let fwd = forward_bidirectional(&ck.params, &imgs, 32, 32, &[], BackboneMode::FastWeight)?;
        decode_all(&ck.params, &fwd, 32, 32, false)
    })?;

    save_prediction(&pred, out.join("prediction"))?;
    // fuse local points through the predicted cameras
    let mut points = Vec::new();
    let mut colors = Vec::new();
    for v in 0..pred.n_views {
        let cam = pred.camera(v)?;
        let pts = pred.view_rows(&pred.points, v);
        for p in 0..32 * 32 {
            let local = [pts[p * 3] as f64, pts[p * 3 + 1] as f64, pts[p * 3 + 2] as f64];
            points.push(cam.cam_to_world(local));
            colors.push([
                imgs[v][p * 3] as f64,
                imgs[v][p * 3 + 1] as f64,
                imgs[v][p * 3 + 2] as f64,
            ]);
        }
    }
    write_ply(out.join("cloud.ply"), &points, &colors)?;

    let gt_cams: Vec<_> = normed.views.iter().map(|v| v.camera).collect();
    let traj = ate_rpe(&pred.cameras_vec()?, &gt_cams)?;
    let gt_depth: Vec<f64> =
        normed.views.iter().flat_map(|v| v.depth.iter().map(|&d| d as f64)).collect();
    let valid: Vec<bool> = normed.views.iter().flat_map(|v| v.valid.iter().copied()).collect();
    let pred_depth: Vec<f64> = pred.depth.data().iter().map(|&d| d as f64).collect();
    let depth =
        depth_metrics(&pred_depth, &gt_depth, &valid, DepthAlignment::Scale, pred.n_views, true)?;
    println!(
        "reconstructed {} views: ATE {:.3}, AbsRel {:.3}; outputs in {}",
        pred.n_views,
        traj.ate_rmse,
        depth.abs_rel,
        out.display()
    );
    Ok(())
}

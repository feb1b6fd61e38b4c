//! Compress views into the fast-weight scene state, then query it from a
//! novel camera without touching the input images again.
//!
//! Run with: `cargo run --release --example query_scene_state`

use zipmap::backbone::{forward_bidirectional, forward_query, BackboneMode, ModelConfig, ModelParams};
use zipmap::heads::{decode_query_features, write_ply};
use zipmap::losses::normalize_ground_truth;
use zipmap::numerics::{no_grad, Rng};
use zipmap::synthdata::generate_scene;
use zipmap::trainer::{conditioned_raymap, target_camera_scale};

fn main() -> zipmap::Result<()> {
    let mut rng = Rng::new(3);
    let params = ModelParams::<f32>::new(&ModelConfig::toy(), &mut rng)?;
    let scene = generate_scene(17, 8, 32, 32, 0.4)?;
    let normed = normalize_ground_truth(&scene)?;

    // build the state from the first six views, query at the last two
    let imgs: Vec<&[f32]> = normed.views[..6].iter().map(|v| v.image.as_slice()).collect();
    let input_cams: Vec<_> = normed.views[..6].iter().map(|v| v.camera).collect();
    let scale = target_camera_scale(&input_cams);
    println!("state built from {} views; query translation scale {scale:.3}", imgs.len());

    let raymaps: Vec<_> = normed.views[6..]
        .iter()
        .map(|v| conditioned_raymap(&v.camera, scale, 32, 32))
        .collect::<Result<_, _>>()?;
    let rm_refs: Vec<&_> = raymaps.iter().collect();

    let out = std::env::temp_dir().join("zipmap_example_query");
    std::fs::create_dir_all(&out).expect("temp dir");
    no_grad(|| -> zipmap::Result<()> {
        let fwd = forward_bidirectional(&params, &imgs, 32, 32, &[], BackboneMode::FastWeight)?;
        println!(
            "scene state: {} fast-weight parameters per layer x {} layers",
            params.config.state_params_per_layer(),
            fwd.state.layers.len()
        );
        let feats = forward_query(&params, &fwd.state, &rm_refs)?;
        let (rgb, depth, conf) = decode_query_features(&params, &feats, (4, 4), 32, 32);
        println!(
            "queried {} target views: rgb {:?}, depth {:?}, conf in [{:.3}, {:.3}]",
            rm_refs.len(),
            rgb.shape(),
            depth.shape(),
            conf.data().iter().fold(f32::INFINITY, |a, &b| a.min(b)),
            conf.data().iter().fold(0.0f32, |a, &b| a.max(b)),
        );
        // back-project the first queried view for visualization
        let cam = normed.views[6].camera;
        let d: Vec<f64> = depth.data()[..32 * 32].iter().map(|&v| v as f64).collect();
        let pm = zipmap::geometry::unproject(&d, 32, 32, &cam)?;
        let pts: Vec<[f64; 3]> = (0..32 * 32)
            .map(|i| cam.cam_to_world([pm.data[i * 3], pm.data[i * 3 + 1], pm.data[i * 3 + 2]]))
            .collect();
        let cols: Vec<[f64; 3]> = (0..32 * 32)
            .map(|i| {
                [rgb.data()[i * 3] as f64, rgb.data()[i * 3 + 1] as f64, rgb.data()[i * 3 + 2] as f64]
            })
            .collect();
        write_ply(out.join("queried_view.ply"), &pts, &cols)?;
        println!("queried point cloud written to {}", out.join("queried_view.ply").display());
        Ok(())
    })
}

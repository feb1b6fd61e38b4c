//! Streaming mode: the scene state is updated one view at a time, and the
//! first streamed view reproduces the bidirectional pass exactly.
//!
//! Run with: `cargo run --release --example streaming_reconstruction`

use zipmap::backbone::{
    forward_bidirectional, forward_streaming, init_streaming_state, BackboneMode, ModelConfig,
    ModelParams,
};
use zipmap::numerics::{flops_reset, flops_total, no_grad, Rng};
use zipmap::synthdata::generate_scene;

fn main() -> zipmap::Result<()> {
    let mut rng = Rng::new(11);
    let params = ModelParams::<f32>::new(&ModelConfig::toy(), &mut rng)?;
    let scene = generate_scene(5, 8, 32, 32, 0.4)?;
    let imgs: Vec<&[f32]> = scene.views.iter().map(|v| v.image.as_slice()).collect();

    no_grad(|| -> zipmap::Result<()> {
        // single-view equivalence
        let bi = forward_bidirectional(&params, &imgs[..1], 32, 32, &[], BackboneMode::FastWeight)?;
        let mut state = init_streaming_state(&params);
        let step = forward_streaming(&params, &mut state, imgs[0], 32, 32)?;
        let max_diff = bi
            .camera_tokens
            .data()
            .iter()
            .zip(step.camera_token.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        println!("first streamed view vs bidirectional: max |diff| = {max_diff:e}");

        // per-view update cost is constant -> total cost linear in views
        let mut state = init_streaming_state(&params);
        let mut per_view = Vec::new();
        for (i, img) in imgs.iter().enumerate() {
            flops_reset();
            forward_streaming(&params, &mut state, img, 32, 32)?;
            per_view.push(flops_total());
            if i % 2 == 1 {
                println!("view {i}: {:.1} MFLOP for this update", per_view[i] as f64 / 1e6);
            }
        }
        let first = per_view[0];
        assert!(per_view.iter().all(|&f| f == first), "per-view cost must not grow");
        println!("every view costs exactly {:.1} MFLOP: linear total cost", first as f64 / 1e6);
        Ok(())
    })
}

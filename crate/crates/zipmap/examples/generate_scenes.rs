//! Generate a handful of procedural scene bundles and inspect them.
//!
//! Run with: `cargo run --release --example generate_scenes`

use zipmap::synthdata::{generate_scene, save_bundle};

fn main() -> zipmap::Result<()> {
    let out = std::env::temp_dir().join("zipmap_example_scenes");
    for seed in 0..3u64 {
        let bundle = generate_scene(seed, 6, 32, 32, 0.5)?;
        let valid: usize =
            bundle.views.iter().map(|v| v.valid.iter().filter(|&&m| m).count()).sum();
        let total = bundle.n_views() * bundle.h * bundle.w;
        let depth_range = bundle
            .views
            .iter()
            .flat_map(|v| v.depth.iter().zip(&v.valid))
            .filter(|(_, &m)| m)
            .map(|(&d, _)| d)
            .fold((f32::INFINITY, 0.0f32), |acc, d| (acc.0.min(d), acc.1.max(d)));
        println!(
            "scene {seed}: {} views, {} primitives, {:.0}% valid pixels, depth in [{:.2}, {:.2}]",
            bundle.n_views(),
            bundle.geometry.primitives.len(),
            100.0 * valid as f64 / total as f64,
            depth_range.0,
            depth_range.1
        );
        save_bundle(&bundle, out.join(format!("scene_{seed:04}")))?;
    }
    println!("bundles written under {}", out.display());
    Ok(())
}

//! Short training run on a tiny model: watch the losses move.
//!
//! Run with: `cargo run --release --example train_tiny`

use zipmap::backbone::ModelConfig;
use zipmap::synthdata::generate_scene;
use zipmap::trainer::{train, TrainConfig};

fn main() -> zipmap::Result<()> {
    let config = TrainConfig {
        model: ModelConfig {
            dim: 32,
            fast_width: 64,
            layers: 2,
            patch: 8,
            heads: 2,
            ffn_mult: 2,
            head_mid: 8,
            ns_iters: 5,
            rope_base: 10_000.0,
        },
        views_min: 2,
        views_max: 3,
        lr_ttt: 1e-4,
        lr_other: 1e-4,
        weight_decay: 0.05,
        beta1: 0.9,
        beta2: 0.95,
        warmup_frac: 0.05,
        stage1_steps: 120,
        stage2_steps: 30,
        query_steps: 0,
        seed: 1,
        checkpoint_every: 0,
        log_every: 1,
    };
    let bundles: Vec<_> =
        (0..8).map(|i| generate_scene(40 + i, 6, 32, 32, 0.4)).collect::<Result<_, _>>()?;
    let out = std::env::temp_dir().join("zipmap_example_train");
    let outcome = train(&config, &bundles, &out, None, None)?;
    println!("ran {} steps; log at {}", outcome.steps_run, out.join("loss_log.jsonl").display());

    let text = std::fs::read_to_string(out.join("loss_log.jsonl")).unwrap();
    let records: Vec<serde_json::Value> =
        text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    for idx in [0, 30, 60, 90, records.len() - 1] {
        let r = &records[idx];
        println!(
            "step {:>4} stage {}  total {:>8.4}  point {:>7.4}  depth {:>7.4}  camera {:>7.4}",
            r["step"], r["stage"], r["total"], r["components"]["point"], r["components"]["depth"],
            r["components"]["camera"]
        );
    }
    Ok(())
}

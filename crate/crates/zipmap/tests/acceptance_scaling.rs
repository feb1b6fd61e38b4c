//! Timing-sensitive acceptance criteria (runtime scaling, query latency).
//!
//! These live in their own test binary so other suites cannot contend for
//! cores while they measure; the mutex keeps the two measurements apart.

use std::sync::Mutex;

use zipmap::backbone::{forward_bidirectional, forward_query, BackboneMode, ModelConfig, ModelParams};
use zipmap::cli::{run_bench, BenchArgs, BenchMode};
use zipmap::geometry::{camera_to_raymap, Camera};
use zipmap::numerics::{no_grad, Rng};

static TIMING_LOCK: Mutex<()> = Mutex::new(());

// ── criterion 6: runtime scaling benchmark ──────────────────────────

#[test]
fn acceptance_06_scaling_benchmark() {
    let _guard = TIMING_LOCK.lock().unwrap();
    let started = std::time::Instant::now();
    let out = tempfile::tempdir().unwrap();
    let base = BenchArgs {
        views: vec![8, 16, 32, 64, 128],
        mode: BenchMode::Ttt,
        repeats: 5,
        warmup: 2,
        size: 32,
        seed: 6,
        out: out.path().to_path_buf(),
    };
    let ttt = run_bench(&base).unwrap();
    assert!(
        ttt.linear.r2 > 0.98,
        "fast-weight mode linear fit R^2 = {} (need > 0.98)",
        ttt.linear.r2
    );
    let dense = run_bench(&BenchArgs { mode: BenchMode::DenseAttn, ..recreate(&base) }).unwrap();
    let ttt_ratio = ttt.median_seconds[4] / ttt.median_seconds[0];
    let dense_ratio = dense.median_seconds[4] / dense.median_seconds[0];
    assert!(
        dense_ratio >= 1.5 * ttt_ratio,
        "dense t(128)/t(8) = {dense_ratio:.2} vs fast-weight {ttt_ratio:.2}: growth gap < 1.5x"
    );
    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 600.0, "benchmark took {elapsed:.1}s (budget 600s)");
    println!(
        "ACCEPTANCE 6 PASS: fast-weight linear R^2 {:.4} > 0.98; dense growth {dense_ratio:.2}x \
         >= 1.5x fast-weight growth {ttt_ratio:.2}x ({elapsed:.1}s)",
        ttt.linear.r2
    );
}

fn recreate(args: &BenchArgs) -> BenchArgs {
    BenchArgs {
        views: args.views.clone(),
        mode: args.mode,
        repeats: args.repeats,
        warmup: args.warmup,
        size: args.size,
        seed: args.seed,
        out: args.out.clone(),
    }
}

// ── criterion 7: query latency independent of state provenance ──────

#[test]
fn acceptance_07_query_constancy() {
    let _guard = TIMING_LOCK.lock().unwrap();
    let mut rng = Rng::new(7);
    let params = ModelParams::<f32>::new(&ModelConfig::toy(), &mut rng).unwrap();
    let mut img_rng = Rng::new(77);
    let images: Vec<Vec<f32>> = (0..64)
        .map(|_| (0..32 * 32 * 3).map(|_| img_rng.uniform(0.0, 1.0) as f32).collect())
        .collect();
    let raymap = camera_to_raymap(&Camera::identity(), 32, 32).unwrap();
    let raymaps = vec![&raymap; 4];
    no_grad(|| {
        let build = |n_views: usize| {
            let refs: Vec<&[f32]> = images[..n_views].iter().map(|v| v.as_slice()).collect();
            forward_bidirectional(&params, &refs, 32, 32, &[], BackboneMode::FastWeight).unwrap()
        };
        let small = build(4);
        let large = build(64);
        // warm both paths, then interleave the timed samples so cache and
        // clock drift hit both states equally
        for _ in 0..5 {
            let _ = forward_query(&params, &small.state, &raymaps).unwrap();
            let _ = forward_query(&params, &large.state, &raymaps).unwrap();
        }
        let mut t_small = Vec::with_capacity(31);
        let mut t_large = Vec::with_capacity(31);
        for _ in 0..31 {
            let t0 = std::time::Instant::now();
            let _ = forward_query(&params, &small.state, &raymaps).unwrap();
            t_small.push(t0.elapsed().as_secs_f64());
            let t0 = std::time::Instant::now();
            let _ = forward_query(&params, &large.state, &raymaps).unwrap();
            t_large.push(t0.elapsed().as_secs_f64());
        }
        let median = |v: &mut Vec<f64>| {
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            v[v.len() / 2]
        };
        let t4 = median(&mut t_small);
        let t64 = median(&mut t_large);
        let ratio = (t4 / t64).max(t64 / t4);
        assert!(ratio < 1.2, "query latency varies {ratio:.3}x between 4- and 64-view states");
        println!(
            "ACCEPTANCE 7 PASS: apply-only query latency {:.3}ms (4-view state) vs {:.3}ms \
             (64-view state), ratio {ratio:.3} < 1.2",
            t4 * 1e3,
            t64 * 1e3
        );
    });
}

//! Runtime scaling: fast-weight updates vs the dense-attention ablation.
//!
//! Run with: `cargo run --release --example scaling_benchmark`

use zipmap::cli::{run_bench, BenchArgs, BenchMode};

fn main() -> zipmap::Result<()> {
    let out = std::env::temp_dir().join("zipmap_example_bench");
    let views = vec![8, 16, 32, 64];
    for mode in [BenchMode::Ttt, BenchMode::DenseAttn] {
        let report = run_bench(&BenchArgs {
            views: views.clone(),
            mode,
            repeats: 3,
            warmup: 2,
            size: 32,
            seed: 0,
            out: out.clone(),
        })?;
        println!("mode {mode:?}:");
        for (n, (t, f)) in
            report.views.iter().zip(report.median_seconds.iter().zip(&report.flops))
        {
            println!("  N = {n:>3}: {:>8.2} ms, {:>7.1} MFLOP", t * 1e3, *f as f64 / 1e6);
        }
        println!(
            "  linear fit R^2 = {:.4}, quadratic fit R^2 = {:.4}",
            report.linear.r2, report.quadratic.r2
        );
        report.save(out.join(format!("{mode:?}").to_lowercase()))?;
    }
    println!("reports written under {}", out.display());
    Ok(())
}

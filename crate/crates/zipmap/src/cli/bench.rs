//! Forward-only runtime scaling benchmark: fast-weight mode against the
//! dense-attention ablation, with linear/quadratic fits over the view grid.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use clap::Args;
use serde::Serialize;

use crate::backbone::{forward_bidirectional, BackboneMode, ModelConfig, ModelParams};
use crate::numerics::{flops_reset, flops_total, no_grad, Rng};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum BenchMode {
    Ttt,
    DenseAttn,
}

impl FromStr for BenchMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<BenchMode> {
        match s {
            "ttt" => Ok(BenchMode::Ttt),
            "dense-attn" => Ok(BenchMode::DenseAttn),
            other => Err(Error::Usage(format!(
                "unknown mode {other:?}; valid modes: ttt, dense-attn"
            ))),
        }
    }
}

#[derive(Args)]
pub struct BenchArgs {
    /// Comma-separated view counts.
    #[arg(long, default_value = "8,16,32,64,128", value_delimiter = ',')]
    pub views: Vec<usize>,
    #[arg(long, default_value = "ttt")]
    pub mode: BenchMode,
    /// Timed repeats per view count (minimum 3).
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
    /// Warmup passes before timing (minimum 2).
    #[arg(long, default_value_t = 2)]
    pub warmup: usize,
    /// Square input size.
    #[arg(long, default_value_t = 32)]
    pub size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory for the JSON report and CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct FitReport {
    pub coeffs: [f64; 3],
    pub r2: f64,
}

#[derive(Serialize)]
pub struct BenchReport {
    pub mode: BenchMode,
    pub views: Vec<usize>,
    pub median_seconds: Vec<f64>,
    pub flops: Vec<u64>,
    pub repeats: usize,
    pub warmup: usize,
    /// `t = a + b N` fit of the medians.
    pub linear: FitReport,
    /// `t = a + b N + c N^2` fit of the medians.
    pub quadratic: FitReport,
}

impl BenchReport {
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let jp = dir.join("bench.json");
        fs::write(&jp, serde_json::to_string_pretty(self).map_err(|e| Error::json(&jp, e))?)
            .map_err(|e| Error::io(&jp, e))?;
        let cp = dir.join("bench.csv");
        let file = fs::File::create(&cp).map_err(|e| Error::io(&cp, e))?;
        let mut w = std::io::BufWriter::new(file);
        writeln!(w, "views,median_seconds,flops").map_err(|e| Error::io(&cp, e))?;
        for i in 0..self.views.len() {
            writeln!(w, "{},{},{}", self.views[i], self.median_seconds[i], self.flops[i])
                .map_err(|e| Error::io(&cp, e))?;
        }
        w.flush().map_err(|e| Error::io(&cp, e))
    }
}

/// Ordinary least squares for `y ~ polynomial(x, degree)`, plus R^2.
pub fn polyfit(xs: &[f64], ys: &[f64], degree: usize) -> FitReport {
    assert!(degree <= 2 && xs.len() > degree);
    let k = degree + 1;
    // normal equations
    let mut ata = [[0.0f64; 3]; 3];
    let mut atb = [0.0f64; 3];
    for (&x, &y) in xs.iter().zip(ys) {
        let basis = [1.0, x, x * x];
        for i in 0..k {
            for j in 0..k {
                ata[i][j] += basis[i] * basis[j];
            }
            atb[i] += basis[i] * y;
        }
    }
    // gaussian elimination with partial pivoting
    let mut a = ata;
    let mut b = atb;
    for col in 0..k {
        let mut pivot = col;
        for r in col + 1..k {
            if a[r][col].abs() > a[pivot][col].abs() {
                pivot = r;
            }
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for r in col + 1..k {
            let f = a[r][col] / a[col][col];
            for c in col..k {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut coeffs = [0.0f64; 3];
    for row in (0..k).rev() {
        let mut acc = b[row];
        for c in row + 1..k {
            acc -= a[row][c] * coeffs[c];
        }
        coeffs[row] = acc / a[row][row];
    }
    let mean_y = ys.iter().sum::<f64>() / ys.len() as f64;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        let fit = coeffs[0] + coeffs[1] * x + coeffs[2] * x * x;
        ss_res += (y - fit) * (y - fit);
        ss_tot += (y - mean_y) * (y - mean_y);
    }
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    FitReport { coeffs, r2 }
}

pub fn run_bench(args: &BenchArgs) -> Result<BenchReport> {
    if args.repeats < 3 {
        return Err(Error::Usage("--repeats must be at least 3".into()));
    }
    if args.warmup < 2 {
        return Err(Error::Usage("--warmup must be at least 2".into()));
    }
    if args.views.len() < 3 {
        return Err(Error::Usage("need at least 3 view counts to fit scaling".into()));
    }
    let mode = match args.mode {
        BenchMode::Ttt => BackboneMode::FastWeight,
        BenchMode::DenseAttn => BackboneMode::DenseAttention,
    };
    let mut rng = Rng::new(args.seed);
    let params = ModelParams::<f32>::new(&ModelConfig::toy(), &mut rng)?;
    let max_n = *args.views.iter().max().expect("nonempty");
    let mut img_rng = Rng::new(args.seed ^ 0xBEEF);
    let images: Vec<Vec<f32>> = (0..max_n)
        .map(|_| {
            (0..args.size * args.size * 3).map(|_| img_rng.uniform(0.0, 1.0) as f32).collect()
        })
        .collect();

    let mut median_seconds = Vec::with_capacity(args.views.len());
    let mut flops = Vec::with_capacity(args.views.len());
    for &n in &args.views {
        let refs: Vec<&[f32]> = images[..n].iter().map(|v| v.as_slice()).collect();
        let run = || {
            no_grad(|| {
                forward_bidirectional(&params, &refs, args.size, args.size, &[], mode)
                    .expect("bench forward")
            })
        };
        for _ in 0..args.warmup {
            let _ = run();
        }
        flops_reset();
        let _ = run();
        flops.push(flops_total());
        let mut times = Vec::with_capacity(args.repeats);
        for _ in 0..args.repeats {
            let t0 = Instant::now();
            let _ = run();
            times.push(t0.elapsed().as_secs_f64());
        }
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        median_seconds.push(times[times.len() / 2]);
    }
    let xs: Vec<f64> = args.views.iter().map(|&n| n as f64).collect();
    let linear = polyfit(&xs, &median_seconds, 1);
    let quadratic = polyfit(&xs, &median_seconds, 2);
    Ok(BenchReport {
        mode: args.mode,
        views: args.views.clone(),
        median_seconds,
        flops,
        repeats: args.repeats,
        warmup: args.warmup,
        linear,
        quadratic,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polyfit_recovers_exact_polynomials() {
        let xs: Vec<f64> = (1..=6).map(|v| v as f64).collect();
        let lin: Vec<f64> = xs.iter().map(|x| 2.0 + 3.0 * x).collect();
        let fit = polyfit(&xs, &lin, 1);
        assert!((fit.coeffs[0] - 2.0).abs() < 1e-9);
        assert!((fit.coeffs[1] - 3.0).abs() < 1e-9);
        assert!((fit.r2 - 1.0).abs() < 1e-12);
        let quad: Vec<f64> = xs.iter().map(|x| 1.0 - x + 0.5 * x * x).collect();
        let fit = polyfit(&xs, &quad, 2);
        assert!((fit.coeffs[2] - 0.5).abs() < 1e-9);
        assert!((fit.r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quadratic_data_fits_linear_poorly() {
        let xs: Vec<f64> = (1..=8).map(|v| (v * 16) as f64).collect();
        let quad: Vec<f64> = xs.iter().map(|x| 0.001 * x * x).collect();
        let fit = polyfit(&xs, &quad, 1);
        assert!(fit.r2 < 0.98, "linear fit too good: {}", fit.r2);
    }
}

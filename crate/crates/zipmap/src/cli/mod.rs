//! Command-line surface: data generation, training, reconstruction,
//! streaming, scene-state query, evaluation and the scaling benchmark.
//!
//! `ZIPMAP_THREADS` caps internal parallelism; `--deterministic` forces a
//! single thread (all numerics are deterministic regardless — the flag only
//! removes scheduling variance from timings).

mod bench;
mod evalcmd;
mod recon;
mod state;

pub use bench::{polyfit, run_bench, BenchArgs, BenchMode, BenchReport, FitReport};
pub use evalcmd::{run_eval, EvalArgs, MetricKind};
pub use recon::{run_query, run_recon, QueryArgs, ReconArgs};
pub use state::{load_scene_state, save_scene_state, SceneState};

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Once;

use clap::{Args, Parser, Subcommand};

use crate::synthdata::{generate_scene, save_bundle};
use crate::trainer::{self, load_checkpoint, TrainConfig};
use crate::{Error, Result};

#[derive(Parser)]
#[command(name = "zipmap", version, about = "Linear-time multi-view 3D reconstruction")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run single-threaded for fully reproducible timings.
    #[arg(long, global = true)]
    deterministic: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate procedural scene bundles.
    GenData(GenDataArgs),
    /// Train stages 1 and 2 from a JSON config.
    Train(TrainArgs),
    /// Finetune the query head from an existing checkpoint.
    FinetuneQuery(FinetuneArgs),
    /// Reconstruct a scene bundle with a trained checkpoint.
    Recon(ReconArgs),
    /// Query a stored scene state at a target camera.
    Query(QueryArgs),
    /// Evaluate prediction bundles against ground truth.
    Eval(EvalArgs),
    /// Forward-only runtime scaling benchmark.
    Bench(BenchArgs),
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 4)]
    scenes: usize,
    /// Views per scene (minimum 2).
    #[arg(long, default_value_t = 8)]
    views: usize,
    /// Square image size in pixels.
    #[arg(long, default_value_t = 32)]
    size: usize,
    #[arg(long, default_value_t = 0.5)]
    difficulty: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Resume from a checkpoint directory.
    #[arg(long)]
    from: Option<PathBuf>,
    /// Run at most this many steps in this invocation.
    #[arg(long)]
    steps: Option<usize>,
}

#[derive(Args)]
struct FinetuneArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Checkpoint to start from (trained through stage 1 at least).
    #[arg(long)]
    from: PathBuf,
}

static THREAD_POOL: Once = Once::new();

fn init_threads(deterministic: bool) {
    THREAD_POOL.call_once(|| {
        let threads = if deterministic {
            1
        } else {
            std::env::var("ZIPMAP_THREADS")
                .ok()
                .and_then(|v| v.parse::<usize>().ok())
                .unwrap_or(0) // 0 = rayon default
        };
        if threads > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
        }
    });
}

/// Parse and run from `std::env::args`; maps errors to a nonzero exit code.
pub fn main_from_env() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

/// In-process entry point for tests: `args` excludes the binary name.
pub fn run_from<I, S>(args: I) -> Result<()>
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let mut full = vec!["zipmap".to_string()];
    full.extend(args.into_iter().map(Into::into));
    let cli = Cli::try_parse_from(full).map_err(|e| Error::Usage(e.to_string()))?;
    run(cli)
}

fn run(cli: Cli) -> Result<()> {
    init_threads(cli.deterministic);
    match cli.command {
        Command::GenData(args) => gen_data(args),
        Command::Train(args) => {
            let config = TrainConfig::from_json_file(&args.config)?;
            let bundles = trainer::load_dataset(&args.data)?;
            let resume = match &args.from {
                Some(dir) => Some(load_checkpoint::<f32>(dir)?),
                None => None,
            };
            let outcome = trainer::train(&config, &bundles, &args.out, resume, args.steps)?;
            println!("trained {} steps", outcome.steps_run);
            if let Some(report) = outcome.last_report {
                println!("final loss {:.6}", report.total);
            }
            Ok(())
        }
        Command::FinetuneQuery(args) => {
            let config = TrainConfig::from_json_file(&args.config)?;
            let bundles = trainer::load_dataset(&args.data)?;
            let ck = load_checkpoint::<f32>(&args.from)?;
            let outcome = trainer::finetune_query(&config, &bundles, &args.out, ck)?;
            println!("finetuned {} steps", outcome.steps_run);
            Ok(())
        }
        Command::Recon(args) => run_recon(args),
        Command::Query(args) => run_query(args),
        Command::Eval(args) => run_eval(args),
        Command::Bench(args) => {
            let report = run_bench(&args)?;
            report.save(&args.out)?;
            println!(
                "bench {:?}: linear R^2 {:.4}, quadratic R^2 {:.4}",
                report.mode, report.linear.r2, report.quadratic.r2
            );
            Ok(())
        }
    }
}

fn gen_data(args: GenDataArgs) -> Result<()> {
    if args.views < 2 {
        return Err(Error::Usage("--views must be at least 2".into()));
    }
    if args.scenes == 0 {
        return Err(Error::Usage("--scenes must be positive".into()));
    }
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    use rayon::prelude::*;
    let results: Vec<Result<()>> = (0..args.scenes)
        .into_par_iter()
        .map(|i| {
            let scene_seed = args.seed.wrapping_add(i as u64);
            let bundle =
                generate_scene(scene_seed, args.views, args.size, args.size, args.difficulty)?;
            save_bundle(&bundle, args.out.join(format!("scene_{i:04}")))
        })
        .collect();
    for r in results {
        r?;
    }
    println!("wrote {} scene bundles to {}", args.scenes, args.out.display());
    Ok(())
}

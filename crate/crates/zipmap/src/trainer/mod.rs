//! Config-driven training loop: staged camera supervision, optional
//! query-head finetuning, JSONL loss logging and resumable checkpoints.

mod checkpoint;
mod optim;

pub use checkpoint::{load_checkpoint, params_from_archive as checkpoint_params_from_archive, save_checkpoint, Checkpoint};
pub use optim::{AdamW, OptimConfig};

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::backbone::{forward_bidirectional, BackboneMode, ModelConfig, ModelParams};
use crate::geometry::{camera_to_raymap, vec3, Camera, RayMap};
use crate::heads::decode_all;
use crate::losses::{
    compute_losses, normalize_ground_truth, CameraLossMode, GroundTruth, LossConfig, LossReport,
    QueryTargets,
};
use crate::numerics::Rng;
use crate::synthdata::{load_bundle, SceneBundle};
use crate::{Error, Result};

/// Full training configuration (JSON-serializable; all keys required).
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub model: ModelConfig,
    /// Views sampled per step, inclusive range.
    pub views_min: usize,
    pub views_max: usize,
    pub lr_ttt: f64,
    pub lr_other: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub warmup_frac: f64,
    /// Steps trained with the reference-view camera loss.
    pub stage1_steps: usize,
    /// Steps trained with the alignment-invariant camera loss.
    pub stage2_steps: usize,
    /// Steps of query-head finetuning (separate entry point).
    pub query_steps: usize,
    pub seed: u64,
    pub checkpoint_every: usize,
    pub log_every: usize,
}

impl TrainConfig {
    /// Desk-scale defaults mirroring the staged schedule at ~10x reduction.
    pub fn toy() -> TrainConfig {
        TrainConfig {
            model: ModelConfig::toy(),
            views_min: 2,
            views_max: 4,
            lr_ttt: 1e-4,
            lr_other: 1e-5,
            weight_decay: 0.05,
            beta1: 0.9,
            beta2: 0.95,
            warmup_frac: 0.05,
            stage1_steps: 8000,
            stage2_steps: 4000,
            query_steps: 4000,
            seed: 0,
            checkpoint_every: 1000,
            log_every: 1,
        }
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<TrainConfig> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: TrainConfig =
            serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.views_min < 2 || self.views_max < self.views_min {
            return Err(Error::Config(format!(
                "view range [{}, {}] invalid (min 2)",
                self.views_min, self.views_max
            )));
        }
        Ok(())
    }
}

/// All scene bundles under a directory (each subdirectory is one bundle),
/// sorted by name for reproducibility.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Vec<SceneBundle>> {
    let dir = dir.as_ref();
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.join("manifest.json").exists())
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Usage(format!("no scene bundles under {}", dir.display())));
    }
    paths.iter().map(load_bundle).collect()
}

/// Per-step record in the JSONL loss log.
#[derive(Serialize, Deserialize)]
pub struct LogRecord {
    pub step: usize,
    pub stage: u8,
    pub lr_ttt: f64,
    pub lr_other: f64,
    #[serde(flatten)]
    pub report: LossReport,
}

/// Scale convention for query-camera conditioning: the largest distance of
/// any input camera center to the reference origin.
pub fn target_camera_scale(input_cams: &[Camera]) -> f64 {
    input_cams
        .iter()
        .map(|c| vec3::norm(c.center()))
        .fold(0.0, f64::max)
        .max(1e-9)
}

/// A target camera conditioned for the query path: expressed in the
/// reference frame with translation divided by [`target_camera_scale`].
pub fn conditioned_raymap(
    target: &Camera,
    scale: f64,
    h: usize,
    w: usize,
) -> Result<RayMap> {
    let t = target.trans;
    let cam = Camera { trans: [t[0] / scale, t[1] / scale, t[2] / scale], ..*target };
    camera_to_raymap(&cam, h, w)
}

fn sample_distinct(rng: &mut Rng, n: usize, k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..k.min(n) {
        let j = i + rng.index(n - i);
        idx.swap(i, j);
    }
    idx.truncate(k.min(n));
    idx.sort_unstable();
    idx
}

pub struct TrainOutcome {
    pub steps_run: usize,
    pub last_report: Option<LossReport>,
}

/// Stage-1 + stage-2 training. Writes `checkpoint_latest` at the cadence,
/// `checkpoint_final` at the end, and `loss_log.jsonl` under `out_dir`.
/// Resumes from the checkpoint's step when given one; `limit` caps how many
/// steps this invocation runs (the schedule still spans the full config).
pub fn train(
    config: &TrainConfig,
    bundles: &[SceneBundle],
    out_dir: impl AsRef<Path>,
    resume: Option<Checkpoint<f32>>,
    limit: Option<usize>,
) -> Result<TrainOutcome> {
    config.validate()?;
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let (mut params, mut optimizer, start_step) = match resume {
        Some(ck) => (ck.params, ck.optimizer, ck.step),
        None => {
            let mut rng = Rng::new(config.seed);
            let params = ModelParams::<f32>::new(&config.model, &mut rng)?;
            (params, AdamW::new(checkpoint::optim_config(config)), 0)
        }
    };
    let total = config.stage1_steps + config.stage2_steps;
    let stop = match limit {
        Some(k) => (start_step + k).min(total),
        None => total,
    };
    save_checkpoint(out_dir.join("checkpoint_latest"), start_step, config, &mut params, &optimizer)?;

    let log_path = out_dir.join("loss_log.jsonl");
    let mut log = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&log_path)
        .map_err(|e| Error::io(&log_path, e))?;

    let mut last_report = None;
    let base_rng = Rng::new(config.seed);
    for step in start_step..stop {
        let stage = if step < config.stage1_steps { 1 } else { 2 };
        let loss_cfg = LossConfig {
            camera_mode: if stage == 1 {
                CameraLossMode::ReferenceView
            } else {
                CameraLossMode::AlignmentInvariant
            },
            query: false,
            alpha: crate::losses::DEPTH_ALPHA,
        };
        let report = train_step(config, bundles, &mut params, &mut optimizer, &base_rng, step, &loss_cfg, None)?;
        if step % config.log_every == 0 || step + 1 == stop {
            let record = LogRecord {
                step,
                stage,
                lr_ttt: optimizer.lr_at(step, true),
                lr_other: optimizer.lr_at(step, false),
                report: report.clone(),
            };
            serde_json::to_writer(&mut log, &record).map_err(|e| Error::json(&log_path, e))?;
            log.write_all(b"\n").map_err(|e| Error::io(&log_path, e))?;
        }
        if config.checkpoint_every > 0 && (step + 1) % config.checkpoint_every == 0 {
            save_checkpoint(out_dir.join("checkpoint_latest"), step + 1, config, &mut params, &optimizer)?;
        }
        last_report = Some(report);
    }
    save_checkpoint(out_dir.join("checkpoint_final"), stop, config, &mut params, &optimizer)?;
    Ok(TrainOutcome { steps_run: stop.saturating_sub(start_step), last_report })
}

/// Query-head finetuning: each step splits the sampled views into inputs and
/// targets (sizes within 1), conditions target raymaps with the max-center-
/// distance scale, and adds the query losses.
pub fn finetune_query(
    config: &TrainConfig,
    bundles: &[SceneBundle],
    out_dir: impl AsRef<Path>,
    checkpoint: Checkpoint<f32>,
) -> Result<TrainOutcome> {
    config.validate()?;
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut params = checkpoint.params;
    let mut optimizer = checkpoint.optimizer;
    optimizer.config.total_steps = checkpoint.step + config.query_steps;
    let start = checkpoint.step;
    let total = start + config.query_steps;
    let log_path = out_dir.join("loss_log.jsonl");
    let mut log = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&log_path)
        .map_err(|e| Error::io(&log_path, e))?;
    let loss_cfg = LossConfig {
        camera_mode: CameraLossMode::ReferenceView,
        query: true,
        alpha: crate::losses::DEPTH_ALPHA,
    };
    let base_rng = Rng::new(config.seed ^ 0x9E3779B9);
    let mut last_report = None;
    save_checkpoint(out_dir.join("checkpoint_latest"), start, config, &mut params, &optimizer)?;
    for step in start..total {
        let report = train_step(
            config,
            bundles,
            &mut params,
            &mut optimizer,
            &base_rng,
            step,
            &loss_cfg,
            Some(()),
        )?;
        let record = LogRecord {
            step,
            stage: 3,
            lr_ttt: optimizer.lr_at(step, true),
            lr_other: optimizer.lr_at(step, false),
            report: report.clone(),
        };
        serde_json::to_writer(&mut log, &record).map_err(|e| Error::json(&log_path, e))?;
        log.write_all(b"\n").map_err(|e| Error::io(&log_path, e))?;
        if config.checkpoint_every > 0 && (step + 1) % config.checkpoint_every == 0 {
            save_checkpoint(out_dir.join("checkpoint_latest"), step + 1, config, &mut params, &optimizer)?;
        }
        last_report = Some(report);
    }
    save_checkpoint(out_dir.join("checkpoint_final"), total, config, &mut params, &optimizer)?;
    Ok(TrainOutcome { steps_run: config.query_steps, last_report })
}

#[allow(clippy::too_many_arguments)]
fn train_step(
    config: &TrainConfig,
    bundles: &[SceneBundle],
    params: &mut ModelParams<f32>,
    optimizer: &mut AdamW,
    base_rng: &Rng,
    step: usize,
    loss_cfg: &LossConfig,
    query_split: Option<()>,
) -> Result<LossReport> {
    let mut rng = base_rng.derive(step as u64);
    let bundle = &bundles[rng.index(bundles.len())];
    let want = rng.index(config.views_max - config.views_min + 1) + config.views_min;
    // query finetuning needs at least 2 inputs + 1 target
    let want = if query_split.is_some() { want.max(3) } else { want };
    let idx = sample_distinct(&mut rng, bundle.n_views(), want);
    let sub = bundle.subset(&idx);
    let normed = normalize_ground_truth(&sub)?;

    let (input_views, target_views) = match query_split {
        Some(()) => {
            let n = normed.views.len();
            let n_input = n.div_ceil(2);
            (n_input, n - n_input)
        }
        None => (normed.views.len(), 0),
    };
    let input_idx: Vec<usize> = (0..input_views).collect();
    let input_bundle = normed.subset(&input_idx);
    let gt = GroundTruth::from_bundle(&input_bundle)?;

    let imgs: Vec<&[f32]> = input_bundle.views.iter().map(|v| v.image.as_slice()).collect();
    let (raymaps, targets) = if target_views > 0 {
        let scale = target_camera_scale(&gt.cameras);
        let mut rms = Vec::new();
        let mut rgb = Vec::new();
        let mut depth = Vec::new();
        let mut mask = Vec::new();
        for view in &normed.views[input_views..] {
            rms.push(conditioned_raymap(&view.camera, scale, normed.h, normed.w)?);
            rgb.extend(view.image.iter().map(|&v| v as f64));
            depth.extend(view.depth.iter().map(|&v| v as f64));
            mask.extend(view.valid.iter().copied());
        }
        (rms, Some(QueryTargets { m_views: target_views, rgb, depth, mask }))
    } else {
        (Vec::new(), None)
    };
    let rm_refs: Vec<&RayMap> = raymaps.iter().collect();

    let fwd = forward_bidirectional(
        params,
        &imgs,
        normed.h,
        normed.w,
        &rm_refs,
        BackboneMode::FastWeight,
    )?;
    let pred = decode_all(params, &fwd, normed.h, normed.w, target_views > 0)?;
    let (total_t, report) = compute_losses(&pred, &gt, targets.as_ref(), loss_cfg)?;
    if !report.total.is_finite() {
        return Err(Error::Numeric {
            layer: usize::MAX,
            msg: format!("non-finite loss at step {step}; last-good checkpoint retained"),
        });
    }
    total_t.backward();
    optimizer.apply(params);
    params.zero_grads();
    Ok(report)
}

#[cfg(test)]
mod tests;

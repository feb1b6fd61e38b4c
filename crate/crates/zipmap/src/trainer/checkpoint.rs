//! Checkpoint format: `manifest.json` + a ZTEN archive of weights and
//! optimizer moments. Reloading reproduces the uninterrupted run exactly in
//! deterministic mode.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::optim::{AdamW, Moments, OptimConfig};
use super::TrainConfig;
use crate::backbone::{ModelConfig, ModelParams};
use crate::numerics::{Real, Rng, Tensor, ZtenArchive};
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Manifest {
    schema_version: u32,
    kind: String,
    step: usize,
    config: TrainConfig,
    config_sha256: String,
    params: Vec<ParamInfo>,
}

#[derive(Serialize, Deserialize)]
struct ParamInfo {
    name: String,
    shape: Vec<usize>,
}

pub fn config_hash(config: &TrainConfig) -> String {
    let json = serde_json::to_string(config).expect("config serializes");
    let mut hasher = Sha256::new();
    hasher.update(json.as_bytes());
    hex_string(&hasher.finalize())
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub struct Checkpoint<T: Real> {
    pub step: usize,
    pub config: TrainConfig,
    pub params: ModelParams<T>,
    pub optimizer: AdamW,
}

pub fn save_checkpoint<T: Real>(
    dir: impl AsRef<Path>,
    step: usize,
    config: &TrainConfig,
    params: &mut ModelParams<T>,
    optimizer: &AdamW,
) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut archive = ZtenArchive::<T>::new();
    let mut infos = Vec::new();
    params.visit(&mut |name, t| {
        infos.push(ParamInfo { name: name.to_string(), shape: t.shape().to_vec() });
        archive.push(format!("param/{name}"), t.detach());
    });
    archive.save(dir.join("weights.zta"))?;
    // optimizer moments keep full f64 precision so resumed runs match
    let mut moments = ZtenArchive::<f64>::new();
    for info in &infos {
        if let Some(m) = optimizer.moments.get(&info.name) {
            moments.push(format!("adam_m/{}", info.name), Tensor::from_f64_slice(&info.shape, &m.m));
            moments.push(format!("adam_v/{}", info.name), Tensor::from_f64_slice(&info.shape, &m.v));
        }
    }
    moments.save(dir.join("moments.zta"))?;
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        kind: "checkpoint".into(),
        step,
        config: config.clone(),
        config_sha256: config_hash(config),
        params: infos,
    };
    let mp = dir.join("manifest.json");
    fs::write(&mp, serde_json::to_string_pretty(&manifest).map_err(|e| Error::json(&mp, e))?)
        .map_err(|e| Error::io(&mp, e))
}

pub fn load_checkpoint<T: Real>(dir: impl AsRef<Path>) -> Result<Checkpoint<T>> {
    let dir = dir.as_ref();
    let mp = dir.join("manifest.json");
    let text = fs::read_to_string(&mp).map_err(|e| Error::io(&mp, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::json(&mp, e))?;
    if manifest.schema_version != SCHEMA_VERSION || manifest.kind != "checkpoint" {
        return Err(Error::format(&mp, "not a checkpoint of a supported version"));
    }
    let archive = ZtenArchive::<T>::load(dir.join("weights.zta"))?;
    let params = params_from_archive(&manifest.config.model, &archive, dir)?;
    let mut optimizer = AdamW::new(optim_config(&manifest.config));
    optimizer.step = manifest.step;
    let moments = ZtenArchive::<f64>::load(dir.join("moments.zta"))?;
    for info in &manifest.params {
        let (Some(m), Some(v)) = (
            moments.get(&format!("adam_m/{}", info.name)),
            moments.get(&format!("adam_v/{}", info.name)),
        ) else {
            continue;
        };
        optimizer.moments.insert(
            info.name.clone(),
            Moments { m: m.to_f64_vec(), v: v.to_f64_vec() },
        );
    }
    Ok(Checkpoint { step: manifest.step, config: manifest.config, params, optimizer })
}

/// Rebuild model parameters from archived tensors (`param/<name>` entries).
pub fn params_from_archive<T: Real>(
    model: &ModelConfig,
    archive: &ZtenArchive<T>,
    dir: &Path,
) -> Result<ModelParams<T>> {
    let mut rng = Rng::new(0);
    let mut params = ModelParams::<T>::new(model, &mut rng)?;
    let mut missing: Vec<String> = Vec::new();
    let mut loaded: HashMap<String, Tensor<T>> = HashMap::new();
    for (name, t) in archive.entries() {
        if let Some(stripped) = name.strip_prefix("param/") {
            loaded.insert(stripped.to_string(), t.clone());
        }
    }
    params.visit(&mut |name, t| match loaded.get(name) {
        Some(saved) => {
            if saved.shape() == t.shape() {
                *t = saved.detach().requiring_grad();
            } else {
                missing.push(format!("{name} (shape {:?} vs {:?})", saved.shape(), t.shape()));
            }
        }
        None => missing.push(name.to_string()),
    });
    if missing.is_empty() {
        Ok(params)
    } else {
        Err(Error::format(
            dir.join("weights.zta"),
            format!("missing or mismatched parameters: {}", missing.join(", ")),
        ))
    }
}

pub fn optim_config(config: &TrainConfig) -> OptimConfig {
    OptimConfig {
        beta1: config.beta1,
        beta2: config.beta2,
        eps: 1e-8,
        weight_decay: config.weight_decay,
        lr_ttt: config.lr_ttt,
        lr_other: config.lr_other,
        warmup_frac: config.warmup_frac,
        total_steps: config.stage1_steps + config.stage2_steps,
    }
}

//! Scene-state file: fast weights as ZTEN tensors plus a JSON header, with
//! the slow weights embedded so `query` is self-contained.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backbone::{FastWeightState, LayerState, ModelConfig, ModelParams};
use crate::numerics::{Tensor, ZtenArchive};
use crate::trainer::checkpoint_params_from_archive;
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    schema_version: u32,
    kind: String,
    layers: usize,
    dim: usize,
    fast_width: usize,
    /// Stored L2 norms per layer: `[n1, n2, n3]`.
    norms: Vec<[f64; 3]>,
    /// Translation scale applied to query cameras (max input center
    /// distance).
    query_translation_scale: f64,
    /// Input resolution the state was built from.
    h: usize,
    w: usize,
    model: ModelConfig,
}

pub struct SceneState {
    pub state: FastWeightState<f32>,
    pub params: ModelParams<f32>,
    pub query_translation_scale: f64,
    pub h: usize,
    pub w: usize,
}

pub fn save_scene_state(
    dir: impl AsRef<Path>,
    state: &FastWeightState<f32>,
    params: &mut ModelParams<f32>,
    query_translation_scale: f64,
    h: usize,
    w: usize,
) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let header = Header {
        schema_version: SCHEMA_VERSION,
        kind: "scene_state".into(),
        layers: state.layers.len(),
        dim: params.config.dim,
        fast_width: params.config.fast_width,
        norms: state
            .layers
            .iter()
            .map(|l| {
                [
                    l.n1.item() as f64,
                    l.n2.item() as f64,
                    l.n3.item() as f64,
                ]
            })
            .collect(),
        query_translation_scale,
        h,
        w,
        model: params.config.clone(),
    };
    let hp = dir.join("header.json");
    fs::write(&hp, serde_json::to_string_pretty(&header).map_err(|e| Error::json(&hp, e))?)
        .map_err(|e| Error::io(&hp, e))?;
    let mut fast = ZtenArchive::<f32>::new();
    for (i, layer) in state.layers.iter().enumerate() {
        fast.push(format!("layer{i:02}/w1"), layer.w1.detach());
        fast.push(format!("layer{i:02}/w2"), layer.w2.detach());
        fast.push(format!("layer{i:02}/w3"), layer.w3.detach());
    }
    fast.save(dir.join("fast_weights.zta"))?;
    let mut slow = ZtenArchive::<f32>::new();
    params.visit(&mut |name, t| slow.push(format!("param/{name}"), t.detach()));
    slow.save(dir.join("slow_weights.zta"))
}

pub fn load_scene_state(dir: impl AsRef<Path>) -> Result<SceneState> {
    let dir = dir.as_ref();
    let hp = dir.join("header.json");
    let text = fs::read_to_string(&hp).map_err(|e| Error::io(&hp, e))?;
    let header: Header = serde_json::from_str(&text).map_err(|e| Error::json(&hp, e))?;
    if header.schema_version != SCHEMA_VERSION || header.kind != "scene_state" {
        return Err(Error::format(&hp, "not a scene state of a supported version"));
    }
    let slow = ZtenArchive::<f32>::load(dir.join("slow_weights.zta"))?;
    let params = checkpoint_params_from_archive(&header.model, &slow, dir)?;
    let fast = ZtenArchive::<f32>::load(dir.join("fast_weights.zta"))?;
    let mut layers = Vec::with_capacity(header.layers);
    for i in 0..header.layers {
        let get = |n: &str| -> Result<Tensor<f32>> {
            fast.get(&format!("layer{i:02}/{n}"))
                .cloned()
                .ok_or_else(|| Error::format(dir.join("fast_weights.zta"), format!("missing layer{i:02}/{n}")))
        };
        let (w1, w2, w3) = (get("w1")?, get("w2")?, get("w3")?);
        layers.push(LayerState {
            n1: Tensor::scalar(header.norms[i][0] as f32),
            n2: Tensor::scalar(header.norms[i][1] as f32),
            n3: Tensor::scalar(header.norms[i][2] as f32),
            w1,
            w2,
            w3,
        });
    }
    Ok(SceneState {
        state: FastWeightState { layers },
        params,
        query_translation_scale: header.query_translation_scale,
        h: header.h,
        w: header.w,
    })
}

//! Block stacking: bidirectional, streaming and apply-only forward passes.

use super::attention::{dense_attention, window_attention};
use super::params::{BlockParams, ModelConfig, ModelParams};
use super::tokens::{tokenize_images, tokenize_raymap, TokenSequence, ViewKind, ViewTokens};
use super::ttt::{ttt_apply, ttt_update, FastWeightState, LayerState};
use crate::geometry::RayMap;
use crate::numerics::{concat_rows, Real, Tensor};
use crate::{Error, Result};

const RMS_EPS: f64 = 1e-6;

/// Which mechanism carries cross-view information.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BackboneMode {
    /// Fast-weight chunk update + apply (the real model; linear in views).
    FastWeight,
    /// Global softmax attention over all tokens (quadratic ablation for the
    /// scaling benchmark).
    DenseAttention,
}

pub struct ForwardOutput<T: Real> {
    /// `[feature_level][image_view]` patch-token features for dense heads.
    pub image_features: Vec<Vec<Tensor<T>>>,
    /// Final-norm camera tokens, one row per image view.
    pub camera_tokens: Tensor<T>,
    /// `[feature_level][raymap_view]` patch-token features for the query head.
    pub raymap_features: Vec<Vec<Tensor<T>>>,
    pub state: FastWeightState<T>,
    pub grid_h: usize,
    pub grid_w: usize,
}

/// Features for one streamed view.
pub struct StreamStep<T: Real> {
    pub features: Vec<Tensor<T>>,
    pub camera_token: Tensor<T>,
    pub grid_h: usize,
    pub grid_w: usize,
}

fn normed<T: Real>(x: &Tensor<T>, gain: &Tensor<T>) -> Tensor<T> {
    x.rmsnorm_rows(T::from_f64(RMS_EPS)).mul_row(gain)
}

/// One block over a set of views, mutating tokens in place.
fn run_block<T: Real>(
    views: &mut [ViewTokens<T>],
    state: &mut LayerState<T>,
    block: &BlockParams<T>,
    cfg: &ModelConfig,
    mode: BackboneMode,
    update_state: bool,
    layer_index: usize,
) -> Result<()> {
    // window attention sublayer (per view)
    for v in views.iter_mut() {
        let pre = ViewTokens {
            tokens: normed(&v.tokens, &block.attn_gain),
            kind: v.kind,
            grid_h: v.grid_h,
            grid_w: v.grid_w,
        };
        let out = window_attention(&pre, block, cfg.heads, cfg.rope_base);
        v.tokens = v.tokens.add(&out);
    }
    // cross-view sublayer
    match mode {
        BackboneMode::FastWeight => {
            let pre: Vec<Tensor<T>> =
                views.iter().map(|v| normed(&v.tokens, &block.ttt_gain)).collect();
            if update_state {
                let image_tokens: Vec<Tensor<T>> = views
                    .iter()
                    .zip(&pre)
                    .filter(|(v, _)| v.kind == ViewKind::Image)
                    .map(|(_, t)| t.clone())
                    .collect();
                if !image_tokens.is_empty() {
                    let chunk = concat_rows(&image_tokens);
                    *state = ttt_update(state, &chunk, block, cfg.ns_iters, layer_index)?;
                }
            }
            for (v, p) in views.iter_mut().zip(&pre) {
                let out = ttt_apply(state, p, block, T::from_f64(RMS_EPS));
                v.tokens = v.tokens.add(&out);
            }
        }
        BackboneMode::DenseAttention => {
            let pre: Vec<Tensor<T>> =
                views.iter().map(|v| normed(&v.tokens, &block.ttt_gain)).collect();
            let all = concat_rows(&pre);
            let out = dense_attention(&all, block, cfg.heads);
            let mut row = 0;
            for v in views.iter_mut() {
                let p = v.tokens.dim(0);
                v.tokens = v.tokens.add(&out.slice_rows(row, row + p));
                row += p;
            }
        }
    }
    // feed-forward sublayer (per view)
    for v in views.iter_mut() {
        let x = normed(&v.tokens, &block.ffn_gain);
        let out = x.matmul(&block.ffn_w1).silu().mul(&x.matmul(&block.ffn_w3)).matmul(&block.ffn_w2);
        v.tokens = v.tokens.add(&out);
    }
    Ok(())
}

fn fresh_state<T: Real>(params: &ModelParams<T>) -> FastWeightState<T> {
    FastWeightState { layers: params.blocks.iter().map(LayerState::from_block).collect() }
}

/// Full bidirectional pass: every block updates the scene state once over all
/// image tokens, then applies it to image and raymap tokens. Raymap tokens
/// never write to the state.
pub fn forward_bidirectional<T: Real>(
    params: &ModelParams<T>,
    images: &[&[f32]],
    h: usize,
    w: usize,
    raymaps: &[&RayMap],
    mode: BackboneMode,
) -> Result<ForwardOutput<T>> {
    if images.is_empty() {
        return Err(Error::Usage("forward pass needs at least one image".into()));
    }
    let cfg = &params.config;
    let mut seq: TokenSequence<T> = tokenize_images(params, images, h, w)?;
    let ray_seq = tokenize_raymap(params, raymaps)?;
    let n_images = seq.views.len();
    seq.views.extend(ray_seq.views);

    let mut state = fresh_state(params);
    let levels = cfg.feature_layers();
    let mut image_features: Vec<Vec<Tensor<T>>> = Vec::with_capacity(levels.len());
    let mut raymap_features: Vec<Vec<Tensor<T>>> = Vec::with_capacity(levels.len());
    for (l, block) in params.blocks.iter().enumerate() {
        run_block(&mut seq.views, &mut state.layers[l], block, cfg, mode, true, l)?;
        if levels.contains(&l) {
            image_features
                .push(seq.views[..n_images].iter().map(|v| v.patch_tokens()).collect());
            raymap_features
                .push(seq.views[n_images..].iter().map(|v| v.patch_tokens()).collect());
        }
    }
    let camera_tokens = concat_rows(
        &seq.views[..n_images]
            .iter()
            .map(|v| normed(&v.tokens, &params.final_gain).slice_rows(0, 1))
            .collect::<Vec<_>>(),
    );
    Ok(ForwardOutput {
        image_features,
        camera_tokens,
        raymap_features,
        state,
        grid_h: seq.views[0].grid_h,
        grid_w: seq.views[0].grid_w,
    })
}

/// Fresh per-layer fast weights from the trained initial values.
pub fn init_streaming_state<T: Real>(params: &ModelParams<T>) -> FastWeightState<T> {
    fresh_state(params)
}

/// Advance the scene state with one new view and return its features.
/// The update for each layer uses only this view's tokens, starting from the
/// state left by the previous views.
pub fn forward_streaming<T: Real>(
    params: &ModelParams<T>,
    state: &mut FastWeightState<T>,
    image: &[f32],
    h: usize,
    w: usize,
) -> Result<StreamStep<T>> {
    let cfg = &params.config;
    let mut seq: TokenSequence<T> = tokenize_images(params, &[image], h, w)?;
    let levels = cfg.feature_layers();
    let mut features = Vec::with_capacity(levels.len());
    for (l, block) in params.blocks.iter().enumerate() {
        run_block(
            &mut seq.views,
            &mut state.layers[l],
            block,
            cfg,
            BackboneMode::FastWeight,
            true,
            l,
        )?;
        if levels.contains(&l) {
            features.push(seq.views[0].patch_tokens());
        }
    }
    let camera_token = normed(&seq.views[0].tokens, &params.final_gain).slice_rows(0, 1);
    Ok(StreamStep {
        features,
        camera_token,
        grid_h: seq.views[0].grid_h,
        grid_w: seq.views[0].grid_w,
    })
}

/// Apply-only pass for querying a stored scene state with target raymaps.
/// The state is read, never written.
pub fn forward_query<T: Real>(
    params: &ModelParams<T>,
    state: &FastWeightState<T>,
    raymaps: &[&RayMap],
) -> Result<Vec<Vec<Tensor<T>>>> {
    if raymaps.is_empty() {
        return Err(Error::Usage("query pass needs at least one raymap".into()));
    }
    let cfg = &params.config;
    let mut seq: TokenSequence<T> = tokenize_raymap(params, raymaps)?;
    let levels = cfg.feature_layers();
    let mut features: Vec<Vec<Tensor<T>>> = Vec::with_capacity(levels.len());
    let mut scratch = state.clone();
    for (l, block) in params.blocks.iter().enumerate() {
        run_block(
            &mut seq.views,
            &mut scratch.layers[l],
            block,
            cfg,
            BackboneMode::FastWeight,
            false,
            l,
        )?;
        if levels.contains(&l) {
            features.push(seq.views.iter().map(|v| v.patch_tokens()).collect());
        }
    }
    Ok(features)
}

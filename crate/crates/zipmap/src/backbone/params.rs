//! Model configuration and slow-weight parameter structs.

use serde::{Deserialize, Serialize};

use crate::numerics::{Real, Rng, Tensor};
use crate::{Error, Result};

/// Architecture hyper-parameters. `toy()` is the desk-scale default; the
/// full-scale values remain expressible.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Token dimension d.
    pub dim: usize,
    /// Fast-weight intermediate width h'.
    pub fast_width: usize,
    /// Number of blocks.
    pub layers: usize,
    /// Patch size P.
    pub patch: usize,
    /// Attention heads.
    pub heads: usize,
    /// Feed-forward width multiplier.
    pub ffn_mult: usize,
    /// Dense-head per-level projection channels.
    pub head_mid: usize,
    /// Newton-Schulz iterations in the fast-weight update.
    pub ns_iters: usize,
    /// Rotary base.
    pub rope_base: f64,
}

impl ModelConfig {
    pub fn toy() -> ModelConfig {
        ModelConfig {
            dim: 64,
            fast_width: 128,
            layers: 4,
            patch: 8,
            heads: 4,
            ffn_mult: 4,
            head_mid: 12,
            ns_iters: 5,
            rope_base: 10_000.0,
        }
    }

    /// Full-scale configuration (not exercised by the test suite).
    pub fn paper_scale() -> ModelConfig {
        ModelConfig {
            dim: 1024,
            fast_width: 2048,
            layers: 24,
            patch: 14,
            heads: 16,
            ffn_mult: 4,
            head_mid: 64,
            ns_iters: 5,
            rope_base: 10_000.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.fast_width == 0 || self.layers == 0 || self.patch == 0 {
            return Err(Error::Config("model dimensions must be positive".into()));
        }
        if self.dim % self.heads != 0 {
            return Err(Error::Config(format!(
                "dim {} not divisible by heads {}",
                self.dim, self.heads
            )));
        }
        if (self.dim / self.heads) % 4 != 0 {
            return Err(Error::Config(format!(
                "head dim {} must be divisible by 4 for 2-D rotary",
                self.dim / self.heads
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }

    /// Fast-weight parameter count per layer: 3 d h' (6 d^2 when h' = 2d).
    pub fn state_params_per_layer(&self) -> usize {
        3 * self.dim * self.fast_width
    }

    /// Block indices whose outputs feed the dense heads (4 evenly spaced).
    pub fn feature_layers(&self) -> Vec<usize> {
        let l = self.layers;
        let mut idx: Vec<usize> = (1..=4).map(|k| (k * l).div_ceil(4) - 1).collect();
        idx.dedup();
        idx
    }

    /// Tokens per view for `h x w` inputs: `h*w/P^2 + 5`.
    pub fn tokens_per_view(&self, h: usize, w: usize) -> Result<usize> {
        if h % self.patch != 0 || w % self.patch != 0 {
            return Err(Error::Shape(format!(
                "extents {h}x{w} not divisible by patch size {}",
                self.patch
            )));
        }
        Ok((h / self.patch) * (w / self.patch) + 5)
    }
}

/// `softplus(x) = target` solved for x.
pub(crate) fn inv_softplus(target: f64) -> f64 {
    (target.exp() - 1.0).ln()
}

pub struct BlockParams<T: Real> {
    // window attention sublayer
    pub attn_gain: Tensor<T>,
    pub attn_wq: Tensor<T>,
    pub attn_wk: Tensor<T>,
    pub attn_wv: Tensor<T>,
    pub attn_wo: Tensor<T>,
    // fast-weight sublayer
    pub ttt_gain: Tensor<T>,
    pub wq: Tensor<T>,
    pub wk: Tensor<T>,
    pub wv: Tensor<T>,
    /// Per-token learning-rate head (linear d -> 1, then softplus).
    pub lr_w: Tensor<T>,
    pub lr_b: Tensor<T>,
    pub w_gate: Tensor<T>,
    pub apply_gain: Tensor<T>,
    pub ttt_wo: Tensor<T>,
    /// Initial fast weights; trained, cloned into the state at pass start.
    pub fw1: Tensor<T>,
    pub fw2: Tensor<T>,
    pub fw3: Tensor<T>,
    // feed-forward sublayer
    pub ffn_gain: Tensor<T>,
    pub ffn_w1: Tensor<T>,
    pub ffn_w3: Tensor<T>,
    pub ffn_w2: Tensor<T>,
}

/// Dense prediction head: per-level linear projections, two 3x3 mixing
/// layers after upsampling, and a per-pixel output projection.
pub struct DenseHeadParams<T: Real> {
    pub proj_w: Vec<Tensor<T>>,
    pub proj_b: Vec<Tensor<T>>,
    pub conv1_w: Tensor<T>,
    pub conv1_b: Tensor<T>,
    pub conv2_w: Tensor<T>,
    pub conv2_b: Tensor<T>,
    pub out_w: Tensor<T>,
    pub out_b: Tensor<T>,
}

pub struct CameraHeadParams<T: Real> {
    pub w1: Tensor<T>,
    pub b1: Tensor<T>,
    pub w2: Tensor<T>,
    pub b2: Tensor<T>,
}

pub struct HeadParams<T: Real> {
    pub camera: CameraHeadParams<T>,
    /// 3 channels: x, y linear; z through exp.
    pub point: DenseHeadParams<T>,
    /// 2 channels: log-depth, log-confidence.
    pub depth: DenseHeadParams<T>,
    /// 5 channels: rgb logits, log-depth, log-confidence.
    pub query: DenseHeadParams<T>,
}

/// Every trainable tensor of the model.
pub struct ModelParams<T: Real> {
    pub config: ModelConfig,
    pub patch_embed_w: Tensor<T>,
    pub patch_embed_b: Tensor<T>,
    pub raymap_embed_w: Tensor<T>,
    pub raymap_embed_b: Tensor<T>,
    pub camera_token: Tensor<T>,
    pub query_token: Tensor<T>,
    pub register_tokens: Tensor<T>,
    pub blocks: Vec<BlockParams<T>>,
    pub final_gain: Tensor<T>,
    pub heads: HeadParams<T>,
}

pub type ParamVisitor<'a, T> = dyn FnMut(&str, &mut Tensor<T>) + 'a;

impl<T: Real> ModelParams<T> {
    pub fn new(config: &ModelConfig, rng: &mut Rng) -> Result<ModelParams<T>> {
        config.validate()?;
        let d = config.dim;
        let hp = config.fast_width;
        let f = config.ffn_mult * d;
        let residual_scale = 1.0 / (2.0 * config.layers as f64).sqrt();
        let lin = |rng: &mut Rng, rows: usize, cols: usize| -> Tensor<T> {
            rng.tensor_normal::<T>(&[rows, cols], 1.0 / (rows as f64).sqrt()).requiring_grad()
        };
        let lin_scaled = |rng: &mut Rng, rows: usize, cols: usize| -> Tensor<T> {
            rng.tensor_normal::<T>(&[rows, cols], residual_scale / (rows as f64).sqrt())
                .requiring_grad()
        };
        let gain = |_: &mut Rng| Tensor::<T>::ones(&[d]).requiring_grad();

        let blocks = (0..config.layers)
            .map(|_| BlockParams {
                attn_gain: gain(rng),
                attn_wq: lin(rng, d, d),
                attn_wk: lin(rng, d, d),
                attn_wv: lin(rng, d, d),
                attn_wo: lin_scaled(rng, d, d),
                ttt_gain: gain(rng),
                wq: lin(rng, d, d),
                wk: lin(rng, d, d),
                wv: lin(rng, d, d),
                lr_w: Tensor::<T>::zeros(&[d, 1]).requiring_grad(),
                lr_b: Tensor::<T>::full(&[1], T::from_f64(inv_softplus(0.01))).requiring_grad(),
                w_gate: lin(rng, d, d),
                apply_gain: gain(rng),
                ttt_wo: lin_scaled(rng, d, d),
                fw1: lin(rng, hp, d),
                fw2: lin(rng, d, hp),
                fw3: lin(rng, hp, d),
                ffn_gain: gain(rng),
                ffn_w1: lin(rng, d, f),
                ffn_w3: lin(rng, d, f),
                ffn_w2: lin_scaled(rng, f, d),
            })
            .collect();

        let n_levels = config.feature_layers().len();
        let mid = config.head_mid;
        let cmix = 2 * mid;
        let dense = |rng: &mut Rng, channels: usize| -> DenseHeadParams<T> {
            DenseHeadParams {
                proj_w: (0..n_levels).map(|_| lin(rng, d, mid)).collect(),
                proj_b: (0..n_levels)
                    .map(|_| Tensor::<T>::zeros(&[mid]).requiring_grad())
                    .collect(),
                conv1_w: lin(rng, 9 * n_levels * mid, cmix),
                conv1_b: Tensor::<T>::zeros(&[cmix]).requiring_grad(),
                conv2_w: lin(rng, 9 * cmix, cmix),
                conv2_b: Tensor::<T>::zeros(&[cmix]).requiring_grad(),
                out_w: lin(rng, cmix, channels),
                out_b: Tensor::<T>::zeros(&[channels]).requiring_grad(),
            }
        };
        // Zero final layer with identity-quaternion bias: every view starts
        // at the identity camera with unit-ish focals.
        let mut cam_bias = vec![0.0f64; 9];
        cam_bias[0] = 1.0;
        cam_bias[7] = inv_softplus(1.0);
        cam_bias[8] = inv_softplus(1.0);
        let heads = HeadParams {
            camera: CameraHeadParams {
                w1: lin(rng, d, d),
                b1: Tensor::<T>::zeros(&[d]).requiring_grad(),
                w2: Tensor::<T>::zeros(&[d, 9]).requiring_grad(),
                b2: Tensor::<T>::from_f64_slice(&[9], &cam_bias).requiring_grad(),
            },
            point: dense(rng, 3),
            depth: dense(rng, 2),
            query: dense(rng, 5),
        };

        Ok(ModelParams {
            config: config.clone(),
            patch_embed_w: lin(rng, config.patch * config.patch * 3, d),
            patch_embed_b: Tensor::<T>::zeros(&[d]).requiring_grad(),
            raymap_embed_w: lin(rng, config.patch * config.patch * 9, d),
            raymap_embed_b: Tensor::<T>::zeros(&[d]).requiring_grad(),
            camera_token: rng.tensor_normal::<T>(&[1, d], 0.02).requiring_grad(),
            query_token: rng.tensor_normal::<T>(&[1, d], 0.02).requiring_grad(),
            register_tokens: rng.tensor_normal::<T>(&[4, d], 0.02).requiring_grad(),
            blocks,
            final_gain: Tensor::<T>::ones(&[d]).requiring_grad(),
            heads,
        })
    }

    /// Visit every parameter with a stable name. Names carry the sublayer
    /// (the `ttt` segment selects the fast-weight learning-rate group).
    pub fn visit(&mut self, f: &mut ParamVisitor<'_, T>) {
        f("embed.patch_w", &mut self.patch_embed_w);
        f("embed.patch_b", &mut self.patch_embed_b);
        f("embed.raymap_w", &mut self.raymap_embed_w);
        f("embed.raymap_b", &mut self.raymap_embed_b);
        f("embed.camera_token", &mut self.camera_token);
        f("embed.query_token", &mut self.query_token);
        f("embed.register_tokens", &mut self.register_tokens);
        for (i, b) in self.blocks.iter_mut().enumerate() {
            let p = |s: &str| format!("block{i:02}.{s}");
            f(&p("attn.gain"), &mut b.attn_gain);
            f(&p("attn.wq"), &mut b.attn_wq);
            f(&p("attn.wk"), &mut b.attn_wk);
            f(&p("attn.wv"), &mut b.attn_wv);
            f(&p("attn.wo"), &mut b.attn_wo);
            f(&p("ttt.gain"), &mut b.ttt_gain);
            f(&p("ttt.wq"), &mut b.wq);
            f(&p("ttt.wk"), &mut b.wk);
            f(&p("ttt.wv"), &mut b.wv);
            f(&p("ttt.lr_w"), &mut b.lr_w);
            f(&p("ttt.lr_b"), &mut b.lr_b);
            f(&p("ttt.w_gate"), &mut b.w_gate);
            f(&p("ttt.apply_gain"), &mut b.apply_gain);
            f(&p("ttt.wo"), &mut b.ttt_wo);
            f(&p("ttt.fw1"), &mut b.fw1);
            f(&p("ttt.fw2"), &mut b.fw2);
            f(&p("ttt.fw3"), &mut b.fw3);
            f(&p("ffn.gain"), &mut b.ffn_gain);
            f(&p("ffn.w1"), &mut b.ffn_w1);
            f(&p("ffn.w3"), &mut b.ffn_w3);
            f(&p("ffn.w2"), &mut b.ffn_w2);
        }
        f("final.gain", &mut self.final_gain);
        f("heads.camera.w1", &mut self.heads.camera.w1);
        f("heads.camera.b1", &mut self.heads.camera.b1);
        f("heads.camera.w2", &mut self.heads.camera.w2);
        f("heads.camera.b2", &mut self.heads.camera.b2);
        for (name, head) in [
            ("point", &mut self.heads.point),
            ("depth", &mut self.heads.depth),
            ("query", &mut self.heads.query),
        ] {
            for (i, w) in head.proj_w.iter_mut().enumerate() {
                f(&format!("heads.{name}.proj{i}_w"), w);
            }
            for (i, b) in head.proj_b.iter_mut().enumerate() {
                f(&format!("heads.{name}.proj{i}_b"), b);
            }
            f(&format!("heads.{name}.conv1_w"), &mut head.conv1_w);
            f(&format!("heads.{name}.conv1_b"), &mut head.conv1_b);
            f(&format!("heads.{name}.conv2_w"), &mut head.conv2_w);
            f(&format!("heads.{name}.conv2_b"), &mut head.conv2_b);
            f(&format!("heads.{name}.out_w"), &mut head.out_w);
            f(&format!("heads.{name}.out_b"), &mut head.out_b);
        }
    }

    pub fn param_count(&mut self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, t| n += t.numel());
        n
    }

    pub fn zero_grads(&mut self) {
        self.visit(&mut |_, t| t.zero_grad());
    }
}

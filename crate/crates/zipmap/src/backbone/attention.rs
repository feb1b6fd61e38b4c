//! Multi-head softmax attention: per-view windows with 2-D rotary positions,
//! plus the dense global variant used by the scaling ablation.

use super::params::BlockParams;
use super::tokens::ViewTokens;
use crate::numerics::{concat_cols, Real, Tensor};

/// Rotary tables for one view: special tokens sit at the null position
/// (angle 0, identity rotation); patch tokens use axial row/column angles,
/// each over half of the head dimension.
fn rope_tables<T: Real>(
    n_tokens: usize,
    gh: usize,
    gw: usize,
    head_dim: usize,
    base: f64,
) -> (Tensor<T>, Tensor<T>) {
    let p = n_tokens;
    let n_special = p - gh * gw;
    let pairs = head_dim / 2;
    let axis_pairs = pairs / 2;
    let mut cos = vec![T::one(); p * pairs];
    let mut sin = vec![T::zero(); p * pairs];
    for gr in 0..gh {
        for gc in 0..gw {
            let row = n_special + gr * gw + gc;
            for j in 0..axis_pairs {
                let freq = base.powf(-(j as f64) / axis_pairs as f64);
                let (ar, ac) = (gr as f64 * freq, gc as f64 * freq);
                cos[row * pairs + j] = T::from_f64(ar.cos());
                sin[row * pairs + j] = T::from_f64(ar.sin());
                cos[row * pairs + axis_pairs + j] = T::from_f64(ac.cos());
                sin[row * pairs + axis_pairs + j] = T::from_f64(ac.sin());
            }
        }
    }
    (Tensor::from_vec(&[p, pairs], cos), Tensor::from_vec(&[p, pairs], sin))
}

fn split_heads<T: Real>(x: &Tensor<T>, heads: usize) -> Vec<Tensor<T>> {
    let d = x.dim(1);
    let hd = d / heads;
    (0..heads).map(|h| x.slice_cols(h * hd, (h + 1) * hd)).collect()
}

/// Softmax attention over one token matrix; `tables` rotates q and k.
fn attend<T: Real>(
    x: &Tensor<T>,
    wq: &Tensor<T>,
    wk: &Tensor<T>,
    wv: &Tensor<T>,
    wo: &Tensor<T>,
    heads: usize,
    tables: Option<&(Tensor<T>, Tensor<T>)>,
) -> Tensor<T> {
    let d = x.dim(1);
    let hd = d / heads;
    let scale = T::from_f64(1.0 / (hd as f64).sqrt());
    let q = x.matmul(wq);
    let k = x.matmul(wk);
    let v = x.matmul(wv);
    let outs: Vec<Tensor<T>> = split_heads(&q, heads)
        .into_iter()
        .zip(split_heads(&k, heads))
        .zip(split_heads(&v, heads))
        .map(|((qh, kh), vh)| {
            let (qh, kh) = match tables {
                Some((cos, sin)) => (qh.rotate_pairs(cos, sin), kh.rotate_pairs(cos, sin)),
                None => (qh, kh),
            };
            let att = qh.matmul_nt(&kh).mul_scalar(scale).softmax_rows();
            att.matmul(&vh)
        })
        .collect();
    concat_cols(&outs).matmul(wo)
}

/// Self-attention restricted to one view's own tokens.
pub fn window_attention<T: Real>(
    view: &ViewTokens<T>,
    block: &BlockParams<T>,
    heads: usize,
    rope_base: f64,
) -> Tensor<T> {
    let hd = view.tokens.dim(1) / heads;
    let tables =
        rope_tables::<T>(view.tokens.dim(0), view.grid_h, view.grid_w, hd, rope_base);
    attend(
        &view.tokens,
        &block.attn_wq,
        &block.attn_wk,
        &block.attn_wv,
        &block.attn_wo,
        heads,
        Some(&tables),
    )
}

/// Global softmax attention over the concatenation of all views' tokens,
/// re-using the fast-weight sublayer's q/k/v/out projections. This is the
/// quadratic-cost ablation the scaling benchmark compares against.
pub fn dense_attention<T: Real>(
    all_tokens: &Tensor<T>,
    block: &BlockParams<T>,
    heads: usize,
) -> Tensor<T> {
    attend(all_tokens, &block.wq, &block.wk, &block.wv, &block.ttt_wo, heads, None)
}

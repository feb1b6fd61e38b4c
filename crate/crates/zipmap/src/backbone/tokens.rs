//! Patchification and token assembly.
//!
//! Row layout per view: row 0 is the camera token (or the query token for
//! raymap views), rows 1..5 the register tokens, rows 5.. the patch tokens in
//! row-major grid order.

use super::params::ModelParams;
use crate::geometry::RayMap;
use crate::numerics::{concat_rows, Real, Tensor};
use crate::Result;

pub const SPECIAL_TOKENS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ViewKind {
    Image,
    Raymap,
}

#[derive(Clone)]
pub struct ViewTokens<T: Real> {
    /// `[p, d]` token matrix.
    pub tokens: Tensor<T>,
    pub kind: ViewKind,
    pub grid_h: usize,
    pub grid_w: usize,
}

impl<T: Real> ViewTokens<T> {
    pub fn token_count(&self) -> usize {
        self.grid_h * self.grid_w + SPECIAL_TOKENS
    }

    /// Patch-token rows (the dense-head features).
    pub fn patch_tokens(&self) -> Tensor<T> {
        self.tokens.slice_rows(SPECIAL_TOKENS, self.token_count())
    }

    /// Camera-or-query token row.
    pub fn special_token(&self) -> Tensor<T> {
        self.tokens.slice_rows(0, 1)
    }
}

#[derive(Clone)]
pub struct TokenSequence<T: Real> {
    pub views: Vec<ViewTokens<T>>,
}

impl<T: Real> TokenSequence<T> {
    pub fn image_views(&self) -> impl Iterator<Item = &ViewTokens<T>> {
        self.views.iter().filter(|v| v.kind == ViewKind::Image)
    }
}

/// Flatten each `P x P` patch (interleaved RGB) into a row.
fn patchify<T: Real>(
    data: &[f64],
    channels: usize,
    h: usize,
    w: usize,
    patch: usize,
) -> Tensor<T> {
    let (gh, gw) = (h / patch, w / patch);
    let row_len = patch * patch * channels;
    let mut out = Vec::with_capacity(gh * gw * row_len);
    for gr in 0..gh {
        for gc in 0..gw {
            for r in 0..patch {
                let base = ((gr * patch + r) * w + gc * patch) * channels;
                for v in &data[base..base + patch * channels] {
                    out.push(T::from_f64(*v));
                }
            }
        }
    }
    Tensor::from_vec(&[gh * gw, row_len], out)
}

fn assemble<T: Real>(
    special: &Tensor<T>,
    registers: &Tensor<T>,
    patches: Tensor<T>,
    kind: ViewKind,
    gh: usize,
    gw: usize,
) -> ViewTokens<T> {
    let tokens = concat_rows(&[special.clone(), registers.clone(), patches]);
    ViewTokens { tokens, kind, grid_h: gh, grid_w: gw }
}

/// Tokenize a batch of `h x w` RGB images (values in `[0,1]`, `h*w*3` each).
pub fn tokenize_images<T: Real>(
    params: &ModelParams<T>,
    images: &[&[f32]],
    h: usize,
    w: usize,
) -> Result<TokenSequence<T>> {
    let p = params.config.patch;
    params.config.tokens_per_view(h, w)?;
    let mut views = Vec::with_capacity(images.len());
    for img in images {
        assert_eq!(img.len(), h * w * 3, "image buffer length");
        let data: Vec<f64> = img.iter().map(|&v| v as f64).collect();
        let patches = patchify::<T>(&data, 3, h, w, p)
            .matmul(&params.patch_embed_w)
            .add_row(&params.patch_embed_b);
        views.push(assemble(
            &params.camera_token,
            &params.register_tokens,
            patches,
            ViewKind::Image,
            h / p,
            w / p,
        ));
    }
    Ok(TokenSequence { views })
}

/// Tokenize target raymaps (the query path).
pub fn tokenize_raymap<T: Real>(
    params: &ModelParams<T>,
    raymaps: &[&RayMap],
) -> Result<TokenSequence<T>> {
    let p = params.config.patch;
    let mut views = Vec::with_capacity(raymaps.len());
    for rm in raymaps {
        params.config.tokens_per_view(rm.h, rm.w)?;
        let patches = patchify::<T>(&rm.data, 9, rm.h, rm.w, p)
            .matmul(&params.raymap_embed_w)
            .add_row(&params.raymap_embed_b);
        views.push(assemble(
            &params.query_token,
            &params.register_tokens,
            patches,
            ViewKind::Raymap,
            rm.h / p,
            rm.w / p,
        ));
    }
    Ok(TokenSequence { views })
}

#[cfg(test)]
mod tests {
    use super::super::params::ModelConfig;
    use super::*;
    use crate::geometry::{camera_to_raymap, Camera};
    use crate::numerics::Rng;

    fn toy_params() -> ModelParams<f32> {
        let mut rng = Rng::new(1);
        ModelParams::new(&ModelConfig::toy(), &mut rng).unwrap()
    }

    #[test]
    fn token_count_is_patches_plus_five() {
        let params = toy_params();
        let img = vec![0.5f32; 32 * 32 * 3];
        let seq = tokenize_images(&params, &[&img], 32, 32).unwrap();
        assert_eq!(seq.views[0].tokens.shape(), &[16 + 5, 64]);
    }

    #[test]
    fn indivisible_extents_are_rejected() {
        let params = toy_params();
        let img = vec![0.0f32; 30 * 32 * 3];
        assert!(tokenize_images(&params, &[&img], 30, 32).is_err());
    }

    #[test]
    fn zero_image_gives_zero_patch_tokens() {
        let mut params = toy_params();
        // zero the bias so patch rows are exactly zero
        params.patch_embed_b = Tensor::zeros(&[64]);
        let img = vec![0.0f32; 32 * 32 * 3];
        let seq = tokenize_images(&params, &[&img], 32, 32).unwrap();
        let patches = seq.views[0].patch_tokens();
        assert!(patches.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identical_images_give_identical_tokens() {
        let params = toy_params();
        let img: Vec<f32> = (0..32 * 32 * 3).map(|i| (i % 254) as f32 / 254.0).collect();
        let seq = tokenize_images(&params, &[&img, &img], 32, 32).unwrap();
        assert_eq!(seq.views[0].tokens.data(), seq.views[1].tokens.data());
    }

    #[test]
    fn raymap_tokens_use_the_query_embedding() {
        let params = toy_params();
        let rm = camera_to_raymap(&Camera::identity(), 32, 32).unwrap();
        let seq = tokenize_raymap(&params, &[&rm]).unwrap();
        assert_eq!(seq.views[0].tokens.shape(), &[21, 64]);
        assert_eq!(seq.views[0].kind, ViewKind::Raymap);
        let q = seq.views[0].special_token();
        assert_eq!(q.data(), params.query_token.data());
        assert_ne!(params.query_token.data(), params.camera_token.data());
    }

    #[test]
    fn same_camera_same_tokens() {
        let params = toy_params();
        let cam = Camera::new([0.9, 0.1, 0.2, -0.1], [0.5, 0.0, 1.0], 1.1, 0.9).unwrap();
        let a = camera_to_raymap(&cam, 32, 32).unwrap();
        let b = camera_to_raymap(&cam, 32, 32).unwrap();
        let sa = tokenize_raymap(&params, &[&a]).unwrap();
        let sb = tokenize_raymap(&params, &[&b]).unwrap();
        assert_eq!(sa.views[0].tokens.data(), sb.views[0].tokens.data());
    }
}

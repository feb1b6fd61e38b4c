//! Procedural multi-view scenes and the on-disk scene-bundle format.
//!
//! Scenes are a ground plane plus a few textured boxes/spheres, rendered by
//! analytic ray intersection, so depths are exact and the geometry descriptor
//! can serve as an oracle in tests. Generation is pure per seed.

mod generate;
mod io;
mod scene;

pub use generate::{generate_scene, look_at};
pub use io::{load_bundle, save_bundle};
pub use scene::{Hit, Primitive, SceneGeometry, Texture};

use crate::geometry::Camera;

/// One rendered view: image in `[0,1]`, exact depth, validity mask.
#[derive(Clone, Debug)]
pub struct View {
    pub camera: Camera,
    /// `h*w*3` RGB values in `[0,1]`.
    pub image: Vec<f32>,
    /// `h*w` z-depths in the camera frame; meaningful where `valid`.
    pub depth: Vec<f32>,
    pub valid: Vec<bool>,
}

impl View {
    pub fn depth_f64(&self) -> Vec<f64> {
        self.depth.iter().map(|&d| d as f64).collect()
    }
}

/// A set of views of one scene plus the generating geometry (oracle use) and
/// a global metric scale (1.0 at generation; set by ground-truth
/// normalization before training).
#[derive(Clone, Debug)]
pub struct SceneBundle {
    pub h: usize,
    pub w: usize,
    pub seed: u64,
    pub difficulty: f64,
    pub scale: f64,
    pub views: Vec<View>,
    pub geometry: SceneGeometry,
}

impl SceneBundle {
    pub fn n_views(&self) -> usize {
        self.views.len()
    }

    /// Bundle restricted to a subset of views (order preserved as given).
    pub fn subset(&self, indices: &[usize]) -> SceneBundle {
        SceneBundle {
            h: self.h,
            w: self.w,
            seed: self.seed,
            difficulty: self.difficulty,
            scale: self.scale,
            views: indices.iter().map(|&i| self.views[i].clone()).collect(),
            geometry: self.geometry.clone(),
        }
    }
}

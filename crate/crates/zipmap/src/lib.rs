//! Stateful feed-forward multi-view 3D reconstruction.
//!
//! The model ingests a set of unposed RGB views and, in a single
//! linear-time pass, predicts per-view cameras, depth maps, confidence maps and
//! local point maps. Global context is carried not by all-pairs attention but by
//! a compact set of per-layer fast-weight matrices that are updated once per
//! chunk of input tokens and can afterwards be queried from novel viewpoints.
//!
//! Crate layout mirrors the pipeline:
//!
//! - [`numerics`] — dense tensors with reverse-mode gradients, RNG, tensor IO
//! - [`geometry`] — cameras, rays, raymaps, point maps, similarity alignment
//! - [`backbone`] — tokenization + window-attention / fast-weight stack
//! - [`heads`] — camera / depth / point / query prediction heads
//! - [`losses`] — training objective (point, depth, camera, smoothness, query)
//! - [`metrics`] — trajectory, pose-AUC, chamfer and depth evaluation
//! - [`synthdata`] — procedural scene generator and the scene-bundle format
//! - [`trainer`] — staged training loop and checkpointing
//! - [`cli`] — the `zipmap` command-line entry points
pub mod backbone;
pub mod cli;
pub mod error;
pub mod geometry;
pub mod heads;
pub mod losses;
pub mod metrics;
pub mod numerics;
pub mod synthdata;
pub mod trainer;

pub use error::{Error, Result};

//! Minimal dense tensor engine with reverse-mode differentiation.
//!
//! Everything the backbone and losses compute flows through [`Tensor`]:
//! a contiguous row-major float buffer plus an optional gradient accumulator
//! and a record of the op that produced it. Calling [`Tensor::backward`] on a
//! scalar walks the graph in reverse topological order and accumulates
//! gradients into every leaf that requires them.
//!
//! Two element types are supported: `f32` for training and benchmarks, `f64`
//! for the finite-difference gradient oracles in the test suite.

mod flops;
mod gradcheck;
mod linalg;
mod ops;
mod rng;
mod tensor;
mod zten;

pub use flops::{flops_reset, flops_total};
pub use gradcheck::{finite_difference_grad, max_rel_err};
pub use linalg::newton_schulz_orthonormalize;
pub use ops::{concat_cols, concat_rows, outer};
pub use rng::Rng;
pub use tensor::{no_grad, Real, Tensor};
pub use zten::{read_zten, write_zten, ZtenArchive};

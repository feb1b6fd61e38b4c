//! Tokenization and the interleaved window-attention / fast-weight stack.
//!
//! Each block runs three pre-norm residual sublayers:
//!
//! 1. local window attention over each view's own tokens (2-D rotary
//!    positions on the patch grid, null position for special tokens),
//! 2. the fast-weight sublayer: one gradient-style update of the per-layer
//!    fast-weight MLP over *all image tokens of the chunk*, then a read-only
//!    apply to every token (image and raymap),
//! 3. a gated feed-forward.
//!
//! The per-layer fast weights `{W1, W2, W3}` are the compressed scene state:
//! raymap tokens never write to it, so querying is read-only, and its size is
//! independent of the number of input views.

mod attention;
mod model;
mod params;
mod tokens;
mod ttt;

pub use attention::{dense_attention, window_attention};
pub use model::{
    forward_bidirectional, forward_streaming, init_streaming_state, BackboneMode, ForwardOutput,
    StreamStep,
};
pub use model::forward_query;
pub use params::{
    BlockParams, CameraHeadParams, DenseHeadParams, HeadParams, ModelConfig, ModelParams,
    ParamVisitor,
};
pub use tokens::{tokenize_images, tokenize_raymap, TokenSequence, ViewKind, ViewTokens};
pub use ttt::{fast_weight_forward, ttt_apply, ttt_update, virtual_objective_grads, FastWeightState, LayerState};

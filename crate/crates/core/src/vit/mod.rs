//! Toy-scale vision transformer base learner with hand-written gradients.
//!
//! Architecture: non-overlapping patches are linearly projected, a learned
//! class token is prepended and positional embeddings added, then `depth`
//! pre-norm blocks (multi-head self-attention, GELU MLP, both residual)
//! run before a final layer norm and a linear head on the class token.

pub mod checkpoint;
mod model;
pub mod ops;
mod params;

pub use model::{argmax, cross_entropy, sample_cross_entropy, softmax, LogitPair, TinyViT};
pub use params::{BlockParams, GradientSet, ViTConfig, ViTParams};

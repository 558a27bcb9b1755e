//! Deterministic tensor math and random streams shared by every other module.
//!
//! Convolutions use cross-correlation semantics (no kernel flip), zero
//! padding and `f64` accumulation throughout. All functions are pure; batch
//! callers reduce results in a fixed order so output does not depend on the
//! number of worker threads.

mod conv;
pub mod gemm;
mod pool;
mod rng;
mod softmax;
mod tensor;

pub use conv::{col2im, conv2d, im2col, ConvGeometry};
pub use pool::{maxpool2d, maxpool2d_with_argmax};
pub use rng::{derive_seed, fnv1a64, splitmix64, DrawKind, RngStream};
pub use softmax::{cross_entropy, cross_entropy_slice, softmax, softmax_slice, LOG_FLOOR};
pub use tensor::Tensor;

pub use tensor::argmax;

/// Draw one scalar from `stream`.
pub fn rng_draw(stream: &mut RngStream, kind: DrawKind) -> f64 {
    stream.draw(kind)
}

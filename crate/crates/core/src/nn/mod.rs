//! Minimal batched layers with hand-written backward passes.
//!
//! A batch is an `Array2<T>` with one sample per row; spatial samples are
//! flattened in `(H, W, C)` order.

mod adam;
mod layers;

pub use adam::Adam;
pub use layers::{softmax_rows, Cache, Conv2d, Dense, DepthwiseConv2d, Layer, MaxPool2d};

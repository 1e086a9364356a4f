//! Device-to-server transit of activations.
//!
//! Activations cross the channel as [`wire`] frames. A [`ChannelTap`] sits on
//! the single hop: in passive mode it logs a copy of each frame and forwards
//! the bytes untouched, in active mode it forwards a substituted activation.

mod dataset;
mod tap;
pub mod wire;

pub use dataset::EavesdropDataset;
pub use tap::{ChannelTap, TapMode, Transform};
pub use wire::{deserialize, read_capture, serialize, write_capture, CAPTURE_EXTENSION};

//! U-Mixer forecasting engine.
//!
//! Patch embedding, per-channel Mixer blocks stacked into a Unet
//! encoder-decoder, stationarity correction of the decoder output, and the
//! training/evaluation harness around them.

pub mod error;
pub mod rng;
pub mod selftest;
pub mod correction;
pub mod data;
pub mod eval;
pub mod model;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use rng::RngStream;
pub use tensor::Tensor;

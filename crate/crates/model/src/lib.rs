//! Convolutional text detector: a residual stem, top-down additive fusion
//! with receptive-field blocks, and per-cell score and rotated-box heads.
//!
//! All tensors are NCHW `f32` on a candle device. Heads are converted to
//! [`rfbtd_core::ModelOutput`] grids for loss computation and decoding.

pub mod backbone;
pub mod checkpoint;
pub mod config;
pub mod detector;
mod error;
pub mod layers;
pub mod optim;
pub mod params;
pub mod preprocess;
pub mod rfb;
pub mod train;

pub use checkpoint::Checkpoint;
pub use config::{BackboneConfig, ModelConfig, Refinement};
pub use detector::{Detector, Heads};
pub use error::ModelError;
pub use layers::Mode;
pub use optim::AdaGrad;

//! Core of the RFB text detector: rotated-box geometry, ICDAR2015 label
//! generation, training losses, post-processing, evaluation and
//! receptive-field analysis.
//!
//! Everything here is pure and framework-free; the network itself lives in
//! `rfbtd-model`.

pub mod evalproto;
pub mod geometry;
pub mod kernel;
pub mod labelgen;
pub mod losses;
pub mod output;
pub mod postprocess;
pub mod rf;

pub use geometry::{Point, Quad, RBox};
pub use labelgen::{Annotation, TrainTarget};
pub use output::ModelOutput;
pub use postprocess::{Detection, NmsConfig, NmsMode};

/// Output stride of the detector relative to its input.
pub const OUTPUT_STRIDE: usize = 4;

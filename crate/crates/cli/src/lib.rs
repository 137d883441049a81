//! Training, inference, evaluation and receptive-field tooling behind the
//! `rfbtd` binary.

pub mod config;
pub mod dataset;
pub mod evaluation;
pub mod inference;
pub mod native;
pub mod rf_analyze;
pub mod synth;
pub mod training;

//! Candidate-buffer contract for interchangeable NMS kernels.
//!
//! A buffer holds `N` records of [`RECORD_LEN`] `f64` values,
//! `x1 y1 x2 y2 x3 y3 x4 y4 score`, packed contiguously with no header. The
//! byte form stores each value as little-endian IEEE-754 binary64, so one
//! record is [`RECORD_BYTES`] bytes. Outputs use the same layout and never
//! hold more records than the input.
//!
//! Modes are passed as `i32` codes: `0` standard NMS, `1` locality-aware
//! merge followed by standard NMS (see [`NmsMode`]).
//!
//! [`LAYOUT_VERSION`] changes whenever any of the above does; a native
//! kernel reporting a different version must not be used.
//!
//! A native kernel is a shared library exporting two C functions:
//!
//! ```c
//! uint32_t rfbtd_nms_layout_version(void);
//! int32_t rfbtd_nms_run(const double *in, size_t in_len, double iou_threshold,
//!                       int32_t mode, double *out, size_t out_capacity,
//!                       size_t *out_len);
//! ```
//!
//! Lengths count `f64` values. `rfbtd_nms_run` returns 0 or a
//! [`KernelError`] code; on failure it writes nothing to `out` and sets
//! `*out_len` to 0. An output capacity equal to `in_len` always suffices.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geometry::{Quad, RBox};
pub use crate::postprocess::NmsMode;
use crate::postprocess::{locality_aware_nms, standard_nms, Detection};

pub const LAYOUT_VERSION: u32 = 1;
pub const NATIVE_VERSION_SYMBOL: &[u8] = b"rfbtd_nms_layout_version\0";
pub const NATIVE_RUN_SYMBOL: &[u8] = b"rfbtd_nms_run\0";
pub const RECORD_LEN: usize = 9;
pub const RECORD_BYTES: usize = RECORD_LEN * 8;
/// Coordinate agreement required between two conforming kernels.
pub const CONFORMANCE_TOLERANCE: f64 = 1e-4;

/// Failure statuses; the discriminants are the status codes used across a
/// foreign-call boundary (0 is success).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[repr(i32)]
pub enum KernelError {
    #[error("buffer length is not a multiple of {RECORD_LEN}")]
    BadLength = 1,
    #[error("buffer contains a non-finite value")]
    NonFinite = 2,
    #[error("score outside [0, 1]")]
    ScoreOutOfRange = 3,
    #[error("unknown NMS mode")]
    BadMode = 4,
    #[error("kernel layout version does not match")]
    VersionMismatch = 5,
    #[error("output capacity too small")]
    OutputTooSmall = 6,
    #[error("kernel reported an unknown status")]
    Unknown = 99,
}

impl KernelError {
    pub fn code(self) -> i32 {
        self as i32
    }

    pub fn from_code(code: i32) -> Option<Self> {
        Some(match code {
            0 => return None,
            1 => Self::BadLength,
            2 => Self::NonFinite,
            3 => Self::ScoreOutOfRange,
            4 => Self::BadMode,
            5 => Self::VersionMismatch,
            6 => Self::OutputTooSmall,
            _ => Self::Unknown,
        })
    }
}

/// An implementation of the buffer-in, buffer-out NMS contract.
pub trait NmsKernel {
    fn layout_version(&self) -> u32;
    fn run(&self, buffer: &[f64], iou_threshold: f64, mode: NmsMode) -> Result<Vec<f64>, KernelError>;
}

/// The in-process implementation every other kernel is checked against.
#[derive(Debug, Clone, Copy, Default)]
pub struct ReferenceKernel;

impl NmsKernel for ReferenceKernel {
    fn layout_version(&self) -> u32 {
        LAYOUT_VERSION
    }

    fn run(&self, buffer: &[f64], iou_threshold: f64, mode: NmsMode) -> Result<Vec<f64>, KernelError> {
        let dets = decode_candidates(buffer)?;
        let kept = match mode {
            NmsMode::Standard => standard_nms(&dets, iou_threshold),
            NmsMode::LocalityAware => locality_aware_nms(&dets, iou_threshold),
        };
        Ok(encode_candidates(&kept))
    }
}

pub fn encode_candidates(dets: &[Detection]) -> Vec<f64> {
    let mut buf = Vec::with_capacity(dets.len() * RECORD_LEN);
    for d in dets {
        buf.extend_from_slice(&d.quad.to_coords());
        buf.push(d.score);
    }
    buf
}

pub fn decode_candidates(buffer: &[f64]) -> Result<Vec<Detection>, KernelError> {
    if !buffer.len().is_multiple_of(RECORD_LEN) {
        return Err(KernelError::BadLength);
    }
    if buffer.iter().any(|v| !v.is_finite()) {
        return Err(KernelError::NonFinite);
    }
    buffer
        .chunks_exact(RECORD_LEN)
        .map(|rec| {
            let score = rec[8];
            if !(0.0..=1.0).contains(&score) {
                return Err(KernelError::ScoreOutOfRange);
            }
            let coords: [f64; 8] = rec[..8].try_into().expect("record has 8 coordinates");
            Ok(Detection::new(Quad::from_coords(coords), score))
        })
        .collect()
}

pub fn to_bytes(buffer: &[f64]) -> Vec<u8> {
    buffer.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn from_bytes(bytes: &[u8]) -> Result<Vec<f64>, KernelError> {
    if !bytes.len().is_multiple_of(RECORD_BYTES) {
        return Err(KernelError::BadLength);
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
        .collect())
}

/// Row-major candidate cloud shaped like real decoder output: a few source
/// boxes, each seen by many jittered per-cell candidates, plus sparse noise.
pub fn synthetic_candidates(count: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sources = (count / 50).max(1);
    let boxes: Vec<RBox> = (0..sources)
        .map(|_| {
            RBox::new(
                rng.random_range(0.0..2000.0),
                rng.random_range(0.0..2000.0),
                rng.random_range(20.0..200.0),
                rng.random_range(8.0..40.0),
                rng.random_range(-0.7..0.7),
            )
        })
        .collect();
    let mut dets: Vec<(f64, Detection)> = (0..count)
        .map(|_| {
            let score = rng.random_range(0.5..1.0);
            let r = if rng.random_bool(0.1) {
                RBox::new(
                    rng.random_range(0.0..2000.0),
                    rng.random_range(0.0..2000.0),
                    rng.random_range(5.0..60.0),
                    rng.random_range(5.0..30.0),
                    rng.random_range(-0.7..0.7),
                )
            } else {
                let b = boxes[rng.random_range(0..sources)];
                RBox::new(
                    b.cx + rng.random_range(-3.0..3.0),
                    b.cy + rng.random_range(-3.0..3.0),
                    b.w * rng.random_range(0.9..1.1),
                    b.h * rng.random_range(0.9..1.1),
                    b.theta + rng.random_range(-0.05..0.05),
                )
            };
            (r.cy.floor() * 1e4 + r.cx, Detection::new(r.to_quad(), score))
        })
        .collect();
    dets.sort_by(|a, b| a.0.total_cmp(&b.0));
    encode_candidates(&dets.into_iter().map(|(_, d)| d).collect::<Vec<_>>())
}

#[derive(Debug, Clone, Default)]
pub struct ConformanceReport {
    pub cases: usize,
    pub max_coord_diff: f64,
    pub failures: Vec<String>,
}

impl ConformanceReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Runs `candidate` and the reference on every buffer of `corpus` and
/// compares survivor counts, order and coordinates.
pub fn check_conformance(
    candidate: &dyn NmsKernel,
    corpus: &[Vec<f64>],
    iou_threshold: f64,
    mode: NmsMode,
) -> ConformanceReport {
    let mut report = ConformanceReport::default();
    if candidate.layout_version() != LAYOUT_VERSION {
        report.failures.push(format!(
            "layout version {} != {}",
            candidate.layout_version(),
            LAYOUT_VERSION
        ));
        return report;
    }
    for (case, buf) in corpus.iter().enumerate() {
        report.cases += 1;
        let expected = ReferenceKernel.run(buf, iou_threshold, mode);
        let got = candidate.run(buf, iou_threshold, mode);
        match (expected, got) {
            (Ok(e), Ok(g)) if e.len() != g.len() => report.failures.push(format!(
                "case {case}: {} survivors, reference has {}",
                g.len() / RECORD_LEN,
                e.len() / RECORD_LEN
            )),
            (Ok(e), Ok(g)) => {
                let diff = e.iter().zip(&g).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                report.max_coord_diff = report.max_coord_diff.max(diff);
                if diff > CONFORMANCE_TOLERANCE {
                    report.failures.push(format!("case {case}: max difference {diff:e}"));
                }
            }
            (Err(e), Err(g)) if e == g => {}
            (e, g) => report.failures.push(format!("case {case}: reference {e:?}, candidate {g:?}")),
        }
    }
    report
}

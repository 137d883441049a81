//! Analytic receptive-field arithmetic for convolution stacks and
//! multi-branch blocks.
//!
//! For a layer with kernel `k`, dilation `d` and stride `s`, applied where
//! the current field is `size` wide and neighbouring outputs are `jump`
//! input pixels apart:
//!
//! ```text
//! k_eff = k + (k - 1)(d - 1)
//! size' = size + (k_eff - 1) * jump
//! jump' = jump * s
//! ```
//!
//! Rows and columns are tracked separately so that `1×3` / `3×1` kernels
//! produce elongated footprints.

use std::collections::BTreeSet;

use image::{GrayImage, Luma};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RfError {
    #[error("empty layer list")]
    Empty,
    #[error("kernel, stride and dilation must all be at least 1")]
    ZeroParameter,
    #[error("branches disagree on output jump ({0} vs {1})")]
    JumpMismatch(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub dilation: usize,
}

impl LayerSpec {
    pub const fn new(kernel_h: usize, kernel_w: usize, stride: usize, dilation: usize) -> Self {
        Self { kernel_h, kernel_w, stride, dilation }
    }

    /// Square `k×k` kernel.
    pub const fn square(k: usize, stride: usize, dilation: usize) -> Self {
        Self::new(k, k, stride, dilation)
    }

    /// `(rows, cols)` extent of the dilated kernel.
    pub fn effective_kernel(&self) -> (usize, usize) {
        let eff = |k: usize| k + (k - 1) * (self.dilation - 1);
        (eff(self.kernel_h), eff(self.kernel_w))
    }

    fn validate(&self) -> Result<(), RfError> {
        if self.kernel_h == 0 || self.kernel_w == 0 || self.stride == 0 || self.dilation == 0 {
            Err(RfError::ZeroParameter)
        } else {
            Ok(())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RfProfile {
    /// Largest footprint side over all branches.
    pub size: usize,
    /// Output stride in input pixels.
    pub jump: usize,
    /// Distinct branch footprint sides (the larger of rows/cols per branch).
    pub radii: Vec<usize>,
    /// `(rows, cols)` footprint of every branch, in branch order.
    pub footprints: Vec<(usize, usize)>,
}

impl RfProfile {
    /// A single-branch profile with a `side × side` footprint.
    pub fn square(side: usize, jump: usize) -> Self {
        Self {
            size: side,
            jump,
            radii: vec![side],
            footprints: vec![(side, side)],
        }
    }

    pub fn max_radius(&self) -> usize {
        self.radii.iter().copied().max().unwrap_or(0)
    }
}

/// Field of a plain chain of layers, starting from a single input pixel.
pub fn compute_rf_profile(layers: &[LayerSpec]) -> Result<RfProfile, RfError> {
    let ((h, w), jump) = chain(layers, (1, 1), 1)?;
    let side = h.max(w);
    Ok(RfProfile {
        size: side,
        jump,
        radii: vec![side],
        footprints: vec![(h, w)],
    })
}

/// Field of a block whose branches run in parallel on the same input.
pub fn compute_block_profile(branches: &[Vec<LayerSpec>]) -> Result<RfProfile, RfError> {
    if branches.is_empty() {
        return Err(RfError::Empty);
    }
    let mut footprints = Vec::with_capacity(branches.len());
    let mut jump = None;
    for branch in branches {
        let (hw, j) = chain(branch, (1, 1), 1)?;
        match jump {
            Some(prev) if prev != j => return Err(RfError::JumpMismatch(prev, j)),
            _ => jump = Some(j),
        }
        footprints.push(hw);
    }
    let radii: BTreeSet<usize> = footprints.iter().map(|&(h, w)| h.max(w)).collect();
    Ok(RfProfile {
        size: radii.iter().copied().max().unwrap_or(1),
        jump: jump.unwrap_or(1),
        radii: radii.into_iter().collect(),
        footprints,
    })
}

/// Profile of `layers` applied on top of an existing profile: every branch
/// footprint grows by the chain, and the jump multiplies.
pub fn extend_profile(base: &RfProfile, layers: &[LayerSpec]) -> Result<RfProfile, RfError> {
    let mut footprints = Vec::with_capacity(base.footprints.len());
    let mut jump = base.jump;
    for &fp in &base.footprints {
        let (hw, j) = chain(layers, fp, base.jump)?;
        footprints.push(hw);
        jump = j;
    }
    let radii: BTreeSet<usize> = footprints.iter().map(|&(h, w)| h.max(w)).collect();
    Ok(RfProfile {
        size: radii.iter().copied().max().unwrap_or(0),
        jump,
        radii: radii.into_iter().collect(),
        footprints,
    })
}

fn chain(
    layers: &[LayerSpec],
    start: (usize, usize),
    jump: usize,
) -> Result<((usize, usize), usize), RfError> {
    if layers.is_empty() {
        return Err(RfError::Empty);
    }
    let (mut h, mut w, mut jump) = (start.0, start.1, jump);
    for layer in layers {
        layer.validate()?;
        let (kh, kw) = layer.effective_kernel();
        h += (kh - 1) * jump;
        w += (kw - 1) * jump;
        jump *= layer.stride;
    }
    Ok(((h, w), jump))
}

/// Branch layouts shared by the network and the profiler.
pub mod plans {
    use super::LayerSpec;

    const fn conv(kh: usize, kw: usize, dilation: usize) -> LayerSpec {
        LayerSpec::new(kh, kw, 1, dilation)
    }

    /// Receptive Field Block: 1×1 bottleneck, a k×k conv, then a 3×3
    /// atrous conv, with (k, dilation) ∈ {(1, 1), (3, 3), (5, 5)}.
    pub fn rfb() -> Vec<Vec<LayerSpec>> {
        vec![
            vec![conv(1, 1, 1), conv(3, 3, 1)],
            vec![conv(1, 1, 1), conv(3, 3, 1), conv(3, 3, 3)],
            vec![conv(1, 1, 1), conv(5, 5, 1), conv(3, 3, 5)],
        ]
    }

    /// Lighter variant: no 5×5 kernels, asymmetric 1×3 / 3×1 mid convs and
    /// dilations {1, 3, 3, 5}.
    pub fn rfb_s() -> Vec<Vec<LayerSpec>> {
        vec![
            vec![conv(1, 1, 1), conv(3, 3, 1)],
            vec![conv(1, 1, 1), conv(3, 1, 1), conv(3, 3, 3)],
            vec![conv(1, 1, 1), conv(1, 3, 1), conv(3, 3, 3)],
            vec![conv(1, 1, 1), conv(1, 3, 1), conv(3, 1, 1), conv(3, 3, 5)],
        ]
    }

    /// Plain decoder refinement the RFB-s stage replaces: a 1×1 bottleneck
    /// and two stacked 3×3 convs.
    pub fn plain_refinement() -> Vec<LayerSpec> {
        vec![conv(1, 1, 1), conv(3, 3, 1), conv(3, 3, 1)]
    }
}

/// Superposes every branch footprint, centered, on a black canvas. Each
/// branch adds `255 / branches` to the pixels it covers.
pub fn render_rf_map(profile: &RfProfile, width: u32, height: u32) -> GrayImage {
    let mut acc = vec![0u32; (width * height) as usize];
    let n = profile.footprints.len().max(1) as u32;
    for &(fh, fw) in &profile.footprints {
        let x0 = (width as i64 - fw as i64).div_euclid(2);
        let y0 = (height as i64 - fh as i64).div_euclid(2);
        for y in y0.max(0)..(y0 + fh as i64).min(height as i64) {
            for x in x0.max(0)..(x0 + fw as i64).min(width as i64) {
                acc[(y as u32 * width + x as u32) as usize] += 255 / n;
            }
        }
    }
    GrayImage::from_fn(width, height, |x, y| {
        Luma([acc[(y * width + x) as usize].min(255) as u8])
    })
}

/// Number of nonzero pixels.
pub fn support(img: &GrayImage) -> usize {
    img.pixels().filter(|p| p.0[0] > 0).count()
}

//! Training objectives with analytic gradients.
//!
//! `total = score_loss + lambda_g * geo_loss` and
//! `geo_loss = iou_term + lambda_theta * angle_term`. Every loss has a
//! `*_with_grad` form returning the gradient with respect to the
//! prediction, which the trainer feeds back into the network.

use ndarray::{s, Array2, Array3, ArrayView2, ArrayView3, Axis, Dimension, Zip};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::labelgen::TrainTarget;
use crate::output::ModelOutput;

/// Smoothing term of the dice coefficient.
pub const DICE_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LossError {
    #[error("shape mismatch: {what} {got:?} vs {expected:?}")]
    ShapeMismatch {
        what: &'static str,
        got: Vec<usize>,
        expected: Vec<usize>,
    },
    #[error("negative distance in {grid} at {index:?}")]
    NegativeDistance { grid: &'static str, index: [usize; 3] },
    #[error("non-finite value in {grid} at {index:?}")]
    NonFinite { grid: &'static str, index: Vec<usize> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_g: f64,
    pub lambda_theta: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_g: 1.0,
            lambda_theta: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossReport {
    pub total: f64,
    pub score_loss: f64,
    pub geo_loss: f64,
    pub iou_term: f64,
    pub angle_term: f64,
}

/// Gradient of the total loss with respect to a [`ModelOutput`].
#[derive(Debug, Clone, PartialEq)]
pub struct OutputGradient {
    pub score: Array3<f64>,
    pub geometry: Array3<f64>,
}

fn check_same(what: &'static str, got: &[usize], expected: &[usize]) -> Result<(), LossError> {
    if got == expected {
        Ok(())
    } else {
        Err(LossError::ShapeMismatch {
            what,
            got: got.to_vec(),
            expected: expected.to_vec(),
        })
    }
}

pub fn dice_loss(
    pred: ArrayView2<f64>,
    gt: ArrayView2<f64>,
    mask: ArrayView2<f64>,
) -> Result<f64, LossError> {
    dice_loss_with_grad(pred, gt, mask).map(|(l, _)| l)
}

/// `1 - (2·Σ p·g·m + ε) / (Σ p·m + Σ g·m + ε)`.
pub fn dice_loss_with_grad(
    pred: ArrayView2<f64>,
    gt: ArrayView2<f64>,
    mask: ArrayView2<f64>,
) -> Result<(f64, Array2<f64>), LossError> {
    check_same("dice gt", gt.shape(), pred.shape())?;
    check_same("dice mask", mask.shape(), pred.shape())?;
    let (mut inter, mut sp, mut sg) = (0.0, 0.0, 0.0);
    Zip::from(&pred).and(&gt).and(&mask).for_each(|&p, &g, &m| {
        inter += p * g * m;
        sp += p * m;
        sg += g * m;
    });
    let num = 2.0 * inter + DICE_EPS;
    let den = sp + sg + DICE_EPS;
    let loss = 1.0 - num / den;
    let grad = Zip::from(&gt)
        .and(&mask)
        .map_collect(|&g, &m| -(2.0 * g * m * den - num * m) / (den * den));
    Ok((loss, grad))
}

pub fn iou_loss(
    pred: ArrayView3<f64>,
    gt: ArrayView3<f64>,
    gt_score: ArrayView2<f64>,
) -> Result<f64, LossError> {
    iou_loss_with_grad(pred, gt, gt_score).map(|(l, _)| l)
}

/// Mean of `-ln IoU` over positive cells, for the axis-aligned boxes the
/// four distances describe in the box frame. Extents are pixel-inclusive
/// (`top + bottom + 1`), which keeps the intersection at least one pixel
/// wide. Only the first four channels of `pred` and `gt` are read; the
/// returned gradient has four channels.
pub fn iou_loss_with_grad(
    pred: ArrayView3<f64>,
    gt: ArrayView3<f64>,
    gt_score: ArrayView2<f64>,
) -> Result<(f64, Array3<f64>), LossError> {
    let (rows, cols, ch) = pred.dim();
    check_same("iou gt", gt.shape(), pred.shape())?;
    check_same("iou score", gt_score.shape(), &[rows, cols])?;
    if ch < 4 {
        return Err(LossError::ShapeMismatch {
            what: "iou channels",
            got: vec![ch],
            expected: vec![4],
        });
    }
    let mut grad = Array3::<f64>::zeros((rows, cols, 4));
    let positives = gt_score.iter().filter(|&&v| v > 0.5).count();
    if positives == 0 {
        return Ok((0.0, grad));
    }
    let n = positives as f64;
    let mut total = 0.0;
    for ((r, c), &sc) in gt_score.indexed_iter() {
        if sc <= 0.5 {
            continue;
        }
        let mut p = [0.0; 4];
        let mut g = [0.0; 4];
        for k in 0..4 {
            p[k] = pred[[r, c, k]];
            g[k] = gt[[r, c, k]];
            if p[k] < 0.0 {
                return Err(LossError::NegativeDistance { grid: "prediction", index: [r, c, k] });
            }
            if g[k] < 0.0 {
                return Err(LossError::NegativeDistance { grid: "target", index: [r, c, k] });
            }
        }
        let (loss, dl) = pixel_iou_loss(p, g);
        total += loss;
        for k in 0..4 {
            grad[[r, c, k]] = dl[k] / n;
        }
    }
    Ok((total / n, grad))
}

/// `-ln IoU` and its gradient for one cell; channel order t, r, b, l.
fn pixel_iou_loss(p: [f64; 4], g: [f64; 4]) -> (f64, [f64; 4]) {
    let hp = p[0] + p[2] + 1.0;
    let wp = p[1] + p[3] + 1.0;
    let hg = g[0] + g[2] + 1.0;
    let wg = g[1] + g[3] + 1.0;
    let hi = p[0].min(g[0]) + p[2].min(g[2]) + 1.0;
    let wi = p[1].min(g[1]) + p[3].min(g[3]) + 1.0;
    let inter = hi * wi;
    let union = hp * wp + hg * wg - inter;
    let loss = union.ln() - inter.ln();

    let shrink = |k: usize| if p[k] < g[k] { 1.0 } else { 0.0 };
    let d_inter = [shrink(0) * wi, shrink(1) * hi, shrink(2) * wi, shrink(3) * hi];
    let d_area = [wp, hp, wp, hp];
    let mut d = [0.0; 4];
    for k in 0..4 {
        d[k] = (d_area[k] - d_inter[k]) / union - d_inter[k] / inter;
    }
    (loss, d)
}

pub fn angle_loss(
    pred: ArrayView2<f64>,
    gt: ArrayView2<f64>,
    gt_score: ArrayView2<f64>,
) -> Result<f64, LossError> {
    angle_loss_with_grad(pred, gt, gt_score).map(|(l, _)| l)
}

/// Mean of `1 - cos(pred - gt)` over positive cells.
pub fn angle_loss_with_grad(
    pred: ArrayView2<f64>,
    gt: ArrayView2<f64>,
    gt_score: ArrayView2<f64>,
) -> Result<(f64, Array2<f64>), LossError> {
    check_same("angle gt", gt.shape(), pred.shape())?;
    check_same("angle score", gt_score.shape(), pred.shape())?;
    let positives = gt_score.iter().filter(|&&v| v > 0.5).count();
    let mut grad = Array2::<f64>::zeros(pred.raw_dim());
    if positives == 0 {
        return Ok((0.0, grad));
    }
    let n = positives as f64;
    let mut total = 0.0;
    Zip::from(&mut grad)
        .and(&pred)
        .and(&gt)
        .and(&gt_score)
        .for_each(|dg, &p, &g, &sc| {
            if sc > 0.5 {
                let d = p - g;
                total += 1.0 - d.cos();
                *dg = d.sin() / n;
            }
        });
    Ok((total / n, grad))
}

pub fn total_loss(
    pred: &ModelOutput,
    target: &TrainTarget,
    weights: &LossWeights,
) -> Result<LossReport, LossError> {
    total_loss_with_grad(pred, target, weights).map(|(r, _)| r)
}

/// Full objective plus its gradient with respect to every output channel.
pub fn total_loss_with_grad(
    pred: &ModelOutput,
    target: &TrainTarget,
    weights: &LossWeights,
) -> Result<(LossReport, OutputGradient), LossError> {
    let (rows, cols) = target.dim();
    check_same("score", pred.score.shape(), &[rows, cols, 1])?;
    check_same("geometry", pred.geometry.shape(), &[rows, cols, 5])?;
    check_same("target geometry", target.geometry.shape(), &[rows, cols, 5])?;
    check_same("mask", target.mask.shape(), &[rows, cols])?;
    check_finite("predicted score", pred.score.view().into_dyn())?;
    check_finite("predicted geometry", pred.geometry.view().into_dyn())?;
    check_finite("target score", target.score.view().into_dyn())?;
    check_finite("target geometry", target.geometry.view().into_dyn())?;
    check_finite("target mask", target.mask.view().into_dyn())?;

    let gt_score = target.score.view();
    let (score_loss, d_score) = dice_loss_with_grad(pred.score_map(), gt_score, target.mask.view())?;
    let (iou_term, d_iou) = iou_loss_with_grad(
        pred.geometry.slice(s![.., .., 0..4]),
        target.geometry.slice(s![.., .., 0..4]),
        gt_score,
    )?;
    let (angle_term, d_angle) = angle_loss_with_grad(
        pred.geometry.index_axis(Axis(2), 4),
        target.geometry.index_axis(Axis(2), 4),
        gt_score,
    )?;

    let geo_loss = iou_term + weights.lambda_theta * angle_term;
    let report = LossReport {
        total: score_loss + weights.lambda_g * geo_loss,
        score_loss,
        geo_loss,
        iou_term,
        angle_term,
    };

    let mut geometry = Array3::<f64>::zeros((rows, cols, 5));
    geometry
        .slice_mut(s![.., .., 0..4])
        .assign(&(d_iou * weights.lambda_g));
    geometry
        .index_axis_mut(Axis(2), 4)
        .assign(&(d_angle * (weights.lambda_g * weights.lambda_theta)));
    let score = d_score.insert_axis(Axis(2));
    Ok((report, OutputGradient { score, geometry }))
}

fn check_finite(grid: &'static str, a: ndarray::ArrayViewD<f64>) -> Result<(), LossError> {
    match a.indexed_iter().find(|(_, v)| !v.is_finite()) {
        Some((idx, _)) => Err(LossError::NonFinite {
            grid,
            index: idx.slice().to_vec(),
        }),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;
    use std::f64::consts::{E, FRAC_PI_2, PI};

    #[test]
    fn dice_perfect_and_disjoint() {
        let gt = array![[1.0, 0.0], [1.0, 1.0]];
        let ones = Array2::ones((2, 2));
        assert!(dice_loss(gt.view(), gt.view(), ones.view()).unwrap() <= 1e-6);
        let zero = Array2::zeros((2, 2));
        let l = dice_loss(zero.view(), gt.view(), ones.view()).unwrap();
        assert_relative_eq!(l, 1.0, epsilon = 1e-5);
    }

    #[test]
    fn dice_half_overlap() {
        // pred covers half of gt and has equal total mass.
        let gt = array![[1.0, 1.0, 0.0, 0.0]];
        let pred = array![[1.0, 0.0, 1.0, 0.0]];
        let ones = Array2::ones((1, 4));
        let l = dice_loss(pred.view(), gt.view(), ones.view()).unwrap();
        assert_relative_eq!(l, 0.5, epsilon = 1e-5);
    }

    #[test]
    fn dice_ignores_masked_cells() {
        let gt = array![[1.0, 0.0, 0.0]];
        let mask = array![[1.0, 1.0, 0.0]];
        let a = dice_loss(array![[0.7, 0.2, 0.1]].view(), gt.view(), mask.view()).unwrap();
        let b = dice_loss(array![[0.7, 0.2, 0.9]].view(), gt.view(), mask.view()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dice_shape_mismatch() {
        let a = Array2::<f64>::zeros((2, 2));
        let b = Array2::<f64>::zeros((2, 3));
        assert!(matches!(
            dice_loss(a.view(), b.view(), a.view()),
            Err(LossError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn iou_loss_perfect_and_one_over_e() {
        let g = [3.0, 4.0, 2.0, 5.0];
        let gt = Array3::from_shape_vec((1, 1, 4), g.to_vec()).unwrap();
        let score = array![[1.0]];
        assert_eq!(iou_loss(gt.view(), gt.view(), score.view()).unwrap(), 0.0);

        // Same vertical extent; horizontal extent grown to e times the gt.
        let w = g[1] + g[3] + 1.0;
        let mut p = g;
        p[1] += w * (E - 1.0);
        let pred = Array3::from_shape_vec((1, 1, 4), p.to_vec()).unwrap();
        let l = iou_loss(pred.view(), gt.view(), score.view()).unwrap();
        assert_relative_eq!(l, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn iou_loss_without_positives_is_zero() {
        let a = Array3::<f64>::ones((2, 2, 4));
        let z = Array2::<f64>::zeros((2, 2));
        assert_eq!(iou_loss(a.view(), a.view(), z.view()).unwrap(), 0.0);
    }

    #[test]
    fn iou_loss_rejects_negative_distance() {
        let mut p = Array3::<f64>::ones((1, 1, 4));
        p[[0, 0, 2]] = -1.0;
        let g = Array3::<f64>::ones((1, 1, 4));
        let score = array![[1.0]];
        assert!(matches!(
            iou_loss(p.view(), g.view(), score.view()),
            Err(LossError::NegativeDistance { index: [0, 0, 2], .. })
        ));
    }

    #[test]
    fn angle_loss_values() {
        let score = array![[1.0, 1.0]];
        let gt = array![[0.1, -0.3]];
        assert_eq!(angle_loss(gt.view(), gt.view(), score.view()).unwrap(), 0.0);
        let quarter = gt.mapv(|v| v + FRAC_PI_2);
        assert_relative_eq!(angle_loss(quarter.view(), gt.view(), score.view()).unwrap(), 1.0, epsilon = 1e-12);
        let half = gt.mapv(|v| v + PI);
        assert_relative_eq!(angle_loss(half.view(), gt.view(), score.view()).unwrap(), 2.0, epsilon = 1e-12);
    }

    fn toy_target() -> TrainTarget {
        let mut geometry = Array3::zeros((2, 2, 5));
        geometry[[0, 0, 0]] = 2.0;
        geometry[[0, 0, 1]] = 3.0;
        geometry[[0, 0, 2]] = 4.0;
        geometry[[0, 0, 3]] = 5.0;
        geometry[[0, 0, 4]] = 0.2;
        TrainTarget {
            score: array![[1.0, 0.0], [0.0, 0.0]],
            geometry,
            mask: Array2::ones((2, 2)),
            stride: 4,
        }
    }

    #[test]
    fn total_loss_composition() {
        let t = toy_target();
        let perfect = ModelOutput {
            score: t.score.clone().insert_axis(Axis(2)),
            geometry: t.geometry.clone(),
            stride: 4,
        };
        let r = total_loss(&perfect, &t, &LossWeights::default()).unwrap();
        assert!(r.total <= 1e-6, "{r:?}");

        let mut rotated = perfect.clone();
        rotated.geometry[[0, 0, 4]] += FRAC_PI_2;
        let r = total_loss(&rotated, &t, &LossWeights::default()).unwrap();
        assert_relative_eq!(r.geo_loss, 10.0, epsilon = 1e-12);
        assert_relative_eq!(r.total, r.score_loss + 10.0, epsilon = 1e-12);
    }

    #[test]
    fn total_loss_locates_nan() {
        let t = toy_target();
        let mut out = ModelOutput::zeros(2, 2, 4);
        out.geometry[[1, 0, 3]] = f64::NAN;
        match total_loss(&out, &t, &LossWeights::default()) {
            Err(LossError::NonFinite { grid, index }) => {
                assert_eq!(grid, "predicted geometry");
                assert_eq!(index, vec![1, 0, 3]);
            }
            other => panic!("expected NonFinite, got {other:?}"),
        }
    }

    #[test]
    fn zero_positive_image_has_zero_geometry_loss() {
        let t = TrainTarget {
            score: Array2::zeros((3, 3)),
            geometry: Array3::zeros((3, 3, 5)),
            mask: Array2::ones((3, 3)),
            stride: 4,
        };
        let mut out = ModelOutput::zeros(3, 3, 4);
        out.score.fill(0.3);
        let r = total_loss(&out, &t, &LossWeights::default()).unwrap();
        assert_eq!(r.geo_loss, 0.0);
        assert!(r.total.is_finite());
    }
}

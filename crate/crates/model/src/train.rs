//! One optimisation step: forward, analytic loss gradient, backward.
//!
//! The loss and its gradient with respect to the head outputs are computed
//! in `f64` by [`rfbtd_core::losses`]. Backpropagating the surrogate
//! `Σ output · ∂L/∂output` through the network then yields the exact
//! parameter gradients of the loss.

use candle_core::{Result as CandleResult, Tensor};
use rfbtd_core::labelgen::TrainTarget;
use rfbtd_core::losses::{total_loss_with_grad, LossReport, LossWeights};

use crate::detector::{from_hwc, Detector, Heads};
use crate::error::ModelError;
use crate::layers::Mode;
use crate::optim::AdaGrad;

/// Batch-mean loss of `heads` against `targets`, plus the matching output
/// gradients as tensors shaped like the heads.
pub fn batch_loss(
    heads: &Heads,
    targets: &[TrainTarget],
    weights: &LossWeights,
) -> Result<(LossReport, Tensor, Tensor), ModelError> {
    let outputs = heads.to_outputs_full()?;
    if outputs.len() != targets.len() {
        return Err(ModelError::Checkpoint(format!(
            "{} outputs for {} targets",
            outputs.len(),
            targets.len()
        )));
    }
    let n = outputs.len() as f64;
    let device = heads.score.device();
    let mut report = LossReport::default();
    let (mut gs, mut gg) = (Vec::new(), Vec::new());
    for (out, target) in outputs.iter().zip(targets) {
        let (r, grad) = total_loss_with_grad(out, target, weights)?;
        report.total += r.total / n;
        report.score_loss += r.score_loss / n;
        report.geo_loss += r.geo_loss / n;
        report.iou_term += r.iou_term / n;
        report.angle_term += r.angle_term / n;
        gs.push(from_hwc(&(grad.score / n), device)?);
        gg.push(from_hwc(&(grad.geometry / n), device)?);
    }
    Ok((report, Tensor::stack(&gs, 0)?, Tensor::stack(&gg, 0)?))
}

fn surrogate(heads: &Heads, d_score: &Tensor, d_geometry: &Tensor) -> CandleResult<Tensor> {
    heads.score.mul(d_score)?.sum_all()? + heads.geometry.mul(d_geometry)?.sum_all()?
}

/// Forward in training mode, backward, and one optimizer update.
pub fn train_step(
    model: &Detector,
    optimizer: &mut AdaGrad,
    images: &Tensor,
    targets: &[TrainTarget],
    weights: &LossWeights,
    lr: f64,
) -> Result<LossReport, ModelError> {
    let heads = model.forward(images, Mode::Train)?;
    let (report, d_score, d_geometry) = batch_loss(&heads, targets, weights)?;
    let grads = surrogate(&heads, &d_score, &d_geometry)?.backward()?;
    optimizer.step(model.params(), &grads, lr)?;
    Ok(report)
}

/// Loss without updating anything, with batch norm in inference mode.
pub fn eval_loss(
    model: &Detector,
    images: &Tensor,
    targets: &[TrainTarget],
    weights: &LossWeights,
) -> Result<LossReport, ModelError> {
    let heads = model.forward(images, Mode::Eval)?;
    Ok(batch_loss(&heads, targets, weights)?.0)
}

//! From dense predictions to final detections: thresholding, per-cell
//! decoding and non-maximum suppression.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::geometry::{decode_pixel_geometry, quad_iou, PixelGeometry, Quad};
use crate::labelgen::cell_center;
use crate::output::ModelOutput;

/// A detected text region with its confidence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub quad: Quad,
    pub score: f64,
}

impl Detection {
    pub fn new(quad: Quad, score: f64) -> Self {
        Self { quad, score }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(i32)]
pub enum NmsMode {
    Standard = 0,
    #[default]
    LocalityAware = 1,
}

impl NmsMode {
    pub fn from_code(code: i32) -> Option<Self> {
        match code {
            0 => Some(Self::Standard),
            1 => Some(Self::LocalityAware),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NmsConfig {
    pub score_threshold: f64,
    pub nms_iou_threshold: f64,
    pub merge_mode: NmsMode,
}

impl Default for NmsConfig {
    fn default() -> Self {
        Self {
            score_threshold: 0.8,
            nms_iou_threshold: 0.2,
            merge_mode: NmsMode::LocalityAware,
        }
    }
}

/// One candidate per cell whose score reaches the threshold, in row-major
/// order. Coordinates are multiplied by `scale_back` to return to the
/// original image frame.
pub fn decode_predictions(
    out: &ModelOutput,
    cfg: &NmsConfig,
    scale_back: (f64, f64),
) -> Vec<Detection> {
    let (rows, cols) = out.dim();
    let mut dets = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let score = out.score[[r, c, 0]];
            // Written this way so NaN scores are skipped too.
            #[allow(clippy::neg_cmp_op_on_partial_ord)]
            if !(score >= cfg.score_threshold) {
                continue;
            }
            let g = PixelGeometry::from_channels(std::array::from_fn(|k| out.geometry[[r, c, k]]));
            let Ok(rbox) = decode_pixel_geometry(cell_center(r, c, out.stride), &g) else {
                continue;
            };
            let quad = rbox.to_quad().scale(scale_back.0, scale_back.1);
            dets.push(Detection::new(quad, score.clamp(0.0, 1.0)));
        }
    }
    dets
}

/// Thresholds, decodes and suppresses according to `cfg`.
pub fn detect(out: &ModelOutput, cfg: &NmsConfig, scale_back: (f64, f64)) -> Vec<Detection> {
    let candidates = decode_predictions(out, cfg, scale_back);
    match cfg.merge_mode {
        NmsMode::Standard => standard_nms(&candidates, cfg.nms_iou_threshold),
        NmsMode::LocalityAware => locality_aware_nms(&candidates, cfg.nms_iou_threshold),
    }
}

/// Greedy suppression in descending score order; equal scores keep the
/// lower input index first. Survivors come out in selection order.
pub fn standard_nms(dets: &[Detection], iou_threshold: f64) -> Vec<Detection> {
    let quads: Vec<Quad> = dets.iter().map(|d| d.quad).collect();
    let scores: Vec<f64> = dets.iter().map(|d| d.score).collect();
    suppress(&quads, &scores, iou_threshold)
        .into_iter()
        .map(|i| dets[i])
        .collect()
}

/// Indices kept by greedy NMS over `(quads, ranking scores)`.
fn suppress(quads: &[Quad], scores: &[f64], iou_threshold: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..quads.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut suppressed = vec![false; quads.len()];
    let mut keep = Vec::new();
    for (pos, &i) in order.iter().enumerate() {
        if suppressed[i] {
            continue;
        }
        keep.push(i);
        for &j in &order[pos + 1..] {
            if !suppressed[j] && quad_iou(&quads[i], &quads[j]) > iou_threshold {
                suppressed[j] = true;
            }
        }
    }
    keep
}

/// Row-order merge followed by standard NMS.
///
/// Each candidate is folded into the running group while their IoU exceeds
/// the threshold: vertices are averaged with score weights and the scores
/// summed. Groups are ranked by the summed score; the reported score is
/// clamped to `[0, 1]`.
pub fn locality_aware_nms(dets: &[Detection], iou_threshold: f64) -> Vec<Detection> {
    let mut groups: Vec<([f64; 8], f64)> = Vec::new();
    let mut current: Option<([f64; 8], f64)> = None;
    for d in dets {
        let coords = d.quad.to_coords();
        current = match current {
            Some((acc, weight)) if quad_iou(&Quad::from_coords(acc), &d.quad) > iou_threshold => {
                Some(weighted_merge(acc, weight, coords, d.score))
            }
            Some(group) => {
                groups.push(group);
                Some((coords, d.score))
            }
            None => Some((coords, d.score)),
        };
    }
    groups.extend(current);

    let quads: Vec<Quad> = groups.iter().map(|(c, _)| Quad::from_coords(*c)).collect();
    let weights: Vec<f64> = groups.iter().map(|(_, w)| *w).collect();
    suppress(&quads, &weights, iou_threshold)
        .into_iter()
        .map(|i| Detection::new(quads[i], weights[i].clamp(0.0, 1.0)))
        .collect()
}

fn weighted_merge(a: [f64; 8], wa: f64, b: [f64; 8], wb: f64) -> ([f64; 8], f64) {
    let total = wa + wb;
    let merged = if total > 0.0 {
        std::array::from_fn(|k| (wa * a[k] + wb * b[k]) / total)
    } else {
        std::array::from_fn(|k| (a[k] + b[k]) / 2.0)
    };
    (merged, total)
}

//! ICDAR2015-style detection evaluation.
//!
//! Matching is greedy and one-to-one: detections are visited by descending
//! score (lower index first on ties) and each takes the unmatched regular
//! ground truth it overlaps most, provided the IoU reaches the threshold.
//! A detection whose best-overlapping ground truth is a don't-care region
//! (at or above the threshold) is left out of the precision denominator.
//! Empty denominators give 0.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{quad_iou, Quad};
use crate::labelgen::Annotation;
use crate::postprocess::Detection;

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

/// Raw counts for one image or a whole dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MatchCounts {
    pub matched: usize,
    /// Detections that count toward precision.
    pub detections: usize,
    /// Ground truths that are not don't-care.
    pub ground_truths: usize,
}

impl std::ops::Add for MatchCounts {
    type Output = MatchCounts;
    fn add(self, o: MatchCounts) -> MatchCounts {
        MatchCounts {
            matched: self.matched + o.matched,
            detections: self.detections + o.detections,
            ground_truths: self.ground_truths + o.ground_truths,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalResult {
    pub precision: f64,
    pub recall: f64,
    pub fscore: f64,
    /// `(detection index, ground-truth index)` pairs.
    pub matches: Vec<(usize, usize)>,
    pub counts: MatchCounts,
}

impl EvalResult {
    pub fn from_counts(counts: MatchCounts) -> Self {
        let ratio = |n: usize, d: usize| if d == 0 { 0.0 } else { n as f64 / d as f64 };
        let precision = ratio(counts.matched, counts.detections);
        let recall = ratio(counts.matched, counts.ground_truths);
        Self {
            precision,
            recall,
            fscore: fscore(precision, recall),
            matches: Vec::new(),
            counts,
        }
    }
}

pub fn fscore(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

pub fn evaluate(dets: &[Detection], gts: &[Annotation], iou_threshold: f64) -> EvalResult {
    let iou: Vec<Vec<f64>> = dets
        .iter()
        .map(|d| gts.iter().map(|g| quad_iou(&d.quad, &g.quad)).collect())
        .collect();

    let ignored: Vec<bool> = iou
        .iter()
        .map(|row| {
            let best = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(Ordering::Equal).then(b.0.cmp(&a.0)));
            matches!(best, Some((g, &v)) if gts[g].is_dont_care && v >= iou_threshold)
        })
        .collect();

    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| {
        dets[b]
            .score
            .partial_cmp(&dets[a].score)
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });

    let mut gt_taken = vec![false; gts.len()];
    let mut matches = Vec::new();
    for &d in &order {
        if ignored[d] {
            continue;
        }
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if gt.is_dont_care || gt_taken[g] || iou[d][g] < iou_threshold {
                continue;
            }
            if best.is_none_or(|(_, v)| iou[d][g] > v) {
                best = Some((g, iou[d][g]));
            }
        }
        if let Some((g, _)) = best {
            gt_taken[g] = true;
            matches.push((d, g));
        }
    }

    let counts = MatchCounts {
        matched: matches.len(),
        detections: ignored.iter().filter(|&&i| !i).count(),
        ground_truths: gts.iter().filter(|g| !g.is_dont_care).count(),
    };
    EvalResult {
        matches,
        ..EvalResult::from_counts(counts)
    }
}

/// Micro-average over summed counts.
pub fn aggregate(results: &[MatchCounts]) -> EvalResult {
    EvalResult::from_counts(results.iter().copied().fold(MatchCounts::default(), |a, b| a + b))
}

#[derive(Debug, Error)]
#[error("line {line}: {message}")]
pub struct SubmissionError {
    pub line: usize,
    pub message: String,
}

/// `res_img_<N>.txt` body: one `x1,y1,...,x4,y4` line per detection with
/// integer pixel coordinates.
pub fn format_submission(dets: &[Detection]) -> String {
    let mut out = String::new();
    for d in dets {
        let c = d.quad.to_coords().map(|v| v.round() as i64);
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]
        ));
    }
    out
}

/// Reads a submission file. An optional ninth field is taken as the score;
/// otherwise every detection scores 1 and file order breaks ties.
pub fn parse_submission(content: &str) -> Result<Vec<Detection>, SubmissionError> {
    let content = content.strip_prefix('\u{feff}').unwrap_or(content);
    let mut dets = Vec::new();
    for (idx, line) in content.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() < 8 {
            return Err(SubmissionError {
                line: idx + 1,
                message: format!("expected 8 coordinates, got {} fields", fields.len()),
            });
        }
        let mut coords = [0.0; 8];
        for (k, f) in fields[..8].iter().enumerate() {
            coords[k] = f.parse().map_err(|_| SubmissionError {
                line: idx + 1,
                message: format!("coordinate {} is not numeric: {f:?}", k + 1),
            })?;
        }
        let score = match fields.get(8) {
            Some(s) => s.parse().map_err(|_| SubmissionError {
                line: idx + 1,
                message: format!("score is not numeric: {s:?}"),
            })?,
            None => 1.0,
        };
        dets.push(Detection::new(Quad::from_coords(coords), score));
    }
    Ok(dets)
}

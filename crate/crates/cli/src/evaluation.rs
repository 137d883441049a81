//! Directory-level evaluation of submission files.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use rfbtd_core::evalproto::{aggregate, evaluate, parse_submission, EvalResult, MatchCounts};
use serde::Serialize;

use crate::dataset::read_gt;

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub precision: f64,
    pub recall: f64,
    pub fscore: f64,
    pub counts: MatchCounts,
    pub per_image: BTreeMap<String, MatchCounts>,
}

impl EvalReport {
    fn new(per_image: BTreeMap<String, MatchCounts>) -> Self {
        let EvalResult { precision, recall, fscore, counts, .. } =
            aggregate(&per_image.values().copied().collect::<Vec<_>>());
        Self { precision, recall, fscore, counts, per_image }
    }
}

/// Files in `dir` named `<prefix><key>.txt`, keyed by `<key>`.
fn keyed_files(dir: &Path, prefix: &str) -> Result<BTreeMap<String, std::path::PathBuf>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        if let Some(key) = name.strip_prefix(prefix).and_then(|n| n.strip_suffix(".txt")) {
            out.insert(key.to_string(), path);
        }
    }
    Ok(out)
}

/// Scores `res_<key>.txt` files against `gt_<key>.txt` files. A ground
/// truth without a submission counts as zero detections; a submission
/// without a ground truth is an error.
pub fn eval_dirs(det_dir: &Path, gt_dir: &Path, iou_threshold: f64) -> Result<EvalReport> {
    let gts = keyed_files(gt_dir, "gt_")?;
    let dets = keyed_files(det_dir, "res_")?;
    let orphans: Vec<String> = dets
        .iter()
        .filter(|(k, _)| !gts.contains_key(*k))
        .map(|(_, p)| p.display().to_string())
        .collect();
    if !orphans.is_empty() {
        bail!("no ground truth for: {}", orphans.join(", "));
    }
    let mut per_image = BTreeMap::new();
    for (key, gt_path) in &gts {
        let gt = read_gt(gt_path)?;
        let det = match dets.get(key) {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                parse_submission(&text).with_context(|| format!("parsing {}", p.display()))?
            }
            None => Vec::new(),
        };
        per_image.insert(key.clone(), evaluate(&det, &gt, iou_threshold).counts);
    }
    Ok(EvalReport::new(per_image))
}

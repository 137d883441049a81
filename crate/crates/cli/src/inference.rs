//! Running a model on whole images.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use image::{imageops, Rgb, RgbImage};
use rfbtd_core::evalproto::format_submission;
use rfbtd_core::kernel::{decode_candidates, encode_candidates, NmsKernel};
use rfbtd_core::postprocess::{decode_predictions, Detection, NmsConfig};
use rfbtd_core::OUTPUT_STRIDE;
use rfbtd_model::preprocess::batch_tensor;
use rfbtd_model::{Detector, Mode};

use crate::dataset::{image_key, list_images};

/// Resizes so the long side equals `long_side` (0 keeps the input size),
/// runs the network and suppresses. Coordinates are in the frame of the
/// original image.
pub fn detect_image(
    model: &Detector,
    image: &RgbImage,
    long_side: u32,
    cfg: &NmsConfig,
    kernel: &dyn NmsKernel,
) -> Result<Vec<Detection>> {
    let (w, h) = image.dimensions();
    let resized = if long_side > 0 && w.max(h) != long_side {
        let f = long_side as f64 / w.max(h) as f64;
        let (nw, nh) = (((w as f64 * f).round() as u32).max(1), ((h as f64 * f).round() as u32).max(1));
        imageops::resize(image, nw, nh, imageops::FilterType::Triangle)
    } else {
        image.clone()
    };
    let (rw, rh) = resized.dimensions();
    let x = batch_tensor(std::slice::from_ref(&resized), model.device())?;
    let heads = model.forward(&x, Mode::Eval)?;
    let rows = (rh as usize).div_ceil(OUTPUT_STRIDE);
    let cols = (rw as usize).div_ceil(OUTPUT_STRIDE);
    let out = heads.to_outputs(rows, cols)?.remove(0);
    let scale_back = (w as f64 / rw as f64, h as f64 / rh as f64);
    let candidates = decode_predictions(&out, cfg, scale_back);
    let kept = kernel
        .run(&encode_candidates(&candidates), cfg.nms_iou_threshold, cfg.merge_mode)
        .context("NMS kernel failed")?;
    Ok(decode_candidates(&kept)?)
}

/// Plots a segment by uniform sampling, clipped to the image.
fn draw_segment(img: &mut RgbImage, a: (f64, f64), b: (f64, f64), color: Rgb<u8>) {
    let steps = (b.0 - a.0).abs().max((b.1 - a.1).abs()).ceil().max(1.0) as usize;
    for i in 0..=steps {
        let t = i as f64 / steps as f64;
        let (x, y) = ((a.0 + (b.0 - a.0) * t).round(), (a.1 + (b.1 - a.1) * t).round());
        if x >= 0.0 && y >= 0.0 && (x as u32) < img.width() && (y as u32) < img.height() {
            img.put_pixel(x as u32, y as u32, color);
        }
    }
}

/// Strokes every detection quad, two pixels wide, onto a copy of `image`.
pub fn draw_overlay(image: &RgbImage, dets: &[Detection]) -> RgbImage {
    let mut out = image.clone();
    let color = Rgb([255, 40, 40]);
    for d in dets {
        let p = d.quad.points();
        for i in 0..4 {
            let (a, b) = (p[i], p[(i + 1) % 4]);
            for (ox, oy) in [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)] {
                draw_segment(&mut out, (a.x + ox, a.y + oy), (b.x + ox, b.y + oy), color);
            }
        }
    }
    out
}

/// `img_7` → `res_img_7.txt`.
pub fn submission_name(key: &str) -> String {
    format!("res_{key}.txt")
}

#[derive(Debug, Default)]
pub struct InferSummary {
    pub processed: usize,
    pub detections: usize,
    pub failed: Vec<(PathBuf, String)>,
}

/// Expands directories into their image files.
pub fn collect_inputs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            out.extend(list_images(p)?.into_values());
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

/// Writes one submission file per input into `out_dir` and, if given, one
/// overlay PNG per input into `overlay_dir`. Unreadable images are skipped
/// and reported in the summary.
pub fn infer_paths(
    model: &Detector,
    inputs: &[PathBuf],
    long_side: u32,
    cfg: &NmsConfig,
    kernel: &dyn NmsKernel,
    out_dir: &Path,
    overlay_dir: Option<&Path>,
) -> Result<InferSummary> {
    std::fs::create_dir_all(out_dir)?;
    if let Some(d) = overlay_dir {
        std::fs::create_dir_all(d)?;
    }
    let mut summary = InferSummary::default();
    for path in inputs {
        let image = match image::open(path) {
            Ok(im) => im.to_rgb8(),
            Err(e) => {
                eprintln!("warning: skipping {}: {e}", path.display());
                summary.failed.push((path.clone(), e.to_string()));
                continue;
            }
        };
        let key = image_key(path).unwrap_or_else(|| "image".into());
        let dets = detect_image(model, &image, long_side, cfg, kernel)?;
        std::fs::write(out_dir.join(submission_name(&key)), format_submission(&dets))?;
        if let Some(d) = overlay_dir {
            draw_overlay(&image, &dets).save(d.join(format!("{key}.png")))?;
        }
        summary.processed += 1;
        summary.detections += dets.len();
    }
    Ok(summary)
}

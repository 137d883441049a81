//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Each export is a thin wrapper over a plain function so the logic can be
//! tested natively. Boxes cross the boundary as `[cx, cy, w, h, theta]`
//! arrays and candidates as the flat 9-value records of the suppression
//! kernel.

use rfbtd_core::geometry::{clip_polygon, polygon_signed_area, rotated_iou, RBox};
use rfbtd_core::kernel::{NmsKernel, NmsMode, ReferenceKernel, RECORD_LEN};
use rfbtd_core::rf::{compute_block_profile, compute_rf_profile, plans, render_rf_map, RfProfile};
use wasm_bindgen::prelude::*;

fn rbox(v: &[f64]) -> Result<RBox, String> {
    match v {
        &[cx, cy, w, h, theta] if v.iter().all(|x| x.is_finite()) && w > 0.0 && h > 0.0 => {
            Ok(RBox::new(cx, cy, w, h, theta))
        }
        _ => Err(format!("expected [cx, cy, w, h, theta] with positive size, got {v:?}")),
    }
}

/// `[iou, intersection_area, x0, y0, x1, y1, ...]`: the IoU followed by
/// the intersection polygon's vertices.
pub fn iou_with_polygon(a: &[f64], b: &[f64]) -> Result<Vec<f64>, String> {
    let (ra, rb) = (rbox(a)?, rbox(b)?);
    let poly = clip_polygon(ra.to_quad().points(), rb.to_quad().points());
    let mut out = vec![rotated_iou(&ra, &rb), polygon_signed_area(&poly).abs()];
    out.extend(poly.iter().flat_map(|p| [p.x, p.y]));
    Ok(out)
}

/// Suppresses a flat candidate buffer with the reference kernel.
pub fn suppress(records: &[f64], iou_threshold: f64, locality_aware: bool) -> Result<Vec<f64>, String> {
    let mode = if locality_aware { NmsMode::LocalityAware } else { NmsMode::Standard };
    ReferenceKernel.run(records, iou_threshold, mode).map_err(|e| e.to_string())
}

fn profile(variant: &str) -> Result<RfProfile, String> {
    let p = match variant {
        "rfb" => compute_block_profile(&plans::rfb()),
        "rfb_s" => compute_block_profile(&plans::rfb_s()),
        "plain" => compute_rf_profile(&plans::plain_refinement()),
        other => return Err(format!("unknown variant {other:?}; use rfb, rfb_s or plain")),
    };
    p.map_err(|e| e.to_string())
}

/// Row-major `size²` grayscale map of a variant's branch footprints.
pub fn rf_map_pixels(variant: &str, size: u32) -> Result<Vec<u8>, String> {
    if size == 0 || size > 1024 {
        return Err("size must be in 1..=1024".into());
    }
    Ok(render_rf_map(&profile(variant)?, size, size).into_raw())
}

/// Distinct branch field sizes, ascending.
pub fn rf_radii(variant: &str) -> Result<Vec<u32>, String> {
    Ok(profile(variant)?.radii.iter().map(|&r| r as u32).collect())
}

#[wasm_bindgen(js_name = rotatedIou)]
pub fn rotated_iou_js(a: &[f64], b: &[f64]) -> Result<Vec<f64>, JsError> {
    iou_with_polygon(a, b).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = nms)]
pub fn nms_js(records: &[f64], iou_threshold: f64, locality_aware: bool) -> Result<Vec<f64>, JsError> {
    suppress(records, iou_threshold, locality_aware).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = rfMap)]
pub fn rf_map_js(variant: &str, size: u32) -> Result<Vec<u8>, JsError> {
    rf_map_pixels(variant, size).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = rfRadii)]
pub fn rf_radii_js(variant: &str) -> Result<Vec<u32>, JsError> {
    rf_radii(variant).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = recordLength)]
pub fn record_length() -> usize {
    RECORD_LEN
}

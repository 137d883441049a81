//! ICDAR2015 ground-truth ingestion and training-target generation.

use image::{imageops, Rgb, RgbImage};
use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    encode_pixel_geometry, min_area_rect, polygon_intersection_area, Point, Quad,
};

/// Transcription marking a region that is neither rewarded nor penalized.
pub const DONT_CARE_MARKER: &str = "###";

#[derive(Debug, Error)]
pub enum LabelError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("image size {width}x{height} is not divisible by stride {stride}")]
    StrideMismatch {
        width: u32,
        height: u32,
        stride: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub quad: Quad,
    pub transcription: String,
    pub is_dont_care: bool,
}

impl Annotation {
    pub fn new(quad: Quad, transcription: impl Into<String>) -> Self {
        let transcription = transcription.into();
        Self {
            quad,
            is_dont_care: transcription == DONT_CARE_MARKER,
            transcription,
        }
    }
}

/// Parses a `gt_img_<N>.txt` file: `x1,y1,x2,y2,x3,y3,x4,y4,transcription`
/// per line. Everything after the eighth comma is the transcription, so
/// transcriptions may themselves contain commas.
pub fn parse_icdar_gt(content: &str) -> Result<Vec<Annotation>, LabelError> {
    let content = content.strip_prefix('\u{feff}').unwrap_or(content);
    let mut out = Vec::new();
    for (idx, raw) in content.lines().enumerate() {
        let line = raw.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.splitn(9, ',').collect();
        if fields.len() < 9 {
            return Err(LabelError::Parse {
                line: idx + 1,
                message: format!("expected 8 coordinates and a transcription, got {} fields", fields.len()),
            });
        }
        let mut coords = [0.0; 8];
        for (k, field) in fields[..8].iter().enumerate() {
            coords[k] = field.trim().parse().map_err(|_| LabelError::Parse {
                line: idx + 1,
                message: format!("coordinate {} is not numeric: {:?}", k + 1, field),
            })?;
        }
        out.push(Annotation::new(Quad::from_coords(coords), fields[8]));
    }
    Ok(out)
}

/// What to do with annotations that extend past the image border.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutOfBounds {
    /// Keep the annotation; only in-image cells are labelled.
    #[default]
    Clip,
    /// Treat the annotation as don't-care.
    Reject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetConfig {
    /// Each side of the fitted box moves inward by this fraction of its
    /// shorter side before cells are marked positive.
    pub shrink_ratio: f64,
    pub out_of_bounds: OutOfBounds,
    /// Quads smaller than this (px²) are dropped as degenerate.
    pub min_area: f64,
}

impl Default for TargetConfig {
    fn default() -> Self {
        Self {
            shrink_ratio: 0.3,
            out_of_bounds: OutOfBounds::Clip,
            min_area: 1.0,
        }
    }
}

/// Dense training targets at the output stride.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainTarget {
    /// `(rows, cols)`, values in {0, 1}.
    pub score: Array2<f64>,
    /// `(rows, cols, 5)`: top, right, bottom, left distances and angle.
    pub geometry: Array3<f64>,
    /// `(rows, cols)`, 0 where the score loss must ignore the cell.
    pub mask: Array2<f64>,
    pub stride: usize,
}

impl TrainTarget {
    pub fn dim(&self) -> (usize, usize) {
        self.score.dim()
    }
}

/// Image-space location a stride cell stands for.
#[inline]
pub fn cell_center(row: usize, col: usize, stride: usize) -> Point {
    let s = stride as f64;
    Point::new((col as f64 + 0.5) * s, (row as f64 + 0.5) * s)
}

/// Rasterizes annotations into score, geometry and mask grids.
///
/// A cell is positive when its center lies inside the shrunk minimum-area
/// rectangle of a regular annotation; its geometry is measured against the
/// unshrunk rectangle. Contested cells go to the smallest rectangle.
/// Don't-care quads zero the mask over their full extent.
pub fn build_targets(
    annotations: &[Annotation],
    width: u32,
    height: u32,
    stride: usize,
    cfg: &TargetConfig,
) -> Result<TrainTarget, LabelError> {
    if stride == 0 || !(width as usize).is_multiple_of(stride) || !(height as usize).is_multiple_of(stride) {
        return Err(LabelError::StrideMismatch { width, height, stride });
    }
    let rows = height as usize / stride;
    let cols = width as usize / stride;
    let mut score = Array2::<f64>::zeros((rows, cols));
    let mut geometry = Array3::<f64>::zeros((rows, cols, 5));
    let mut mask = Array2::<f64>::ones((rows, cols));
    let mut owner_area = Array2::<f64>::from_elem((rows, cols), f64::INFINITY);

    for ann in annotations {
        let Ok(quad) = Quad::new(*ann.quad.points()) else {
            continue;
        };
        if quad.area() < cfg.min_area {
            continue;
        }
        let (x0, y0, x1, y1) = quad.bounds();
        let outside = x0 < 0.0 || y0 < 0.0 || x1 > width as f64 || y1 > height as f64;
        let dont_care = ann.is_dont_care || (outside && cfg.out_of_bounds == OutOfBounds::Reject);

        if dont_care {
            for (r, c) in cells_in_bounds(quad.bounds(), rows, cols, stride) {
                if point_in_polygon(cell_center(r, c, stride), quad.points()) {
                    mask[[r, c]] = 0.0;
                }
            }
            continue;
        }

        let Ok(rbox) = min_area_rect(&quad) else {
            continue;
        };
        let core = rbox.shrink(cfg.shrink_ratio);
        if core.w <= 0.0 || core.h <= 0.0 {
            continue;
        }
        let area = rbox.area();
        for (r, c) in cells_in_bounds(core.to_quad().bounds(), rows, cols, stride) {
            let p = cell_center(r, c, stride);
            if !core.contains(p) || area >= owner_area[[r, c]] {
                continue;
            }
            if let Ok(g) = encode_pixel_geometry(&rbox, p) {
                owner_area[[r, c]] = area;
                score[[r, c]] = 1.0;
                for (k, v) in g.to_channels().into_iter().enumerate() {
                    geometry[[r, c, k]] = v;
                }
            }
        }
    }

    Ok(TrainTarget { score, geometry, mask, stride })
}

/// Grid cells whose centers may fall within the given image-space bounds.
fn cells_in_bounds(
    (x0, y0, x1, y1): (f64, f64, f64, f64),
    rows: usize,
    cols: usize,
    stride: usize,
) -> impl Iterator<Item = (usize, usize)> {
    let s = stride as f64;
    let c0 = ((x0 / s - 0.5).floor().max(0.0) as usize).min(cols);
    let c1 = ((x1 / s - 0.5).ceil().max(-1.0) + 1.0).clamp(0.0, cols as f64) as usize;
    let r0 = ((y0 / s - 0.5).floor().max(0.0) as usize).min(rows);
    let r1 = ((y1 / s - 0.5).ceil().max(-1.0) + 1.0).clamp(0.0, rows as f64) as usize;
    (r0..r1).flat_map(move |r| (c0..c1).map(move |c| (r, c)))
}

/// Even-odd rule; works for any simple polygon.
pub fn point_in_polygon(p: Point, poly: &[Point]) -> bool {
    let mut inside = false;
    let n = poly.len();
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a.y > p.y) != (b.y > p.y) && p.x < (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// Cuts a `crop_size`² window at a seeded uniform offset.
///
/// Images smaller than the crop are padded bottom/right with black.
/// Annotations are moved into the crop frame; those entirely outside are
/// dropped and those cut by the border become don't-care.
pub fn sample_crop(
    image: &RgbImage,
    annotations: &[Annotation],
    crop_size: u32,
    seed: u64,
) -> (RgbImage, Vec<Annotation>) {
    let (w, h) = image.dimensions();
    let (pw, ph) = (w.max(crop_size), h.max(crop_size));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x0 = rng.random_range(0..=pw - crop_size);
    let y0 = rng.random_range(0..=ph - crop_size);

    let mut crop = RgbImage::from_pixel(crop_size, crop_size, Rgb([0, 0, 0]));
    let cw = crop_size.min(w.saturating_sub(x0));
    let ch = crop_size.min(h.saturating_sub(y0));
    if cw > 0 && ch > 0 {
        let view = imageops::crop_imm(image, x0, y0, cw, ch).to_image();
        imageops::replace(&mut crop, &view, 0, 0);
    }

    let side = crop_size as f64;
    let window = Quad::from_coords([0.0, 0.0, side, 0.0, side, side, 0.0, side]);
    let mut kept = Vec::new();
    for ann in annotations {
        let quad = ann.quad.translate(-(x0 as f64), -(y0 as f64));
        let inside = quad
            .points()
            .iter()
            .all(|p| p.x >= 0.0 && p.y >= 0.0 && p.x <= side && p.y <= side);
        if inside {
            kept.push(Annotation { quad, ..ann.clone() });
        } else if polygon_intersection_area(&quad, &window) > 0.0 {
            kept.push(Annotation {
                quad,
                transcription: ann.transcription.clone(),
                is_dont_care: true,
            });
        }
    }
    (crop, kept)
}

/// Uniformly rescales an image and its annotations.
pub fn rescale(image: &RgbImage, annotations: &[Annotation], factor: f64) -> (RgbImage, Vec<Annotation>) {
    let (w, h) = image.dimensions();
    let nw = ((w as f64 * factor).round() as u32).max(1);
    let nh = ((h as f64 * factor).round() as u32).max(1);
    let resized = imageops::resize(image, nw, nh, imageops::FilterType::Triangle);
    let (sx, sy) = (nw as f64 / w as f64, nh as f64 / h as f64);
    let anns = annotations
        .iter()
        .map(|a| Annotation { quad: a.quad.scale(sx, sy), ..a.clone() })
        .collect();
    (resized, anns)
}

/// Downscales images whose long side exceeds `max_long_side`; others are
/// returned unchanged.
pub fn limit_long_side(
    image: &RgbImage,
    annotations: &[Annotation],
    max_long_side: u32,
) -> (RgbImage, Vec<Annotation>) {
    let long = image.width().max(image.height());
    if long <= max_long_side {
        return (image.clone(), annotations.to_vec());
    }
    rescale(image, annotations, max_long_side as f64 / long as f64)
}

/// Independent seed for stream `index` derived from `base` (SplitMix64).
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

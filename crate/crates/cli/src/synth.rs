//! Procedurally generated scenes with known text boxes, for smoke training
//! and tests.

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rfbtd_core::geometry::{polygon_intersection_area, Point, RBox};
use rfbtd_core::Annotation;

#[derive(Debug, Clone)]
pub struct Scene {
    pub image: RgbImage,
    pub annotations: Vec<Annotation>,
    pub boxes: Vec<RBox>,
}

/// A `width × height` scene with up to `max_words` non-overlapping "words":
/// rows of dark glyph blocks on a light, noisy background, rotated by up to
/// ±0.5 rad. Boxes fit entirely inside the image.
pub fn scene(width: u32, height: u32, max_words: usize, seed: u64) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (width as f64, height as f64);
    let mut boxes: Vec<RBox> = Vec::new();
    for _ in 0..max_words * 20 {
        if boxes.len() == max_words {
            break;
        }
        let bh = rng.random_range(0.09..0.16) * h.min(w);
        let bw = bh * rng.random_range(2.5..5.0);
        let cand = RBox::new(
            rng.random_range(0.0..w),
            rng.random_range(0.0..h),
            bw,
            bh,
            rng.random_range(-0.5..0.5),
        );
        let (x0, y0, x1, y1) = cand.to_quad().bounds();
        if x0 < 2.0 || y0 < 2.0 || x1 > w - 2.0 || y1 > h - 2.0 {
            continue;
        }
        let halo = RBox { w: cand.w + 8.0, h: cand.h + 8.0, ..cand };
        if boxes.iter().any(|b| polygon_intersection_area(&halo.to_quad(), &b.to_quad()) > 0.0) {
            continue;
        }
        boxes.push(cand);
    }

    let base: [f64; 3] = std::array::from_fn(|_| rng.random_range(150.0..230.0));
    let tilt: [f64; 3] = std::array::from_fn(|_| rng.random_range(-30.0..30.0));
    let mut image = RgbImage::from_fn(width, height, |x, y| {
        let t = (x as f64 / w + y as f64 / h) / 2.0;
        Rgb(std::array::from_fn(|c| (base[c] + tilt[c] * t).clamp(0.0, 255.0) as u8))
    });
    for px in image.pixels_mut() {
        for c in px.0.iter_mut() {
            *c = (*c as i32 + rng.random_range(-12..=12)).clamp(0, 255) as u8;
        }
    }

    for b in &boxes {
        let ink: [u8; 3] = std::array::from_fn(|_| rng.random_range(0..70));
        let pitch = b.h * 0.6;
        let (x0, y0, x1, y1) = b.to_quad().bounds();
        let (c, s) = (b.theta.cos(), b.theta.sin());
        for y in (y0.floor().max(0.0) as u32)..(y1.ceil().min(h) as u32) {
            for x in (x0.floor().max(0.0) as u32)..(x1.ceil().min(w) as u32) {
                let d = Point::new(x as f64 + 0.5, y as f64 + 0.5) - b.center();
                let u = d.x * c + d.y * s + b.w / 2.0;
                let v = -d.x * s + d.y * c;
                if u < 0.0 || u > b.w || v.abs() > b.h / 2.0 {
                    continue;
                }
                let cell = (u / pitch).fract();
                if (0.12..0.88).contains(&cell) && v.abs() < b.h * 0.42 {
                    image.put_pixel(x, y, Rgb(ink));
                }
            }
        }
    }

    let annotations = boxes.iter().map(|b| Annotation::new(b.to_quad(), "word")).collect();
    Scene { image, annotations, boxes }
}

//! Training data: ICDAR-style directories or generated scenes, and the
//! seeded sample sequence.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use image::RgbImage;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rfbtd_core::labelgen::{derive_seed, parse_icdar_gt, Annotation};

use crate::synth;

const IMAGE_EXTENSIONS: [&str; 4] = ["jpg", "jpeg", "png", "JPG"];
const CROP_STREAM: u64 = 0xC0FF_EE00;
const SYNTH_STREAM: u64 = 0x5EED_0000;

#[derive(Debug, Clone)]
enum Source {
    Files { images: Vec<PathBuf>, annotations: Vec<Vec<Annotation>> },
    Synthetic { count: usize, size: u32, seed: u64 },
}

#[derive(Debug, Clone)]
pub struct Dataset {
    source: Source,
}

/// `img_12.jpg` → `img_12`.
pub fn image_key(path: &Path) -> Option<String> {
    path.file_stem().map(|s| s.to_string_lossy().into_owned())
}

/// Image files in `dir`, keyed by stem, sorted.
pub fn list_images(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        let is_image = path
            .extension()
            .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_string_lossy().as_ref()));
        if is_image {
            if let Some(key) = image_key(&path) {
                out.insert(key, path);
            }
        }
    }
    Ok(out)
}

pub fn read_gt(path: &Path) -> Result<Vec<Annotation>> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let text = String::from_utf8_lossy(&bytes);
    parse_icdar_gt(&text).with_context(|| format!("parsing {}", path.display()))
}

impl Dataset {
    /// Pairs every image with `gt_<stem>.txt` and parses all annotations
    /// and image headers up front, so a broken dataset fails before any
    /// training happens.
    pub fn from_dirs(images: &Path, gts: &Path) -> Result<Self> {
        let files = list_images(images)?;
        if files.is_empty() {
            bail!("no images in {}", images.display());
        }
        let mut missing = Vec::new();
        let mut paths = Vec::new();
        let mut annotations = Vec::new();
        for (key, path) in files {
            let gt = gts.join(format!("gt_{key}.txt"));
            if !gt.is_file() {
                missing.push(gt.display().to_string());
                continue;
            }
            image::image_dimensions(&path).with_context(|| format!("unreadable image {}", path.display()))?;
            annotations.push(read_gt(&gt)?);
            paths.push(path);
        }
        if !missing.is_empty() {
            bail!("missing ground truth: {}", missing.join(", "));
        }
        Ok(Self { source: Source::Files { images: paths, annotations } })
    }

    pub fn synthetic(count: usize, size: u32, seed: u64) -> Self {
        Self { source: Source::Synthetic { count, size, seed } }
    }

    pub fn len(&self) -> usize {
        match &self.source {
            Source::Files { images, .. } => images.len(),
            Source::Synthetic { count, .. } => *count,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, index: usize) -> Result<(RgbImage, Vec<Annotation>)> {
        match &self.source {
            Source::Files { images, annotations } => {
                let img = image::open(&images[index])
                    .with_context(|| format!("decoding {}", images[index].display()))?
                    .to_rgb8();
                Ok((img, annotations[index].clone()))
            }
            Source::Synthetic { size, seed, .. } => {
                let s = synth::scene(*size, *size, 2, derive_seed(seed ^ SYNTH_STREAM, index as u64));
                Ok((s.image, s.annotations))
            }
        }
    }

    /// Name used for submission files.
    pub fn key(&self, index: usize) -> String {
        match &self.source {
            Source::Files { images, .. } => image_key(&images[index]).unwrap_or_else(|| format!("img_{index}")),
            Source::Synthetic { .. } => format!("img_{}", index + 1),
        }
    }
}

/// Which dataset item and crop seed fill batch slot `slot` of `step`.
///
/// Items are visited epoch by epoch in a seeded permutation; every draw
/// depends only on `(seed, step, slot)`, so a resumed run sees exactly the
/// samples an uninterrupted one would.
pub fn sample(seed: u64, len: usize, batch: usize, step: u64, slot: usize) -> (usize, u64) {
    let global = step * batch as u64 + slot as u64;
    let epoch = global / len as u64;
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, epoch)));
    (order[(global % len as u64) as usize], derive_seed(seed ^ CROP_STREAM, global))
}

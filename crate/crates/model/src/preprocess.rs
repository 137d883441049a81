//! Image to tensor conversion.

use candle_core::{Device, Result, Tensor};
use image::RgbImage;

/// ImageNet channel statistics the stem expects.
pub const MEAN: [f32; 3] = [0.485, 0.456, 0.406];
pub const STD: [f32; 3] = [0.229, 0.224, 0.225];

/// Smallest multiples of 32 covering `(width, height)`.
pub fn padded_dims(width: u32, height: u32) -> (u32, u32) {
    (width.div_ceil(32) * 32, height.div_ceil(32) * 32)
}

/// Normalised `(3, H', W')` values with H', W' rounded up to multiples of
/// 32; padding (bottom and right) is zero, i.e. the mean colour.
fn chw(image: &RgbImage) -> Vec<f32> {
    let (w, h) = image.dimensions();
    let (pw, ph) = padded_dims(w, h);
    let plane = (pw * ph) as usize;
    let mut out = vec![0f32; 3 * plane];
    for (x, y, p) in image.enumerate_pixels() {
        let idx = (y * pw + x) as usize;
        for c in 0..3 {
            out[c * plane + idx] = (p.0[c] as f32 / 255.0 - MEAN[c]) / STD[c];
        }
    }
    out
}

/// Stacks equally sized images into a padded NCHW batch.
pub fn batch_tensor(images: &[RgbImage], device: &Device) -> Result<Tensor> {
    let Some(first) = images.first() else {
        candle_core::bail!("empty batch");
    };
    let dims = first.dimensions();
    if images.iter().any(|im| im.dimensions() != dims) {
        candle_core::bail!("images in a batch must share dimensions");
    }
    let (pw, ph) = padded_dims(dims.0, dims.1);
    let data: Vec<f32> = images.iter().flat_map(chw).collect();
    Tensor::from_vec(data, (images.len(), 3, ph as usize, pw as usize), device)
}

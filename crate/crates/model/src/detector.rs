//! The full detector: stem, top-down fusion, refinement blocks and heads.

use std::f64::consts::FRAC_PI_2;

use candle_core::{Device, IndexOp, Result, Tensor};
use ndarray::Array3;
use rfbtd_core::{ModelOutput, OUTPUT_STRIDE};

use crate::backbone::Backbone;
use crate::config::{ModelConfig, Refinement};
use crate::layers::{sigmoid, upsample2x, Conv2d, ConvBn, Mode};
use crate::params::ParamStore;
use crate::rfb::{PlainStack, RfbBlock, Refiner};

/// Raw head tensors for a batch.
#[derive(Debug, Clone)]
pub struct Heads {
    /// `(N, 1, H/4, W/4)` in `[0, 1]`.
    pub score: Tensor,
    /// `(N, 5, H/4, W/4)`: four distances in pixels, then the angle.
    pub geometry: Tensor,
}

impl Heads {
    /// Converts every batch item to a [`ModelOutput`], keeping the top-left
    /// `rows × cols` cells (drop cells that only cover padding).
    pub fn to_outputs(&self, rows: usize, cols: usize) -> Result<Vec<ModelOutput>> {
        let (n, _, h, w) = self.score.dims4()?;
        let (rows, cols) = (rows.min(h), cols.min(w));
        (0..n)
            .map(|b| {
                Ok(ModelOutput {
                    score: to_hwc(&self.score.i(b)?, rows, cols)?,
                    geometry: to_hwc(&self.geometry.i(b)?, rows, cols)?,
                    stride: OUTPUT_STRIDE,
                })
            })
            .collect()
    }

    pub fn to_outputs_full(&self) -> Result<Vec<ModelOutput>> {
        let (_, _, h, w) = self.score.dims4()?;
        self.to_outputs(h, w)
    }
}

/// `(C, H, W)` tensor to an `(rows, cols, C)` f64 array.
pub fn to_hwc(t: &Tensor, rows: usize, cols: usize) -> Result<Array3<f64>> {
    let (c, _, _) = t.dims3()?;
    let v = t
        .narrow(1, 0, rows)?
        .narrow(2, 0, cols)?
        .permute((1, 2, 0))?
        .contiguous()?
        .flatten_all()?
        .to_vec1::<f32>()?;
    Ok(Array3::from_shape_vec((rows, cols, c), v.into_iter().map(f64::from).collect())
        .expect("element count matches shape"))
}

/// `(rows, cols, C)` array to a `(C, rows, cols)` f32 tensor.
pub fn from_hwc(a: &Array3<f64>, device: &Device) -> Result<Tensor> {
    let (r, c, ch) = a.dim();
    let v: Vec<f32> = a.iter().map(|&x| x as f32).collect();
    Tensor::from_vec(v, (r, c, ch), device)?.permute((2, 0, 1))?.contiguous()
}

pub struct Detector {
    pub config: ModelConfig,
    params: ParamStore,
    backbone: Backbone,
    top: ConvBn,
    /// Projections of f4, f3 and f2.
    laterals: [ConvBn; 3],
    /// Refinements in the f3 and f2 stages.
    refiners: [Refiner; 2],
    final_block: Option<RfbBlock>,
    score_head: Conv2d,
    dist_head: Conv2d,
    angle_head: Conv2d,
}

impl Detector {
    /// Randomly initialised model; identical seeds give identical weights.
    pub fn new(config: ModelConfig, seed: u64, device: &Device) -> Result<Self> {
        let mut params = ParamStore::new(seed, device.clone());
        let ps = &mut params;
        let backbone = Backbone::new(ps, "backbone", &config.backbone)?;
        let ch = backbone.channels;
        let [w0, w1, w2] = config.decoder_widths;
        let top = ConvBn::new(ps, "decoder.top", ch[4], w0, (1, 1), 1, 1, true)?;
        let laterals = [
            ConvBn::new(ps, "decoder.lateral4", ch[3], w0, (1, 1), 1, 1, true)?,
            ConvBn::new(ps, "decoder.lateral3", ch[2], w1, (1, 1), 1, 1, true)?,
            ConvBn::new(ps, "decoder.lateral2", ch[1], w2, (1, 1), 1, 1, true)?,
        ];
        let mut refiner = |name: &str, c_in, c_out| -> Result<Refiner> {
            Ok(match config.refinement {
                Refinement::RfbS => Refiner::Rfb(Box::new(RfbBlock::rfb_s(ps, name, c_in, c_out)?)),
                Refinement::Plain => Refiner::Plain(PlainStack::new(ps, name, c_in, c_out)?),
            })
        };
        let refiners = [refiner("decoder.refine3", w0, w1)?, refiner("decoder.refine2", w1, w2)?];
        let final_block = if config.final_rfb {
            Some(RfbBlock::rfb(ps, "decoder.final", w2, w2)?)
        } else {
            None
        };
        let score_head = Conv2d::new(ps, "head.score", w2, 1, (1, 1), 1, 1, true)?;
        let dist_head = Conv2d::new(ps, "head.distance", w2, 4, (1, 1), 1, 1, true)?;
        let angle_head = Conv2d::new(ps, "head.angle", w2, 1, (1, 1), 1, 1, true)?;
        Ok(Self {
            config,
            params,
            backbone,
            top,
            laterals,
            refiners,
            final_block,
            score_head,
            dist_head,
            angle_head,
        })
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn device(&self) -> &Device {
        self.params.device()
    }

    /// Stages f1..f5 at strides 2..32. Spatial dims must be multiples of 32.
    pub fn extract_stages(&self, x: &Tensor, mode: Mode) -> Result<Vec<Tensor>> {
        let (_, _, h, w) = x.dims4()?;
        if h % 32 != 0 || w % 32 != 0 {
            candle_core::bail!("input {h}x{w} is not a multiple of 32; pad it first");
        }
        self.backbone.forward(x, mode)
    }

    /// Top-down additive fusion ending at stride 4.
    pub fn fuse_stages(&self, stages: &[Tensor], mode: Mode) -> Result<Tensor> {
        let mut h = self.top.forward(&stages[4], mode)?;
        h = (upsample2x(&h)? + self.laterals[0].forward(&stages[3], mode)?)?;
        for (k, stage) in [2usize, 1].into_iter().enumerate() {
            let refined = self.refiners[k].forward(&upsample2x(&h)?, mode)?;
            h = (refined + self.laterals[k + 1].forward(&stages[stage], mode)?)?;
        }
        match &self.final_block {
            Some(b) => b.forward(&h, mode),
            None => Ok(h),
        }
    }

    pub fn predict_heads(&self, feature: &Tensor) -> Result<Heads> {
        let score = sigmoid(&self.score_head.forward(feature)?)?;
        let dist = (sigmoid(&self.dist_head.forward(feature)?)? * self.config.distance_scale)?;
        let angle = ((sigmoid(&self.angle_head.forward(feature)?)? - 0.5)? * FRAC_PI_2)?;
        Ok(Heads {
            score,
            geometry: Tensor::cat(&[dist, angle], 1)?,
        })
    }

    /// Full forward pass on an NCHW batch.
    pub fn forward(&self, x: &Tensor, mode: Mode) -> Result<Heads> {
        let stages = self.extract_stages(x, mode)?;
        let fused = self.fuse_stages(&stages, mode)?;
        self.predict_heads(&fused)
    }
}

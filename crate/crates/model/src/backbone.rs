//! Residual bottleneck stem producing five feature stages.

use candle_core::{Result, Tensor};

use crate::config::BackboneConfig;
use crate::layers::{max_pool_3x3_s2, ConvBn, Mode};
use crate::params::ParamStore;

#[derive(Debug, Clone)]
struct Bottleneck {
    reduce: ConvBn,
    spatial: ConvBn,
    expand: ConvBn,
    shortcut: Option<ConvBn>,
}

impl Bottleneck {
    fn new(ps: &mut ParamStore, name: &str, c_in: usize, width: usize, c_out: usize, stride: usize) -> Result<Self> {
        let shortcut = if stride != 1 || c_in != c_out {
            Some(ConvBn::new(ps, &format!("{name}.downsample"), c_in, c_out, (1, 1), stride, 1, false)?)
        } else {
            None
        };
        Ok(Self {
            reduce: ConvBn::new(ps, &format!("{name}.reduce"), c_in, width, (1, 1), 1, 1, true)?,
            spatial: ConvBn::new(ps, &format!("{name}.spatial"), width, width, (3, 3), stride, 1, true)?,
            expand: ConvBn::new(ps, &format!("{name}.expand"), width, c_out, (1, 1), 1, 1, false)?,
            shortcut,
        })
    }

    fn forward(&self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let y = self.reduce.forward(x, mode)?;
        let y = self.spatial.forward(&y, mode)?;
        let y = self.expand.forward(&y, mode)?;
        let short = match &self.shortcut {
            Some(s) => s.forward(x, mode)?,
            None => x.clone(),
        };
        (y + short)?.relu()
    }
}

/// Stages at strides 2, 4, 8, 16 and 32.
#[derive(Debug, Clone)]
pub struct Backbone {
    stem: ConvBn,
    stages: Vec<Vec<Bottleneck>>,
    pub channels: [usize; 5],
}

impl Backbone {
    pub fn new(ps: &mut ParamStore, name: &str, cfg: &BackboneConfig) -> Result<Self> {
        let channels = cfg.stage_channels();
        let stem = ConvBn::new(ps, &format!("{name}.stem"), 3, cfg.stem_width, (7, 7), 2, 1, true)?;
        let mut stages = Vec::with_capacity(4);
        let mut c_in = cfg.stem_width;
        for (s, &count) in cfg.blocks.iter().enumerate() {
            let width = cfg.base_width << s;
            let c_out = channels[s + 1];
            let mut blocks = Vec::with_capacity(count);
            for b in 0..count {
                let stride = if b == 0 && s > 0 { 2 } else { 1 };
                blocks.push(Bottleneck::new(ps, &format!("{name}.layer{}.{b}", s + 1), c_in, width, c_out, stride)?);
                c_in = c_out;
            }
            stages.push(blocks);
        }
        Ok(Self { stem, stages, channels })
    }

    /// `[f1, f2, f3, f4, f5]` for an NCHW batch whose spatial dims are
    /// multiples of 32.
    pub fn forward(&self, x: &Tensor, mode: Mode) -> Result<Vec<Tensor>> {
        let f1 = self.stem.forward(x, mode)?;
        let mut feats = vec![f1.clone()];
        let mut h = max_pool_3x3_s2(&f1)?;
        for blocks in &self.stages {
            for b in blocks {
                h = b.forward(&h, mode)?;
            }
            feats.push(h.clone());
        }
        Ok(feats)
    }
}

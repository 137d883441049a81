//! Multi-branch receptive-field blocks and the plain refinement stack.
//!
//! Branch layouts come from [`rfbtd_core::rf::plans`], so the layers built
//! here are exactly the ones the receptive-field profiler reasons about.

use candle_core::{Result, Tensor};
use rfbtd_core::rf::{plans, LayerSpec};

use crate::layers::{ConvBn, Mode};
use crate::params::ParamStore;

/// A sequence of conv-BN layers, ReLU after all but optionally the last.
#[derive(Debug, Clone)]
struct Chain(Vec<ConvBn>);

impl Chain {
    fn new(
        ps: &mut ParamStore,
        name: &str,
        specs: &[LayerSpec],
        c_in: usize,
        width: usize,
        relu_last: bool,
    ) -> Result<Self> {
        let mut layers = Vec::with_capacity(specs.len());
        for (i, s) in specs.iter().enumerate() {
            let input = if i == 0 { c_in } else { width };
            let relu = relu_last || i + 1 < specs.len();
            layers.push(ConvBn::new(
                ps,
                &format!("{name}.{i}"),
                input,
                width,
                (s.kernel_h, s.kernel_w),
                s.stride,
                s.dilation,
                relu,
            )?);
        }
        Ok(Self(layers))
    }

    fn forward(&self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let mut h = x.clone();
        for l in &self.0 {
            h = l.forward(&h, mode)?;
        }
        Ok(h)
    }
}

/// Parallel branches, concatenated, projected by a 1×1 conv and added to a
/// shortcut of the input, followed by ReLU. Spatial dims are preserved.
#[derive(Debug, Clone)]
pub struct RfbBlock {
    branches: Vec<Chain>,
    project: ConvBn,
    shortcut: Option<ConvBn>,
    pub c_in: usize,
    pub c_out: usize,
}

impl RfbBlock {
    /// Builds a block from an explicit branch plan. Each branch runs at
    /// `max(c_in / 4, 4)` channels.
    pub fn from_plan(
        ps: &mut ParamStore,
        name: &str,
        plan: &[Vec<LayerSpec>],
        c_in: usize,
        c_out: usize,
    ) -> Result<Self> {
        let width = (c_in / 4).max(4);
        let branches = plan
            .iter()
            .enumerate()
            .map(|(b, specs)| Chain::new(ps, &format!("{name}.branch{b}"), specs, c_in, width, false))
            .collect::<Result<Vec<_>>>()?;
        let project = ConvBn::new(ps, &format!("{name}.project"), width * plan.len(), c_out, (1, 1), 1, 1, false)?;
        let shortcut = if c_in == c_out {
            None
        } else {
            Some(ConvBn::new(ps, &format!("{name}.shortcut"), c_in, c_out, (1, 1), 1, 1, false)?)
        };
        Ok(Self { branches, project, shortcut, c_in, c_out })
    }

    /// Three branches with dilations 1, 3 and 5.
    pub fn rfb(ps: &mut ParamStore, name: &str, c_in: usize, c_out: usize) -> Result<Self> {
        Self::from_plan(ps, name, &plans::rfb(), c_in, c_out)
    }

    /// Four lighter branches with asymmetric mid convs.
    pub fn rfb_s(ps: &mut ParamStore, name: &str, c_in: usize, c_out: usize) -> Result<Self> {
        Self::from_plan(ps, name, &plans::rfb_s(), c_in, c_out)
    }

    pub fn forward(&self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let (_, c, _, _) = x.dims4()?;
        if c != self.c_in {
            candle_core::bail!("block expects {} input channels, got {c}", self.c_in);
        }
        let outs = self
            .branches
            .iter()
            .map(|b| b.forward(x, mode))
            .collect::<Result<Vec<_>>>()?;
        let y = self.project.forward(&Tensor::cat(&outs, 1)?, mode)?;
        let short = match &self.shortcut {
            Some(s) => s.forward(x, mode)?,
            None => x.clone(),
        };
        (y + short)?.relu()
    }
}

/// Refinement applied after upsampling in a fusion stage.
#[derive(Debug, Clone)]
pub enum Refiner {
    Rfb(Box<RfbBlock>),
    Plain(PlainStack),
}

impl Refiner {
    pub fn forward(&self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        match self {
            Self::Rfb(b) => b.forward(x, mode),
            Self::Plain(p) => p.forward(x, mode),
        }
    }
}

/// 1×1 bottleneck and two 3×3 convs, all followed by ReLU.
#[derive(Debug, Clone)]
pub struct PlainStack(Chain);

impl PlainStack {
    pub fn new(ps: &mut ParamStore, name: &str, c_in: usize, c_out: usize) -> Result<Self> {
        Ok(Self(Chain::new(ps, name, &plans::plain_refinement(), c_in, c_out, true)?))
    }

    pub fn forward(&self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        self.0.forward(x, mode)
    }
}

//! Convolution, normalisation, pooling and resampling primitives.
//!
//! Everything here is written against plain tensor ops so that gradients
//! exist for every path used in training.

use candle_core::{Device, Result, Tensor, Var};

use crate::params::ParamStore;

/// Batch-norm behaviour.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Normalise with batch statistics and update the running averages.
    Train,
    /// Normalise with the running averages.
    Eval,
}

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone)]
pub struct Conv2d {
    pub name: String,
    weight: Tensor,
    bias: Option<Tensor>,
    kernel: (usize, usize),
    stride: usize,
    dilation: usize,
}

impl Conv2d {
    pub fn new(
        ps: &mut ParamStore,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: (usize, usize),
        stride: usize,
        dilation: usize,
        bias: bool,
    ) -> Result<Self> {
        let fan_in = c_in * kernel.0 * kernel.1;
        let weight = ps.kaiming(&format!("{name}.weight"), &[c_out, c_in, kernel.0, kernel.1], fan_in)?;
        let bias = if bias {
            Some(ps.constant(&format!("{name}.bias"), &[c_out], 0.0)?)
        } else {
            None
        };
        Ok(Self {
            name: name.to_string(),
            weight,
            bias,
            kernel,
            stride,
            dilation,
        })
    }

    /// "Same" padding: output is `ceil(input / stride)` on both axes.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let pad_h = self.dilation * (self.kernel.0 - 1) / 2;
        let pad_w = self.dilation * (self.kernel.1 - 1) / 2;
        let y = if pad_h == pad_w {
            x.conv2d(&self.weight, pad_h, self.stride, self.dilation, 1)?
        } else {
            x.pad_with_zeros(2, pad_h, pad_h)?
                .pad_with_zeros(3, pad_w, pad_w)?
                .conv2d(&self.weight, 0, self.stride, self.dilation, 1)?
        };
        match &self.bias {
            Some(b) => y.broadcast_add(&b.reshape((1, (), 1, 1))?),
            None => Ok(y),
        }
    }
}

/// Batch normalisation with explicit running statistics.
#[derive(Debug, Clone)]
pub struct BatchNorm {
    gamma: Tensor,
    beta: Tensor,
    running_mean: Var,
    running_var: Var,
}

impl BatchNorm {
    pub fn new(ps: &mut ParamStore, name: &str, channels: usize) -> Result<Self> {
        Ok(Self {
            gamma: ps.constant(&format!("{name}.weight"), &[channels], 1.0)?,
            beta: ps.constant(&format!("{name}.bias"), &[channels], 0.0)?,
            running_mean: ps.buffer(&format!("{name}.running_mean"), &[channels], 0.0)?,
            running_var: ps.buffer(&format!("{name}.running_var"), &[channels], 1.0)?,
        })
    }

    pub fn forward(&self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let shape = (1, (), 1, 1);
        let (mean, var) = match mode {
            Mode::Train => {
                let (n, _, h, w) = x.dims4()?;
                let mean = x.mean_keepdim(0)?.mean_keepdim(2)?.mean_keepdim(3)?;
                let centered = x.broadcast_sub(&mean)?;
                let var = centered.sqr()?.mean_keepdim(0)?.mean_keepdim(2)?.mean_keepdim(3)?;
                let count = (n * h * w) as f64;
                let unbiased = if count > 1.0 { count / (count - 1.0) } else { 1.0 };
                let m = mean.detach().flatten_all()?;
                let v = (var.detach().flatten_all()? * unbiased)?;
                update_running(&self.running_mean, &m)?;
                update_running(&self.running_var, &v)?;
                (mean, var)
            }
            Mode::Eval => (self.running_mean.reshape(shape)?, self.running_var.reshape(shape)?),
        };
        let inv = (var + BN_EPS)?.sqrt()?.recip()?;
        x.broadcast_sub(&mean)?
            .broadcast_mul(&inv)?
            .broadcast_mul(&self.gamma.reshape(shape)?)?
            .broadcast_add(&self.beta.reshape(shape)?)
    }
}

/// `stat <- (1 - momentum) stat + momentum batch`, written in place.
fn update_running(stat: &Var, batch: &Tensor) -> Result<()> {
    let next = ((stat.as_tensor() * (1.0 - BN_MOMENTUM))? + (batch * BN_MOMENTUM)?)?;
    stat.set(&next)
}

/// Convolution, batch norm and an optional ReLU.
#[derive(Debug, Clone)]
pub struct ConvBn {
    conv: Conv2d,
    bn: BatchNorm,
    relu: bool,
}

impl ConvBn {
    pub fn new(
        ps: &mut ParamStore,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: (usize, usize),
        stride: usize,
        dilation: usize,
        relu: bool,
    ) -> Result<Self> {
        Ok(Self {
            conv: Conv2d::new(ps, &format!("{name}.conv"), c_in, c_out, kernel, stride, dilation, false)?,
            bn: BatchNorm::new(ps, &format!("{name}.bn"), c_out)?,
            relu,
        })
    }

    /// In eval mode the result is detached: inference keeps no autograd
    /// graph, so intermediate activations are freed as soon as possible.
    pub fn forward(&self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let y = self.bn.forward(&self.conv.forward(x)?, mode)?;
        let y = if self.relu { y.relu()? } else { y };
        Ok(match mode {
            Mode::Train => y,
            Mode::Eval => y.detach(),
        })
    }
}

/// 3×3 max pooling with stride 2 and one pixel of padding, as the maximum
/// over nine shifted, subsampled views. Inputs must be non-negative (the
/// padding is zero) and have even spatial dims.
pub fn max_pool_3x3_s2(x: &Tensor) -> Result<Tensor> {
    let (n, c, h, w) = x.dims4()?;
    let padded = x.pad_with_zeros(2, 1, 1)?.pad_with_zeros(3, 1, 1)?;
    let mut out: Option<Tensor> = None;
    for dy in 0..3 {
        for dx in 0..3 {
            let view = padded
                .narrow(2, dy, h)?
                .narrow(3, dx, w)?
                .reshape((n, c, h / 2, 2, w / 2, 2))?
                .narrow(3, 0, 1)?
                .narrow(5, 0, 1)?
                .reshape((n, c, h / 2, w / 2))?;
            out = Some(match out {
                Some(acc) => acc.maximum(&view)?,
                None => view,
            });
        }
    }
    Ok(out.expect("nine views"))
}

/// `(2 * len, len)` matrix of half-pixel bilinear ×2 weights with edge
/// clamping.
pub fn upsample_matrix(len: usize, device: &Device) -> Result<Tensor> {
    let mut m = vec![0f32; 2 * len * len];
    for o in 0..2 * len {
        let src = ((o as f64 + 0.5) / 2.0 - 0.5).clamp(0.0, (len - 1) as f64);
        let i0 = src.floor() as usize;
        let i1 = (i0 + 1).min(len - 1);
        let frac = (src - i0 as f64) as f32;
        m[o * len + i0] += 1.0 - frac;
        m[o * len + i1] += frac;
    }
    Tensor::from_vec(m, (2 * len, len), device)
}

/// Bilinear ×2 resize of an NCHW tensor as two matrix products.
pub fn upsample2x(x: &Tensor) -> Result<Tensor> {
    let (_, _, h, w) = x.dims4()?;
    let dev = x.device();
    let rows = upsample_matrix(h, dev)?;
    let cols = upsample_matrix(w, dev)?.t()?;
    let y = x.broadcast_matmul(&cols.contiguous()?)?;
    rows.broadcast_matmul(&y)
}

/// Logistic function from elementary ops.
pub fn sigmoid(x: &Tensor) -> Result<Tensor> {
    (x.neg()?.exp()? + 1.0)?.recip()
}

//! Building blocks shared by every backbone: convolution, batch
//! normalization with tracked running statistics, linear, dropout, and
//! pooling helpers.
//!
//! All randomness (weight init, dropout masks) comes from [`Draw`], never
//! from a global generator, so model construction and training are
//! reproducible from seeds alone.

use candle_core::{Tensor, Var, D};
use candle_nn::{Conv2dConfig, Module};

use super::store::ParamStore;
use crate::rng::Draw;
use crate::Result;

const BN_EPS: f64 = 1e-5;
/// Fraction of the batch statistic blended into the running estimate.
const BN_MOMENTUM: f64 = 0.1;

/// He-normal draw for a convolution weight: std = sqrt(2 / fan_in).
fn conv_init(draw: &mut Draw, out_ch: usize, in_ch: usize, kh: usize, kw: usize) -> Vec<f32> {
    let fan_in = (in_ch * kh * kw) as f64;
    let std = (2.0 / fan_in).sqrt();
    (0..out_ch * in_ch * kh * kw)
        .map(|_| (draw.normal() * std) as f32)
        .collect()
}

pub(crate) struct Conv2d {
    inner: candle_nn::Conv2d,
    /// Row/column zero padding. Applied manually when asymmetric, because
    /// the kernel config only supports one padding value for both axes.
    pad: (usize, usize),
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        draw: &mut Draw,
        name: &str,
        in_ch: usize,
        out_ch: usize,
        kernel: (usize, usize),
        stride: usize,
        padding: (usize, usize),
        bias: bool,
    ) -> Result<Self> {
        let (kh, kw) = kernel;
        let weight = Tensor::from_vec(
            conv_init(draw, out_ch, in_ch, kh, kw),
            (out_ch, in_ch, kh, kw),
            store.device(),
        )?;
        let weight = store.param(&format!("{name}.weight"), weight)?;
        let bias = if bias {
            let zeros = Tensor::zeros((out_ch,), weight.dtype(), store.device())?;
            Some(store.param(&format!("{name}.bias"), zeros)?)
        } else {
            None
        };
        let symmetric = padding.0 == padding.1;
        let config = Conv2dConfig {
            padding: if symmetric { padding.0 } else { 0 },
            stride,
            ..Default::default()
        };
        Ok(Conv2d {
            inner: candle_nn::Conv2d::new(weight, bias, config),
            pad: if symmetric { (0, 0) } else { padding },
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (ph, pw) = self.pad;
        let x = if (ph, pw) == (0, 0) {
            self.inner.forward(x)?
        } else {
            let padded = x.pad_with_zeros(2, ph, ph)?.pad_with_zeros(3, pw, pw)?;
            self.inner.forward(&padded)?
        };
        Ok(x)
    }
}

/// Batch normalization over the channel axis of `(B, C, H, W)` input.
///
/// Training mode normalizes with batch statistics and folds them into the
/// running estimates (registered as buffers, so they persist in
/// checkpoints); eval mode normalizes with the running estimates.
pub(crate) struct BatchNorm2d {
    gamma: Tensor,
    beta: Tensor,
    running_mean: Var,
    running_var: Var,
    channels: usize,
}

impl BatchNorm2d {
    pub fn new(store: &mut ParamStore, name: &str, channels: usize) -> Result<Self> {
        let dev = store.device().clone();
        let dt = candle_core::DType::F32;
        let gamma = store.param(&format!("{name}.weight"), Tensor::ones((channels,), dt, &dev)?)?;
        let beta = store.param(&format!("{name}.bias"), Tensor::zeros((channels,), dt, &dev)?)?;
        let running_mean =
            store.buffer(&format!("{name}.running_mean"), Tensor::zeros((channels,), dt, &dev)?)?;
        let running_var =
            store.buffer(&format!("{name}.running_var"), Tensor::ones((channels,), dt, &dev)?)?;
        Ok(BatchNorm2d {
            gamma,
            beta,
            running_mean,
            running_var,
            channels,
        })
    }

    pub fn forward(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        let (b, c, h, w) = x.dims4()?;
        debug_assert_eq!(c, self.channels);
        let flat = (1, c, 1, 1);
        let (mean4, var4) = if train {
            // Per-channel batch statistics; the variance is biased, matching
            // what the normalization itself should use.
            let xt = x.transpose(0, 1)?.flatten_from(1)?; // (C, B*H*W)
            let mean = xt.mean(1)?;
            let var = xt.broadcast_sub(&mean.unsqueeze(1)?)?.sqr()?.mean(1)?;
            let n = (b * h * w) as f64;
            if n > 1.0 {
                // Running estimates use the unbiased variance and live
                // outside the autograd graph.
                let unbiased = (var.detach() * (n / (n - 1.0)))?;
                let rm = ((self.running_mean.as_tensor() * (1.0 - BN_MOMENTUM))?
                    + (mean.detach() * BN_MOMENTUM)?)?;
                let rv = ((self.running_var.as_tensor() * (1.0 - BN_MOMENTUM))?
                    + (unbiased * BN_MOMENTUM)?)?;
                self.running_mean.set(&rm)?;
                self.running_var.set(&rv)?;
            }
            (mean.reshape(flat)?, var.reshape(flat)?)
        } else {
            (
                self.running_mean.as_tensor().reshape(flat)?,
                self.running_var.as_tensor().reshape(flat)?,
            )
        };
        let xhat = x
            .broadcast_sub(&mean4)?
            .broadcast_div(&(var4 + BN_EPS)?.sqrt()?)?;
        let y = xhat
            .broadcast_mul(&self.gamma.reshape(flat)?)?
            .broadcast_add(&self.beta.reshape(flat)?)?;
        Ok(y)
    }
}

/// Convolution (no bias) + batch norm + ReLU, the unit every backbone is
/// mostly made of.
pub(crate) struct ConvBn {
    conv: Conv2d,
    bn: BatchNorm2d,
}

impl ConvBn {
    #[allow(clippy::too_many_arguments)] // conv geometry is irreducibly wide
    pub fn new(
        store: &mut ParamStore,
        draw: &mut Draw,
        name: &str,
        in_ch: usize,
        out_ch: usize,
        kernel: (usize, usize),
        stride: usize,
        padding: (usize, usize),
    ) -> Result<Self> {
        let conv = Conv2d::new(
            store,
            draw,
            &format!("{name}.conv"),
            in_ch,
            out_ch,
            kernel,
            stride,
            padding,
            false,
        )?;
        let bn = BatchNorm2d::new(store, &format!("{name}.bn"), out_ch)?;
        Ok(ConvBn { conv, bn })
    }

    pub fn forward(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        Ok(self.bn.forward(&self.conv.forward(x)?, train)?.relu()?)
    }
}

pub(crate) struct Linear {
    inner: candle_nn::Linear,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        draw: &mut Draw,
        name: &str,
        in_f: usize,
        out_f: usize,
    ) -> Result<Self> {
        let std = (1.0 / in_f as f64).sqrt();
        let weight: Vec<f32> = (0..out_f * in_f)
            .map(|_| (draw.normal() * std) as f32)
            .collect();
        let weight = store.param(
            &format!("{name}.weight"),
            Tensor::from_vec(weight, (out_f, in_f), store.device())?,
        )?;
        let bias = store.param(
            &format!("{name}.bias"),
            Tensor::zeros((out_f,), weight.dtype(), store.device())?,
        )?;
        Ok(Linear {
            inner: candle_nn::Linear::new(weight, Some(bias)),
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.inner.forward(x)?)
    }
}

/// Inverted-dropout mask: entries are `1/(1-p)` with probability `1-p`,
/// else 0, so eval mode needs no rescaling. `p = 1` zeroes everything.
pub(crate) fn dropout_mask(draw: &mut Draw, p: f64, shape: (usize, usize)) -> Result<Tensor> {
    let keep = 1.0 - p;
    let scale = if keep > 0.0 { (1.0 / keep) as f32 } else { 0.0 };
    let values: Vec<f32> = (0..shape.0 * shape.1)
        .map(|_| if draw.bernoulli(keep) { scale } else { 0.0 })
        .collect();
    Ok(Tensor::from_vec(values, shape, &candle_core::Device::Cpu)?)
}

/// Max pool with zero padding. Only valid on non-negative input (all uses
/// sit after a ReLU), where a zero pad cannot win the max.
pub(crate) fn max_pool(x: &Tensor, kernel: usize, stride: usize, padding: usize) -> Result<Tensor> {
    let x = if padding > 0 {
        x.pad_with_zeros(2, padding, padding)?
            .pad_with_zeros(3, padding, padding)?
    } else {
        x.clone()
    };
    Ok(x.max_pool2d_with_stride(kernel, stride)?)
}

/// Stride-1 average pool with zero padding; border counts include the pad.
pub(crate) fn avg_pool_same(x: &Tensor, kernel: usize, padding: usize) -> Result<Tensor> {
    let x = x
        .pad_with_zeros(2, padding, padding)?
        .pad_with_zeros(3, padding, padding)?;
    Ok(x.avg_pool2d_with_stride(kernel, 1)?)
}

/// `(B, C, H, W)` -> `(B, C)` by averaging each feature map.
pub(crate) fn global_avg_pool(x: &Tensor) -> Result<Tensor> {
    Ok(x.mean(D::Minus1)?.mean(D::Minus1)?)
}

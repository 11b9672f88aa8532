//! Bottleneck residual networks (the 50- and 101-layer variants).
//!
//! Stem: 7x7/2 convolution, BN, ReLU, 3x3/2 max pool. Four stages of
//! bottleneck blocks (1x1 reduce, 3x3, 1x1 expand x4) with a projection
//! shortcut wherever shape changes; global average pooling yields a
//! 2048-dimensional feature vector.

use candle_core::Tensor;

use super::layers::{global_avg_pool, max_pool, BatchNorm2d, Conv2d};
use super::store::ParamStore;
use crate::rng::Draw;
use crate::Result;

pub(crate) const FEATURES: usize = 2048;

/// Blocks per stage.
pub(crate) const RESNET50_BLOCKS: [usize; 4] = [3, 4, 6, 3];
pub(crate) const RESNET101_BLOCKS: [usize; 4] = [3, 4, 23, 3];

struct Bottleneck {
    conv1: Conv2d,
    bn1: BatchNorm2d,
    conv2: Conv2d,
    bn2: BatchNorm2d,
    conv3: Conv2d,
    bn3: BatchNorm2d,
    shortcut: Option<(Conv2d, BatchNorm2d)>,
}

impl Bottleneck {
    fn new(
        store: &mut ParamStore,
        draw: &mut Draw,
        name: &str,
        in_ch: usize,
        mid: usize,
        stride: usize,
    ) -> Result<Self> {
        let out = mid * 4;
        let conv1 = Conv2d::new(store, draw, &format!("{name}.conv1"), in_ch, mid, (1, 1), 1, (0, 0), false)?;
        let bn1 = BatchNorm2d::new(store, &format!("{name}.bn1"), mid)?;
        let conv2 = Conv2d::new(store, draw, &format!("{name}.conv2"), mid, mid, (3, 3), stride, (1, 1), false)?;
        let bn2 = BatchNorm2d::new(store, &format!("{name}.bn2"), mid)?;
        let conv3 = Conv2d::new(store, draw, &format!("{name}.conv3"), mid, out, (1, 1), 1, (0, 0), false)?;
        let bn3 = BatchNorm2d::new(store, &format!("{name}.bn3"), out)?;
        let shortcut = if stride != 1 || in_ch != out {
            let c = Conv2d::new(store, draw, &format!("{name}.down.conv"), in_ch, out, (1, 1), stride, (0, 0), false)?;
            let b = BatchNorm2d::new(store, &format!("{name}.down.bn"), out)?;
            Some((c, b))
        } else {
            None
        };
        Ok(Bottleneck { conv1, bn1, conv2, bn2, conv3, bn3, shortcut })
    }

    fn forward(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        let y = self.bn1.forward(&self.conv1.forward(x)?, train)?.relu()?;
        let y = self.bn2.forward(&self.conv2.forward(&y)?, train)?.relu()?;
        let y = self.bn3.forward(&self.conv3.forward(&y)?, train)?;
        let identity = match &self.shortcut {
            Some((c, b)) => b.forward(&c.forward(x)?, train)?,
            None => x.clone(),
        };
        Ok((y + identity)?.relu()?)
    }
}

pub(crate) struct ResNet {
    stem_conv: Conv2d,
    stem_bn: BatchNorm2d,
    stages: Vec<Vec<Bottleneck>>,
}

impl ResNet {
    pub fn new(store: &mut ParamStore, draw: &mut Draw, blocks: [usize; 4]) -> Result<Self> {
        let stem_conv = Conv2d::new(store, draw, "stem.conv", 3, 64, (7, 7), 2, (3, 3), false)?;
        let stem_bn = BatchNorm2d::new(store, "stem.bn", 64)?;
        let mut stages = Vec::with_capacity(4);
        let mut in_ch = 64;
        for (s, &count) in blocks.iter().enumerate() {
            let mid = 64 << s;
            let stride = if s == 0 { 1 } else { 2 };
            let mut stage = Vec::with_capacity(count);
            for b in 0..count {
                let block = Bottleneck::new(
                    store,
                    draw,
                    &format!("layer{}.{b}", s + 1),
                    in_ch,
                    mid,
                    if b == 0 { stride } else { 1 },
                )?;
                in_ch = mid * 4;
                stage.push(block);
            }
            stages.push(stage);
        }
        Ok(ResNet { stem_conv, stem_bn, stages })
    }

    pub fn features(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        let mut x = self
            .stem_bn
            .forward(&self.stem_conv.forward(x)?, train)?
            .relu()?;
        x = max_pool(&x, 3, 2, 1)?;
        for stage in &self.stages {
            for block in stage {
                x = block.forward(&x, train)?;
            }
        }
        global_avg_pool(&x)
    }
}

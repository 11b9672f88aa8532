//! Hybrid inception network with residual connections, second generation.
//!
//! Same stem family as the inception network, then three runs of residual
//! blocks (35x35, 17x17, 8x8 grid scales) whose branch outputs are
//! projected by a biased 1x1 convolution, scaled down, and added back to
//! the trunk. A final 1x1 expands to the 1536-dimensional feature space.

use candle_core::Tensor;

use super::layers::{avg_pool_same, global_avg_pool, max_pool, Conv2d, ConvBn};
use super::store::ParamStore;
use crate::rng::Draw;
use crate::Result;

pub(crate) const FEATURES: usize = 1536;

type S<'a> = &'a mut ParamStore;
type D<'a> = &'a mut Draw;

/// Entry block producing the 320-channel trunk.
struct Mixed5b {
    b0: ConvBn,
    b1_1: ConvBn,
    b1_2: ConvBn,
    b2_1: ConvBn,
    b2_2: ConvBn,
    b2_3: ConvBn,
    pool: ConvBn,
}

impl Mixed5b {
    fn new(store: S, draw: D, name: &str) -> Result<Self> {
        let n = |s: &str| format!("{name}.{s}");
        Ok(Mixed5b {
            b0: ConvBn::new(store, draw, &n("b0"), 192, 96, (1, 1), 1, (0, 0))?,
            b1_1: ConvBn::new(store, draw, &n("b1_1"), 192, 48, (1, 1), 1, (0, 0))?,
            b1_2: ConvBn::new(store, draw, &n("b1_2"), 48, 64, (5, 5), 1, (2, 2))?,
            b2_1: ConvBn::new(store, draw, &n("b2_1"), 192, 64, (1, 1), 1, (0, 0))?,
            b2_2: ConvBn::new(store, draw, &n("b2_2"), 64, 96, (3, 3), 1, (1, 1))?,
            b2_3: ConvBn::new(store, draw, &n("b2_3"), 96, 96, (3, 3), 1, (1, 1))?,
            pool: ConvBn::new(store, draw, &n("pool"), 192, 64, (1, 1), 1, (0, 0))?,
        })
    }

    fn forward(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        let a = self.b0.forward(x, train)?;
        let b = self.b1_2.forward(&self.b1_1.forward(x, train)?, train)?;
        let c = self
            .b2_3
            .forward(&self.b2_2.forward(&self.b2_1.forward(x, train)?, train)?, train)?;
        let d = self.pool.forward(&avg_pool_same(x, 3, 1)?, train)?;
        Ok(Tensor::cat(&[a, b, c, d], 1)?) // 320
    }
}

/// Residual block at the 35x35 scale (trunk width 320).
struct Block35 {
    b0: ConvBn,
    b1_1: ConvBn,
    b1_2: ConvBn,
    b2_1: ConvBn,
    b2_2: ConvBn,
    b2_3: ConvBn,
    project: Conv2d,
    scale: f64,
}

impl Block35 {
    fn new(store: S, draw: D, name: &str, scale: f64) -> Result<Self> {
        let n = |s: &str| format!("{name}.{s}");
        Ok(Block35 {
            b0: ConvBn::new(store, draw, &n("b0"), 320, 32, (1, 1), 1, (0, 0))?,
            b1_1: ConvBn::new(store, draw, &n("b1_1"), 320, 32, (1, 1), 1, (0, 0))?,
            b1_2: ConvBn::new(store, draw, &n("b1_2"), 32, 32, (3, 3), 1, (1, 1))?,
            b2_1: ConvBn::new(store, draw, &n("b2_1"), 320, 32, (1, 1), 1, (0, 0))?,
            b2_2: ConvBn::new(store, draw, &n("b2_2"), 32, 48, (3, 3), 1, (1, 1))?,
            b2_3: ConvBn::new(store, draw, &n("b2_3"), 48, 64, (3, 3), 1, (1, 1))?,
            project: Conv2d::new(store, draw, &n("project"), 128, 320, (1, 1), 1, (0, 0), true)?,
            scale,
        })
    }

    fn forward(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        let a = self.b0.forward(x, train)?;
        let b = self.b1_2.forward(&self.b1_1.forward(x, train)?, train)?;
        let c = self
            .b2_3
            .forward(&self.b2_2.forward(&self.b2_1.forward(x, train)?, train)?, train)?;
        let y = self.project.forward(&Tensor::cat(&[a, b, c], 1)?)?;
        Ok(((y * self.scale)? + x)?.relu()?)
    }
}

/// Reduction from the 35x35 to the 17x17 grid (320 -> 1088 channels).
struct Mixed6a {
    b0: ConvBn,
    b1_1: ConvBn,
    b1_2: ConvBn,
    b1_3: ConvBn,
}

impl Mixed6a {
    fn new(store: S, draw: D, name: &str) -> Result<Self> {
        let n = |s: &str| format!("{name}.{s}");
        Ok(Mixed6a {
            b0: ConvBn::new(store, draw, &n("b0"), 320, 384, (3, 3), 2, (0, 0))?,
            b1_1: ConvBn::new(store, draw, &n("b1_1"), 320, 256, (1, 1), 1, (0, 0))?,
            b1_2: ConvBn::new(store, draw, &n("b1_2"), 256, 256, (3, 3), 1, (1, 1))?,
            b1_3: ConvBn::new(store, draw, &n("b1_3"), 256, 384, (3, 3), 2, (0, 0))?,
        })
    }

    fn forward(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        let a = self.b0.forward(x, train)?;
        let b = self
            .b1_3
            .forward(&self.b1_2.forward(&self.b1_1.forward(x, train)?, train)?, train)?;
        let c = max_pool(x, 3, 2, 0)?;
        Ok(Tensor::cat(&[a, b, c], 1)?) // 1088
    }
}

/// Residual block at the 17x17 scale (trunk width 1088).
struct Block17 {
    b0: ConvBn,
    b1_1: ConvBn,
    b1_2: ConvBn,
    b1_3: ConvBn,
    project: Conv2d,
    scale: f64,
}

impl Block17 {
    fn new(store: S, draw: D, name: &str, scale: f64) -> Result<Self> {
        let n = |s: &str| format!("{name}.{s}");
        Ok(Block17 {
            b0: ConvBn::new(store, draw, &n("b0"), 1088, 192, (1, 1), 1, (0, 0))?,
            b1_1: ConvBn::new(store, draw, &n("b1_1"), 1088, 128, (1, 1), 1, (0, 0))?,
            b1_2: ConvBn::new(store, draw, &n("b1_2"), 128, 160, (1, 7), 1, (0, 3))?,
            b1_3: ConvBn::new(store, draw, &n("b1_3"), 160, 192, (7, 1), 1, (3, 0))?,
            project: Conv2d::new(store, draw, &n("project"), 384, 1088, (1, 1), 1, (0, 0), true)?,
            scale,
        })
    }

    fn forward(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        let a = self.b0.forward(x, train)?;
        let b = self
            .b1_3
            .forward(&self.b1_2.forward(&self.b1_1.forward(x, train)?, train)?, train)?;
        let y = self.project.forward(&Tensor::cat(&[a, b], 1)?)?;
        Ok(((y * self.scale)? + x)?.relu()?)
    }
}

/// Reduction from the 17x17 to the 8x8 grid (1088 -> 2080 channels).
struct Mixed7a {
    b0_1: ConvBn,
    b0_2: ConvBn,
    b1_1: ConvBn,
    b1_2: ConvBn,
    b2_1: ConvBn,
    b2_2: ConvBn,
    b2_3: ConvBn,
}

impl Mixed7a {
    fn new(store: S, draw: D, name: &str) -> Result<Self> {
        let n = |s: &str| format!("{name}.{s}");
        Ok(Mixed7a {
            b0_1: ConvBn::new(store, draw, &n("b0_1"), 1088, 256, (1, 1), 1, (0, 0))?,
            b0_2: ConvBn::new(store, draw, &n("b0_2"), 256, 384, (3, 3), 2, (0, 0))?,
            b1_1: ConvBn::new(store, draw, &n("b1_1"), 1088, 256, (1, 1), 1, (0, 0))?,
            b1_2: ConvBn::new(store, draw, &n("b1_2"), 256, 288, (3, 3), 2, (0, 0))?,
            b2_1: ConvBn::new(store, draw, &n("b2_1"), 1088, 256, (1, 1), 1, (0, 0))?,
            b2_2: ConvBn::new(store, draw, &n("b2_2"), 256, 288, (3, 3), 1, (1, 1))?,
            b2_3: ConvBn::new(store, draw, &n("b2_3"), 288, 320, (3, 3), 2, (0, 0))?,
        })
    }

    fn forward(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        let a = self.b0_2.forward(&self.b0_1.forward(x, train)?, train)?;
        let b = self.b1_2.forward(&self.b1_1.forward(x, train)?, train)?;
        let c = self
            .b2_3
            .forward(&self.b2_2.forward(&self.b2_1.forward(x, train)?, train)?, train)?;
        let d = max_pool(x, 3, 2, 0)?;
        Ok(Tensor::cat(&[a, b, c, d], 1)?) // 2080
    }
}

/// Residual block at the 8x8 scale (trunk width 2080). The last one in the
/// network skips the trailing ReLU and uses unit scale.
struct Block8 {
    b0: ConvBn,
    b1_1: ConvBn,
    b1_2: ConvBn,
    b1_3: ConvBn,
    project: Conv2d,
    scale: f64,
    relu: bool,
}

impl Block8 {
    fn new(store: S, draw: D, name: &str, scale: f64, relu: bool) -> Result<Self> {
        let n = |s: &str| format!("{name}.{s}");
        Ok(Block8 {
            b0: ConvBn::new(store, draw, &n("b0"), 2080, 192, (1, 1), 1, (0, 0))?,
            b1_1: ConvBn::new(store, draw, &n("b1_1"), 2080, 192, (1, 1), 1, (0, 0))?,
            b1_2: ConvBn::new(store, draw, &n("b1_2"), 192, 224, (1, 3), 1, (0, 1))?,
            b1_3: ConvBn::new(store, draw, &n("b1_3"), 224, 256, (3, 1), 1, (1, 0))?,
            project: Conv2d::new(store, draw, &n("project"), 448, 2080, (1, 1), 1, (0, 0), true)?,
            scale,
            relu,
        })
    }

    fn forward(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        let a = self.b0.forward(x, train)?;
        let b = self
            .b1_3
            .forward(&self.b1_2.forward(&self.b1_1.forward(x, train)?, train)?, train)?;
        let y = self.project.forward(&Tensor::cat(&[a, b], 1)?)?;
        let out = ((y * self.scale)? + x)?;
        if self.relu {
            Ok(out.relu()?)
        } else {
            Ok(out)
        }
    }
}

pub(crate) struct InceptionResnetV2 {
    stem: Vec<ConvBn>,
    mixed_5b: Mixed5b,
    blocks_35: Vec<Block35>,
    mixed_6a: Mixed6a,
    blocks_17: Vec<Block17>,
    mixed_7a: Mixed7a,
    blocks_8: Vec<Block8>,
    conv_final: ConvBn,
}

impl InceptionResnetV2 {
    pub fn new(store: &mut ParamStore, draw: &mut Draw) -> Result<Self> {
        let stem = vec![
            ConvBn::new(store, draw, "stem.c1", 3, 32, (3, 3), 2, (0, 0))?,
            ConvBn::new(store, draw, "stem.c2", 32, 32, (3, 3), 1, (0, 0))?,
            ConvBn::new(store, draw, "stem.c3", 32, 64, (3, 3), 1, (1, 1))?,
            ConvBn::new(store, draw, "stem.c4", 64, 80, (1, 1), 1, (0, 0))?,
            ConvBn::new(store, draw, "stem.c5", 80, 192, (3, 3), 1, (0, 0))?,
        ];
        let mixed_5b = Mixed5b::new(store, draw, "mixed_5b")?;
        let blocks_35 = (0..10)
            .map(|i| Block35::new(store, draw, &format!("blk35_{i}"), 0.17))
            .collect::<Result<Vec<_>>>()?;
        let mixed_6a = Mixed6a::new(store, draw, "mixed_6a")?;
        let blocks_17 = (0..20)
            .map(|i| Block17::new(store, draw, &format!("blk17_{i}"), 0.10))
            .collect::<Result<Vec<_>>>()?;
        let mixed_7a = Mixed7a::new(store, draw, "mixed_7a")?;
        let mut blocks_8 = (0..9)
            .map(|i| Block8::new(store, draw, &format!("blk8_{i}"), 0.20, true))
            .collect::<Result<Vec<_>>>()?;
        blocks_8.push(Block8::new(store, draw, "blk8_9", 1.0, false)?);
        let conv_final = ConvBn::new(store, draw, "conv_final", 2080, FEATURES, (1, 1), 1, (0, 0))?;
        Ok(InceptionResnetV2 {
            stem,
            mixed_5b,
            blocks_35,
            mixed_6a,
            blocks_17,
            mixed_7a,
            blocks_8,
            conv_final,
        })
    }

    pub fn features(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        let mut x = x.clone();
        for (i, conv) in self.stem.iter().enumerate() {
            x = conv.forward(&x, train)?;
            if i == 2 || i == 4 {
                x = max_pool(&x, 3, 2, 0)?;
            }
        }
        x = self.mixed_5b.forward(&x, train)?;
        for b in &self.blocks_35 {
            x = b.forward(&x, train)?;
        }
        x = self.mixed_6a.forward(&x, train)?;
        for b in &self.blocks_17 {
            x = b.forward(&x, train)?;
        }
        x = self.mixed_7a.forward(&x, train)?;
        for b in &self.blocks_8 {
            x = b.forward(&x, train)?;
        }
        x = self.conv_final.forward(&x, train)?;
        global_avg_pool(&x)
    }
}

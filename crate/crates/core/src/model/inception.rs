//! Inception network, third-generation layout (auxiliary classifier
//! omitted; a binary head replaces the original classifier).
//!
//! Stem of plain convolutions, then three groups of mixed blocks with two
//! grid reductions between them. Factorized kernels (1x7/7x1, 1x3/3x1)
//! keep the parameter count near 22M. Global average pooling produces a
//! 2048-dimensional feature vector.

use candle_core::Tensor;

use super::layers::{avg_pool_same, global_avg_pool, max_pool, ConvBn};
use super::store::ParamStore;
use crate::rng::Draw;
use crate::Result;

pub(crate) const FEATURES: usize = 2048;

type S<'a> = &'a mut ParamStore;
type D<'a> = &'a mut Draw;

/// 1x1 / 5x5 / double-3x3 / pooled branches, concatenated.
struct BlockA {
    b1: ConvBn,
    b5_1: ConvBn,
    b5_2: ConvBn,
    b3_1: ConvBn,
    b3_2: ConvBn,
    b3_3: ConvBn,
    pool: ConvBn,
}

impl BlockA {
    fn new(store: S, draw: D, name: &str, in_ch: usize, pool_ch: usize) -> Result<Self> {
        Ok(BlockA {
            b1: ConvBn::new(store, draw, &format!("{name}.b1"), in_ch, 64, (1, 1), 1, (0, 0))?,
            b5_1: ConvBn::new(store, draw, &format!("{name}.b5_1"), in_ch, 48, (1, 1), 1, (0, 0))?,
            b5_2: ConvBn::new(store, draw, &format!("{name}.b5_2"), 48, 64, (5, 5), 1, (2, 2))?,
            b3_1: ConvBn::new(store, draw, &format!("{name}.b3_1"), in_ch, 64, (1, 1), 1, (0, 0))?,
            b3_2: ConvBn::new(store, draw, &format!("{name}.b3_2"), 64, 96, (3, 3), 1, (1, 1))?,
            b3_3: ConvBn::new(store, draw, &format!("{name}.b3_3"), 96, 96, (3, 3), 1, (1, 1))?,
            pool: ConvBn::new(store, draw, &format!("{name}.pool"), in_ch, pool_ch, (1, 1), 1, (0, 0))?,
        })
    }

    fn forward(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        let a = self.b1.forward(x, train)?;
        let b = self.b5_2.forward(&self.b5_1.forward(x, train)?, train)?;
        let c = self
            .b3_3
            .forward(&self.b3_2.forward(&self.b3_1.forward(x, train)?, train)?, train)?;
        let d = self.pool.forward(&avg_pool_same(x, 3, 1)?, train)?;
        Ok(Tensor::cat(&[a, b, c, d], 1)?)
    }
}

/// First grid reduction: strided 3x3, strided double-3x3, max pool.
struct ReduceA {
    b3: ConvBn,
    d1: ConvBn,
    d2: ConvBn,
    d3: ConvBn,
}

impl ReduceA {
    fn new(store: S, draw: D, name: &str, in_ch: usize) -> Result<Self> {
        Ok(ReduceA {
            b3: ConvBn::new(store, draw, &format!("{name}.b3"), in_ch, 384, (3, 3), 2, (0, 0))?,
            d1: ConvBn::new(store, draw, &format!("{name}.d1"), in_ch, 64, (1, 1), 1, (0, 0))?,
            d2: ConvBn::new(store, draw, &format!("{name}.d2"), 64, 96, (3, 3), 1, (1, 1))?,
            d3: ConvBn::new(store, draw, &format!("{name}.d3"), 96, 96, (3, 3), 2, (0, 0))?,
        })
    }

    fn forward(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        let a = self.b3.forward(x, train)?;
        let b = self
            .d3
            .forward(&self.d2.forward(&self.d1.forward(x, train)?, train)?, train)?;
        let c = max_pool(x, 3, 2, 0)?;
        Ok(Tensor::cat(&[a, b, c], 1)?)
    }
}

/// Factorized-7 block: 1x1, 1x7+7x1, the doubled variant, pooled branch.
struct BlockC {
    b1: ConvBn,
    s1: ConvBn,
    s2: ConvBn,
    s3: ConvBn,
    d1: ConvBn,
    d2: ConvBn,
    d3: ConvBn,
    d4: ConvBn,
    d5: ConvBn,
    pool: ConvBn,
}

impl BlockC {
    fn new(store: S, draw: D, name: &str, in_ch: usize, c7: usize) -> Result<Self> {
        let n = |s: &str| format!("{name}.{s}");
        Ok(BlockC {
            b1: ConvBn::new(store, draw, &n("b1"), in_ch, 192, (1, 1), 1, (0, 0))?,
            s1: ConvBn::new(store, draw, &n("s1"), in_ch, c7, (1, 1), 1, (0, 0))?,
            s2: ConvBn::new(store, draw, &n("s2"), c7, c7, (1, 7), 1, (0, 3))?,
            s3: ConvBn::new(store, draw, &n("s3"), c7, 192, (7, 1), 1, (3, 0))?,
            d1: ConvBn::new(store, draw, &n("d1"), in_ch, c7, (1, 1), 1, (0, 0))?,
            d2: ConvBn::new(store, draw, &n("d2"), c7, c7, (7, 1), 1, (3, 0))?,
            d3: ConvBn::new(store, draw, &n("d3"), c7, c7, (1, 7), 1, (0, 3))?,
            d4: ConvBn::new(store, draw, &n("d4"), c7, c7, (7, 1), 1, (3, 0))?,
            d5: ConvBn::new(store, draw, &n("d5"), c7, 192, (1, 7), 1, (0, 3))?,
            pool: ConvBn::new(store, draw, &n("pool"), in_ch, 192, (1, 1), 1, (0, 0))?,
        })
    }

    fn forward(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        let a = self.b1.forward(x, train)?;
        let b = self
            .s3
            .forward(&self.s2.forward(&self.s1.forward(x, train)?, train)?, train)?;
        let mut c = self.d1.forward(x, train)?;
        for step in [&self.d2, &self.d3, &self.d4, &self.d5] {
            c = step.forward(&c, train)?;
        }
        let d = self.pool.forward(&avg_pool_same(x, 3, 1)?, train)?;
        Ok(Tensor::cat(&[a, b, c, d], 1)?)
    }
}

/// Second grid reduction.
struct ReduceB {
    b3_1: ConvBn,
    b3_2: ConvBn,
    b7_1: ConvBn,
    b7_2: ConvBn,
    b7_3: ConvBn,
    b7_4: ConvBn,
}

impl ReduceB {
    fn new(store: S, draw: D, name: &str, in_ch: usize) -> Result<Self> {
        let n = |s: &str| format!("{name}.{s}");
        Ok(ReduceB {
            b3_1: ConvBn::new(store, draw, &n("b3_1"), in_ch, 192, (1, 1), 1, (0, 0))?,
            b3_2: ConvBn::new(store, draw, &n("b3_2"), 192, 320, (3, 3), 2, (0, 0))?,
            b7_1: ConvBn::new(store, draw, &n("b7_1"), in_ch, 192, (1, 1), 1, (0, 0))?,
            b7_2: ConvBn::new(store, draw, &n("b7_2"), 192, 192, (1, 7), 1, (0, 3))?,
            b7_3: ConvBn::new(store, draw, &n("b7_3"), 192, 192, (7, 1), 1, (3, 0))?,
            b7_4: ConvBn::new(store, draw, &n("b7_4"), 192, 192, (3, 3), 2, (0, 0))?,
        })
    }

    fn forward(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        let a = self.b3_2.forward(&self.b3_1.forward(x, train)?, train)?;
        let mut b = self.b7_1.forward(x, train)?;
        for step in [&self.b7_2, &self.b7_3, &self.b7_4] {
            b = step.forward(&b, train)?;
        }
        let c = max_pool(x, 3, 2, 0)?;
        Ok(Tensor::cat(&[a, b, c], 1)?)
    }
}

/// Widest block: splits 3x3 work into parallel 1x3 and 3x1 halves.
struct BlockE {
    b1: ConvBn,
    s1: ConvBn,
    s2a: ConvBn,
    s2b: ConvBn,
    d1: ConvBn,
    d2: ConvBn,
    d3a: ConvBn,
    d3b: ConvBn,
    pool: ConvBn,
}

impl BlockE {
    fn new(store: S, draw: D, name: &str, in_ch: usize) -> Result<Self> {
        let n = |s: &str| format!("{name}.{s}");
        Ok(BlockE {
            b1: ConvBn::new(store, draw, &n("b1"), in_ch, 320, (1, 1), 1, (0, 0))?,
            s1: ConvBn::new(store, draw, &n("s1"), in_ch, 384, (1, 1), 1, (0, 0))?,
            s2a: ConvBn::new(store, draw, &n("s2a"), 384, 384, (1, 3), 1, (0, 1))?,
            s2b: ConvBn::new(store, draw, &n("s2b"), 384, 384, (3, 1), 1, (1, 0))?,
            d1: ConvBn::new(store, draw, &n("d1"), in_ch, 448, (1, 1), 1, (0, 0))?,
            d2: ConvBn::new(store, draw, &n("d2"), 448, 384, (3, 3), 1, (1, 1))?,
            d3a: ConvBn::new(store, draw, &n("d3a"), 384, 384, (1, 3), 1, (0, 1))?,
            d3b: ConvBn::new(store, draw, &n("d3b"), 384, 384, (3, 1), 1, (1, 0))?,
            pool: ConvBn::new(store, draw, &n("pool"), in_ch, 192, (1, 1), 1, (0, 0))?,
        })
    }

    fn forward(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        let a = self.b1.forward(x, train)?;
        let s = self.s1.forward(x, train)?;
        let b = Tensor::cat(
            &[self.s2a.forward(&s, train)?, self.s2b.forward(&s, train)?],
            1,
        )?;
        let d = self.d2.forward(&self.d1.forward(x, train)?, train)?;
        let c = Tensor::cat(
            &[self.d3a.forward(&d, train)?, self.d3b.forward(&d, train)?],
            1,
        )?;
        let p = self.pool.forward(&avg_pool_same(x, 3, 1)?, train)?;
        Ok(Tensor::cat(&[a, b, c, p], 1)?)
    }
}

pub(crate) struct InceptionV3 {
    stem: Vec<ConvBn>,
    block_a: Vec<BlockA>,
    reduce_a: ReduceA,
    block_c: Vec<BlockC>,
    reduce_b: ReduceB,
    block_e: Vec<BlockE>,
}

impl InceptionV3 {
    pub fn new(store: &mut ParamStore, draw: &mut Draw) -> Result<Self> {
        let stem = vec![
            ConvBn::new(store, draw, "stem.c1", 3, 32, (3, 3), 2, (0, 0))?,
            ConvBn::new(store, draw, "stem.c2", 32, 32, (3, 3), 1, (0, 0))?,
            ConvBn::new(store, draw, "stem.c3", 32, 64, (3, 3), 1, (1, 1))?,
            ConvBn::new(store, draw, "stem.c4", 64, 80, (1, 1), 1, (0, 0))?,
            ConvBn::new(store, draw, "stem.c5", 80, 192, (3, 3), 1, (0, 0))?,
        ];
        let block_a = vec![
            BlockA::new(store, draw, "blk_a0", 192, 32)?, // -> 256
            BlockA::new(store, draw, "blk_a1", 256, 64)?, // -> 288
            BlockA::new(store, draw, "blk_a2", 288, 64)?, // -> 288
        ];
        let reduce_a = ReduceA::new(store, draw, "red_a", 288)?; // -> 768
        let block_c = vec![
            BlockC::new(store, draw, "blk_c0", 768, 128)?,
            BlockC::new(store, draw, "blk_c1", 768, 160)?,
            BlockC::new(store, draw, "blk_c2", 768, 160)?,
            BlockC::new(store, draw, "blk_c3", 768, 192)?,
        ];
        let reduce_b = ReduceB::new(store, draw, "red_b", 768)?; // -> 1280
        let block_e = vec![
            BlockE::new(store, draw, "blk_e0", 1280)?, // -> 2048
            BlockE::new(store, draw, "blk_e1", 2048)?, // -> 2048
        ];
        Ok(InceptionV3 { stem, block_a, reduce_a, block_c, reduce_b, block_e })
    }

    pub fn features(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        let mut x = x.clone();
        for (i, conv) in self.stem.iter().enumerate() {
            x = conv.forward(&x, train)?;
            // Max pools sit after the third and fifth stem convolutions.
            if i == 2 || i == 4 {
                x = max_pool(&x, 3, 2, 0)?;
            }
        }
        for b in &self.block_a {
            x = b.forward(&x, train)?;
        }
        x = self.reduce_a.forward(&x, train)?;
        for b in &self.block_c {
            x = b.forward(&x, train)?;
        }
        x = self.reduce_b.forward(&x, train)?;
        for b in &self.block_e {
            x = b.forward(&x, train)?;
        }
        global_avg_pool(&x)
    }
}

//! Tiny four-stage CNN used for fast tests and smoke runs.
//!
//! Four stride-2 conv/BN/ReLU stages then global average pooling; well
//! under a million parameters, and it accepts any input size a few times
//! larger than 16x16.

use candle_core::Tensor;

use super::layers::{global_avg_pool, ConvBn};
use super::store::ParamStore;
use crate::rng::Draw;
use crate::Result;

pub(crate) const FEATURES: usize = 96;

pub(crate) struct SmallNet {
    stages: Vec<ConvBn>,
}

impl SmallNet {
    pub fn new(store: &mut ParamStore, draw: &mut Draw) -> Result<Self> {
        let widths = [3usize, 16, 32, 64, FEATURES];
        let stages = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                ConvBn::new(store, draw, &format!("stage{i}"), w[0], w[1], (3, 3), 2, (1, 1))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SmallNet { stages })
    }

    pub fn features(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        let mut x = x.clone();
        for stage in &self.stages {
            x = stage.forward(&x, train)?;
        }
        global_avg_pool(&x)
    }
}

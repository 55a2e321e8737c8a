//! Minimal tensor layers with explicit forward/backward passes.
//!
//! Feature maps are `(batch, channel, height, width)` f32 arrays, dense
//! activations `(batch, feature)`. Each layer owns its parameters and the
//! activation cache its backward pass needs; caches are only recorded in
//! train mode. Batched convolutions fan out across samples through
//! [`crate::exec`], with reductions folded over fixed chunk boundaries so
//! results do not depend on worker count.

mod conv;
mod layers;
mod optim;

pub use conv::{im2col, Conv2d, MaxPool2d};
pub use layers::{BatchNorm1d, BatchNorm2d, Dropout, GlobalAvgPool, Linear, Relu, Softmax};
pub use optim::{AdaBelief, OptimizerConfig};

use ndarray::{Array3, Array4, ArrayD};
use rand_chacha::ChaCha8Rng;

use crate::rngutil;

/// Train/eval switch: controls batch-norm statistics, dropout and caching.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Per-forward context: the mode plus the rng feeding dropout masks.
pub struct Ctx {
    pub mode: Mode,
    pub rng: ChaCha8Rng,
}

impl Ctx {
    pub fn train(seed: u64) -> Self {
        Ctx {
            mode: Mode::Train,
            rng: rngutil::seeded(seed, rngutil::stream::DROPOUT),
        }
    }

    pub fn eval() -> Self {
        Ctx {
            mode: Mode::Eval,
            rng: rngutil::seeded(0, rngutil::stream::DROPOUT),
        }
    }

    pub fn is_train(&self) -> bool {
        self.mode == Mode::Train
    }
}

/// One named tensor of a model: value plus gradient accumulator.
/// Non-trainable params (batch-norm running statistics) are carried for
/// checkpointing but skipped by the optimizer.
#[derive(Debug, Clone)]
pub struct Param {
    pub value: ArrayD<f32>,
    pub grad: ArrayD<f32>,
    pub trainable: bool,
}

impl Param {
    pub fn new(value: ArrayD<f32>) -> Self {
        let grad = ArrayD::zeros(value.raw_dim());
        Param {
            value,
            grad,
            trainable: true,
        }
    }

    pub fn buffer(value: ArrayD<f32>) -> Self {
        let grad = ArrayD::zeros(value.raw_dim());
        Param {
            value,
            grad,
            trainable: false,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

/// Callback-based named parameter traversal.
pub type ParamFn<'a> = dyn FnMut(&str, &mut Param) + 'a;

/// He (fan-in) normal initialization.
pub fn he_normal(shape: &[usize], fan_in: usize, rng: &mut ChaCha8Rng) -> ArrayD<f32> {
    let std = (2.0 / fan_in as f32).sqrt();
    ArrayD::from_shape_fn(ndarray::IxDyn(shape), |_| std * rngutil::normal(rng))
}

/// Stacks per-sample (C,H,W) maps into one (N,C,H,W) batch.
pub fn stack_samples(samples: Vec<Array3<f32>>) -> Array4<f32> {
    assert!(!samples.is_empty());
    let (c, h, w) = samples[0].dim();
    let mut out = Array4::zeros((samples.len(), c, h, w));
    for (i, s) in samples.into_iter().enumerate() {
        out.index_axis_mut(ndarray::Axis(0), i).assign(&s);
    }
    out
}

/// Converts an (H,W,C) image to a (C,H,W) feature map.
pub fn image_to_chw(img: &crate::imageops::Image) -> Array3<f32> {
    let (h, w) = crate::imageops::dims(img);
    let c = img.shape()[2];
    let mut out = Array3::zeros((c, h, w));
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                out[[ch, y, x]] = img[[y, x, ch]];
            }
        }
    }
    out
}

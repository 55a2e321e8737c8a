//! Seeded randomness helpers.
//!
//! Every stochastic component takes an explicit ChaCha stream so runs are
//! reproducible bit for bit: one master seed, one named stream per purpose,
//! per-sample streams derived from indices rather than from worker order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stream ids for the independent random streams of a run.
pub mod stream {
    pub const SHUFFLE: u64 = 1;
    pub const DROPOUT: u64 = 2;
    pub const INIT: u64 = 3;
    pub const DATA: u64 = 4;
}

/// An rng seeded by `seed` on an independent stream.
pub fn seeded(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Per-sample rng: independent of worker scheduling, unique per
/// (seed, epoch, index) triple.
pub fn per_sample(seed: u64, epoch: usize, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    rng.set_stream(stream::DATA ^ ((epoch as u64) << 32) ^ index as u64);
    rng
}

/// Standard normal draw (Box-Muller).
pub fn normal(rng: &mut ChaCha8Rng) -> f32 {
    let u1: f32 = rng.random::<f32>().max(1e-12);
    let u2: f32 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f32::consts::TAU * u2).cos()
}

/// Uniform draw in [lo, hi]; returns `lo` exactly when the interval is empty.
pub fn uniform(rng: &mut ChaCha8Rng, lo: f32, hi: f32) -> f32 {
    if hi <= lo {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

//! Seeded, stream-split random number generation.
//!
//! Every tensor draws from its own stream: the generator is ChaCha20 seeded
//! from the 64-bit master seed, and the stream id is the FNV-1a hash of a
//! textual label such as `"adapter/A"`. The same `(seed, label)` pair yields
//! the same sequence on every platform.

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

/// Master seed from which labelled streams are derived.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Rng {
    seed: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Opens the independent stream named `label`.
    pub fn stream(&self, label: &str) -> Stream {
        let mut inner = ChaCha20Rng::seed_from_u64(self.seed);
        inner.set_stream(fnv1a(label.as_bytes()));
        Stream { inner }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes
        .iter()
        .fold(OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(PRIME))
}

/// One labelled draw sequence.
#[derive(Debug, Clone)]
pub struct Stream {
    inner: ChaCha20Rng,
}

impl Stream {
    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    pub fn normal(&mut self, std: f64) -> f64 {
        std * self.standard_normal()
    }

    /// Uniform draw on `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        let u: f64 = self.inner.random();
        lo + (hi - lo) * u
    }
}

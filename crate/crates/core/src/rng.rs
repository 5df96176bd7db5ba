//! Reproducible Gaussian streams.
//!
//! Each `(seed, stream)` pair selects an independent ChaCha8 keystream
//! (the seed expands to the key, the stream id is the ChaCha nonce), so
//! replicate `i` of a Monte Carlo run can be regenerated on its own.
//! Normals come from the ziggurat sampler of `rand_distr`.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngSeed {
    pub seed: u64,
    pub stream: u64,
}

impl RngSeed {
    pub fn new(seed: u64, stream: u64) -> Self {
        RngSeed { seed, stream }
    }

    /// The stream `offset` positions after this one.
    pub fn offset(self, offset: u64) -> Self {
        RngSeed { seed: self.seed, stream: self.stream.wrapping_add(offset) }
    }
}

#[derive(Debug, Clone)]
pub struct GaussianStream {
    inner: ChaCha8Rng,
}

impl GaussianStream {
    pub fn new(seed: RngSeed) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed.seed);
        inner.set_stream(seed.stream);
        GaussianStream { inner }
    }

    /// Uniform on (0, 1].
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        ((self.inner.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    #[inline]
    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    pub fn fill_normal(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.standard_normal();
        }
    }
}

//! Seeded, counter-based randomness with per-purpose substreams.
//!
//! Every consumer of randomness (data generation, parameter init, negative
//! sampling, augmentation, request policies) draws from its own substream so
//! that changing one factor of an experiment leaves the others' draws intact.
//! The generator is ChaCha8, which is counter-based and produces the same
//! sequence on every platform.

use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// What a substream is used for. Each purpose maps to a disjoint family of
/// ChaCha stream ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stream {
    Data,
    Split,
    Init,
    Negatives,
    Shuffle,
    Augment,
    Policy,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Data => 1,
            Stream::Split => 2,
            Stream::Init => 3,
            Stream::Negatives => 4,
            Stream::Shuffle => 5,
            Stream::Augment => 6,
            Stream::Policy => 7,
        }
    }
}

/// SplitMix64 finalizer. Also used for keyed hashing of ids.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent generator for `purpose`, indexed by e.g. user id or epoch.
    /// Derived from the seed only, never from this generator's position.
    pub fn substream(&self, purpose: Stream, index: u64) -> Rng {
        let mut inner = ChaCha8Rng::seed_from_u64(self.seed);
        inner.set_stream(mix64(purpose.tag() << 56 ^ mix64(index)));
        Rng {
            seed: self.seed,
            inner,
        }
    }

    /// Uniform integer in `0..n`. Panics if `n == 0`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    /// Uniform real in `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.below(i + 1);
            xs.swap(i, j);
        }
    }
}

impl RngCore for Rng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

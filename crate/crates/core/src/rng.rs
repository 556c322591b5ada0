//! Seeded, platform-stable random stream.
//!
//! Backed by ChaCha8, whose output is specified bit-for-bit independent of
//! platform and endianness. The stream position is a 128-bit word counter so
//! the full state can be written into a checkpoint and restored exactly.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr_free::standard_normal;

#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Restores a stream at a given word position.
    pub fn from_state(seed: u64, word_pos: u128) -> Self {
        let mut s = Self::new(seed);
        s.inner.set_word_pos(word_pos);
        s
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn word_pos(&self) -> u128 {
        self.inner.get_word_pos()
    }

    /// Uniform draw in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.inner.gen::<f64>()
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn normal(&mut self) -> f64 {
        standard_normal(self)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Fisher-Yates shuffle driven by this stream.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.inner.gen_range(0..=i);
            items.swap(i, j);
        }
    }

    /// Derives an independent child stream; the parent advances by one draw.
    pub fn fork(&mut self) -> RngStream {
        RngStream::new(self.next_u64())
    }
}

mod rand_distr_free {
    use super::RngStream;

    /// Box-Muller; one uniform pair per sample keeps the draw count fixed.
    pub fn standard_normal(rng: &mut RngStream) -> f64 {
        let u1 = 1.0 - rng.uniform();
        let u2 = rng.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

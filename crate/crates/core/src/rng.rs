//! Seeded random stream with a fully documented construction.
//!
//! The generator is ChaCha20 (20 rounds, 64-bit block counter, stream 0)
//! keyed with the 32-byte key whose first eight bytes are the seed in
//! little-endian order and whose remaining bytes are zero. Each `u64` is the
//! next two 32-bit output words, low word first. From that:
//!
//! * `uniform()` is `(u64 >> 11) · 2⁻⁵³`, in `[0, 1)`;
//! * `uniform_in(a, b)` is `a + (b − a) · uniform()`;
//! * `std_normal()` is Box–Muller on two consecutive uniforms `u1, u2`:
//!   `sqrt(−2 ln(1 − u1)) · cos(2π u2)` (the sine branch is discarded);
//! * `index_below(k)` is `floor(uniform() · k)`.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

#[derive(Debug, Clone)]
pub struct SeededStream {
    inner: ChaCha20Rng,
}

impl SeededStream {
    pub fn new(seed: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        SeededStream { inner: ChaCha20Rng::from_seed(key) }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn std_normal(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        (-2.0 * (1.0 - u1).ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    pub fn index_below(&mut self, k: usize) -> usize {
        ((self.uniform() * k as f64) as usize).min(k.saturating_sub(1))
    }

    /// Fisher–Yates shuffle, `i` running from the last index down to 1.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.index_below(i + 1);
            items.swap(i, j);
        }
    }
}

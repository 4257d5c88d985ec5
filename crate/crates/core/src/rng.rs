//! Reproducible random streams.
//!
//! Every stream is ChaCha20 (RFC 7539 block function, 64-bit counter and
//! 64-bit stream id) keyed by the little-endian bytes of a `u64` seed followed
//! by 24 zero bytes. Derived quantities are defined here, not by a library,
//! so that another implementation can reproduce them from the raw words:
//!
//! * `u64` = two consecutive keystream `u32` words, low word first;
//! * uniform `[0, 1)` = `(u64 >> 11) * 2^-53`;
//! * standard normal = Box-Muller cosine branch on `(1 - uniform, uniform)`;
//! * `below(n)` = rejection of `u64` values at or above the largest multiple
//!   of `n`, then `mod n`.

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};

#[derive(Clone, Debug)]
pub struct SeededStream {
    inner: ChaCha20Rng,
}

impl SeededStream {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    /// An independent stream under the same seed.
    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        let mut inner = ChaCha20Rng::from_seed(key);
        inner.set_stream(stream);
        Self { inner }
    }

    pub fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    pub fn next_u64(&mut self) -> u64 {
        let lo = self.inner.next_u32() as u64;
        let hi = self.inner.next_u32() as u64;
        lo | (hi << 32)
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on `[lo, hi)`.
    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// Uniform integer in `0..n`. `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        let n = n as u64;
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.next_u64();
            if v < zone {
                return (v % n) as usize;
            }
        }
    }

    /// Fisher-Yates, last index first.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    /// Two distinct indices in `0..n`, `n >= 2`.
    pub fn distinct_pair(&mut self, n: usize) -> (usize, usize) {
        let a = self.below(n);
        loop {
            let b = self.below(n);
            if b != a {
                return (a, b);
            }
        }
    }

    /// Seed for a child stream, drawn from this one.
    pub fn fork_seed(&mut self) -> u64 {
        self.next_u64()
    }
}

//! Seeded random numbers with a fixed, documented recipe.
//!
//! Every random quantity in the crate goes through [`SeededRng`] so that a
//! `(seed, call sequence)` pair reproduces bit-identical output on any
//! platform. The generator is xoshiro256++ seeded by expanding the 64-bit
//! seed with SplitMix64, exactly as `rand_xoshiro` documents for
//! `seed_from_u64`. Derived distributions are defined here, not delegated,
//! so that their exact bit recipes are part of this module's contract:
//!
//! * `unit()`   = `(x >> 11) * 2^-53`, in `[0, 1)`
//! * `open01()` = `((x >> 11) + 0.5) * 2^-53`, in `(0, 1)`
//! * `symmetric()` = `2 * unit() - 1`, in `[-1, 1)`
//! * `below(n)` = Lemire's widening-multiply method with rejection

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

const INV_2_53: f64 = 1.0 / (1u64 << 53) as f64;

#[derive(Clone, Debug)]
pub struct SeededRng {
    inner: Xoshiro256PlusPlus,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: Xoshiro256PlusPlus::seed_from_u64(seed),
        }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on `[0, 1)` with 53 bits of resolution.
    #[inline]
    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * INV_2_53
    }

    /// Uniform on the open interval `(0, 1)`.
    #[inline]
    pub fn open01(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * INV_2_53
    }

    /// Uniform on `[-1, 1)`.
    #[inline]
    pub fn symmetric(&mut self) -> f64 {
        2.0 * self.unit() - 1.0
    }

    /// Uniform integer in `0..n`. Panics if `n == 0`.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0) has no valid output");
        let threshold = n.wrapping_neg() % n;
        loop {
            let wide = (self.next_u64() as u128) * (n as u128);
            if (wide as u64) >= threshold {
                return (wide >> 64) as u64;
            }
        }
    }

    /// Fisher-Yates shuffle, walking from the back.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }

    pub fn symmetric_vec(&mut self, len: usize) -> Vec<f64> {
        (0..len).map(|_| self.symmetric()).collect()
    }
}

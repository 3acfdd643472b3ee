//! Seeded random source.
//!
//! The generator is xoshiro256** with its 256-bit state expanded from the
//! 64-bit seed by splitmix64 (`rand_xoshiro`'s `seed_from_u64`). Normal
//! deviates come from `rand_distr::StandardNormal` (ziggurat). Both are
//! pure integer/IEEE arithmetic, so the same seed yields the same stream
//! on every platform.

use rand::seq::SliceRandom;
use rand::{Rng as _, RngCore, SeedableRng};
use rand_distr::StandardNormal;
use rand_xoshiro::Xoshiro256StarStar;

/// Class-order seed used by the standard class-incremental protocols.
pub const DEFAULT_SEED: u64 = 1993;

#[derive(Clone, Debug)]
pub struct Rng(Xoshiro256StarStar);

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng(Xoshiro256StarStar::seed_from_u64(seed))
    }

    /// Independent stream for a sub-task identified by `path`, e.g.
    /// `(seed, task, epoch)`. The derivation only depends on its inputs, so
    /// two runs with different optimizers see the same data order.
    pub fn derive(seed: u64, path: &[u64]) -> Self {
        let mut h = seed;
        for &p in path {
            h = splitmix64(h ^ splitmix64(p.wrapping_add(0x9E37_79B9_7F4A_7C15)));
        }
        Rng::new(h)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.0.random::<f64>()
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn normal(&mut self) -> f64 {
        self.0.sample(StandardNormal)
    }

    /// Uniform index in `[0, n)`.
    pub fn below(&mut self, n: usize) -> usize {
        self.0.random_range(0..n)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.0);
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = Rng::new(DEFAULT_SEED);
        let mut b = Rng::new(DEFAULT_SEED);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
            assert_eq!(a.normal().to_bits(), b.normal().to_bits());
        }
    }

    #[test]
    fn frozen_first_outputs() {
        // Pins the generator so that an upstream algorithm change is caught.
        let mut r = Rng::new(0);
        let first: Vec<u64> = (0..3).map(|_| r.next_u64()).collect();
        assert_eq!(first, FROZEN_SEED0);
    }

    // splitmix64-expanded xoshiro256**, seed 0; cross-checked against a
    // from-scratch reference implementation.
    const FROZEN_SEED0: [u64; 3] = [
        11091344671253066420,
        13793997310169335082,
        1900383378846508768,
    ];

    #[test]
    fn derived_streams_differ() {
        let mut a = Rng::derive(7, &[0, 1]);
        let mut b = Rng::derive(7, &[1, 0]);
        assert_ne!(a.next_u64(), b.next_u64());
        let mut c = Rng::derive(7, &[0, 1]);
        let mut d = Rng::derive(7, &[0, 1]);
        assert_eq!(c.next_u64(), d.next_u64());
    }

    #[test]
    fn uniform_range() {
        let mut r = Rng::new(3);
        for _ in 0..1000 {
            let u = r.uniform();
            assert!((0.0..1.0).contains(&u));
            assert!(r.below(7) < 7);
        }
    }
}

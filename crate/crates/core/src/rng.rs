//! Seeded random streams.
//!
//! Every stream is ChaCha8 (`rand_chacha::ChaCha8Rng`) keyed by
//! `seed_from_u64(seed)` and positioned on a 64-bit stream id, so
//! independent work items (resamples, grid cells) get independent streams
//! regardless of execution order or thread count.
//!
//! Derived values use only `next_u64`:
//! - uniform `[0, 1)`: `(u >> 11) * 2^-53`
//! - bounded index: rejection-sampled widening multiply (Lemire)
//! - standard normal: Box-Muller, cosine branch only

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Stream {
    inner: ChaCha8Rng,
}

impl Stream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Stream { inner }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..bound`. `bound` must be non-zero.
    pub fn below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "bound must be positive");
        let threshold = bound.wrapping_neg() % bound;
        loop {
            let wide = u128::from(self.next_u64()) * u128::from(bound);
            if (wide as u64) >= threshold {
                return (wide >> 64) as u64;
            }
        }
    }

    pub fn standard_normal(&mut self) -> f64 {
        // 1 - uniform() is in (0, 1], keeping ln finite
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// `k` distinct indices from `0..n` by partial Fisher-Yates, in draw order.
    pub fn sample_without_replacement(&mut self, n: usize, k: usize) -> Vec<usize> {
        let k = k.min(n);
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.below((n - i) as u64) as usize;
            pool.swap(i, j);
        }
        pool.truncate(k);
        pool
    }

    /// `k` indices from `0..n`, drawn independently.
    pub fn sample_with_replacement(&mut self, n: usize, k: usize) -> Vec<usize> {
        (0..k).map(|_| self.below(n as u64) as usize).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..4)
            .map({
                let mut s = Stream::new(7, 3);
                move |_| s.next_u64()
            })
            .collect();
        let b: Vec<u64> = (0..4)
            .map({
                let mut s = Stream::new(7, 3);
                move |_| s.next_u64()
            })
            .collect();
        let mut other = Stream::new(7, 4);
        assert_eq!(a, b);
        assert_ne!(a[0], other.next_u64());
    }

    #[test]
    fn below_stays_in_range() {
        let mut s = Stream::new(1, 0);
        for bound in [1u64, 2, 3, 7, 1000] {
            for _ in 0..200 {
                assert!(s.below(bound) < bound);
            }
        }
    }

    #[test]
    fn sampling_without_replacement_is_distinct() {
        let mut s = Stream::new(11, 0);
        let mut idx = s.sample_without_replacement(35, 28);
        assert_eq!(idx.len(), 28);
        idx.sort_unstable();
        idx.dedup();
        assert_eq!(idx.len(), 28);
        assert!(idx.iter().all(|&i| i < 35));
    }

    #[test]
    fn normal_moments() {
        let mut s = Stream::new(5, 0);
        let draws: Vec<f64> = (0..20_000).map(|_| s.standard_normal()).collect();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / draws.len() as f64;
        assert!(mean.abs() < 0.03, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }
}

//! Deterministic randomness.
//!
//! All stochastic behavior of this crate (reparameterized sampling, stochastic
//! binarization, shuffles, weight init, noise injection) flows through [`Rng`],
//! a SplitMix64 generator with Box-Muller Gaussian draws. Same seed, same
//! sequence, on every run of this implementation.

use crate::tensor::{fl, Real, Tensor};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output mix (Steele, Lea & Flood 2014).
#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive an independent stream seed from a base seed and a textual tag.
/// Used to give each consumer (shuffle, init, sampling, ...) its own stream
/// without any draw-order coupling between them.
pub fn derive_seed(base: u64, tag: &str) -> u64 {
    // FNV-1a over the tag, folded into the base through the SplitMix64 mix.
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for b in tag.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    mix(base.wrapping_add(GOLDEN_GAMMA).wrapping_add(h))
}

/// SplitMix64 stream with a cached Box-Muller spare.
#[derive(Debug, Clone)]
pub struct Rng {
    state: u64,
    spare_gaussian: Option<f64>,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng { state: seed, spare_gaussian: None }
    }

    /// Derive a child generator; advances this generator by one draw.
    pub fn fork(&mut self, tag: &str) -> Rng {
        Rng::new(derive_seed(self.next_u64(), tag))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix(self.state)
    }

    /// Uniform in [0, 1), 53-bit resolution.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [lo, hi).
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in [0, n).
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        // Multiply-shift; bias is negligible for the range sizes used here.
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// Standard normal draw via Box-Muller over two uniform draws.
    /// Pairs are generated together; the second is cached.
    pub fn next_gaussian(&mut self) -> f64 {
        if let Some(z) = self.spare_gaussian.take() {
            return z;
        }
        // u1 in (0, 1] so that ln(u1) is finite.
        let u1 = ((self.next_u64() >> 11) as f64 + 1.0) * (1.0 / (1u64 << 53) as f64);
        let u2 = self.next_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        let (s, c) = theta.sin_cos();
        self.spare_gaussian = Some(r * s);
        r * c
    }

    pub fn gaussian_vec(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.next_gaussian()).collect()
    }

    /// Tensor of standard-normal draws.
    pub fn gaussian_tensor<F: Real>(&mut self, shape: Vec<usize>) -> Tensor<F> {
        let n: usize = shape.iter().product();
        let data: Vec<F> = (0..n).map(|_| fl(self.next_gaussian())).collect();
        Tensor::new(shape, data).expect("shape/data length agree by construction")
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.below(i + 1);
            xs.swap(i, j);
        }
    }
}

/// `rng_next_gaussian` of the engine contract: `n` standard-normal draws.
pub fn rng_next_gaussian<F: Real>(rng: &mut Rng, n: usize) -> Tensor<F> {
    assert!(n >= 1, "rng_next_gaussian requires n >= 1");
    rng.gaussian_tensor(vec![n])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_sequence() {
        let mut a = Rng::new(42);
        let mut b = Rng::new(42);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        let ga: Vec<f64> = Rng::new(7).gaussian_vec(50);
        let gb: Vec<f64> = Rng::new(7).gaussian_vec(50);
        assert_eq!(ga, gb);
    }

    #[test]
    fn different_seeds_differ() {
        let mut a = Rng::new(1);
        let mut b = Rng::new(2);
        assert_ne!(a.next_u64(), b.next_u64());
        assert_ne!(Rng::new(1).next_gaussian(), Rng::new(2).next_gaussian());
    }

    #[test]
    fn gaussian_moments() {
        let mut rng = Rng::new(123);
        let n = 1_000_000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            let z = rng.next_gaussian();
            sum += z;
            sum_sq += z * z;
        }
        let mean = sum / n as f64;
        let var = sum_sq / n as f64 - mean * mean;
        assert!(mean.abs() < 0.01, "sample mean {mean}");
        assert!((var - 1.0).abs() < 0.02, "sample variance {var}");
    }

    #[test]
    fn shuffle_is_permutation() {
        let mut rng = Rng::new(5);
        let mut xs: Vec<usize> = (0..97).collect();
        rng.shuffle(&mut xs);
        let mut sorted = xs.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..97).collect::<Vec<_>>());
    }

    #[test]
    fn derive_seed_separates_tags() {
        assert_ne!(derive_seed(0, "shuffle"), derive_seed(0, "init"));
        assert_eq!(derive_seed(9, "x"), derive_seed(9, "x"));
    }
}

//! Streaming mean and variance (Welford updates).
//!
//! The running mean adds (x - m)/n per value, so a constant sequence keeps
//! the constant bit-for-bit; reductions that must be exact on degenerate
//! inputs (e.g. identical per-example losses) rely on this.

#[derive(Debug, Clone, Copy, Default)]
pub struct RunningMean {
    n: u64,
    mean: f64,
}

impl RunningMean {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        self.mean += (x - self.mean) / self.n as f64;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    /// Mean of the values seen so far; 0 before any push.
    pub fn mean(&self) -> f64 {
        self.mean
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunningMeanVar {
    n: u64,
    mean: f64,
    m2: f64,
}

impl RunningMeanVar {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; 0 with fewer than two values.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    /// Standard error of the mean: sqrt(variance / n).
    pub fn std_error(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn constant_sequence_mean_is_bit_exact() {
        let x = 10.0f64.ln();
        let mut m = RunningMean::new();
        for _ in 0..10_000 {
            m.push(x);
        }
        assert_eq!(m.mean(), x);
    }

    #[test]
    fn matches_two_pass_mean_and_variance() {
        let mut rng = Rng::new(7);
        let xs: Vec<f64> = (0..500).map(|_| rng.next_gaussian() * 3.0 + 1.0).collect();
        let mut rv = RunningMeanVar::new();
        for &x in &xs {
            rv.push(x);
        }
        let mean: f64 = xs.iter().sum::<f64>() / xs.len() as f64;
        let var: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        assert!((rv.mean() - mean).abs() < 1e-12);
        assert!((rv.variance() - var).abs() < 1e-10);
        assert!((rv.std_error() - (var / 500.0).sqrt()).abs() < 1e-12);
    }
}

//! Small statistics helpers shared by the Monte Carlo routines.

/// Neumaier compensated summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl Estimate {
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                stderr: f64::NAN,
                n,
            };
        }
        let mut acc = CompensatedSum::new();
        samples.iter().for_each(|&x| acc.add(x));
        let mean = acc.value() / n as f64;
        if n < 2 {
            return Self {
                mean,
                stderr: f64::NAN,
                n,
            };
        }
        let mut sq = CompensatedSum::new();
        samples
            .iter()
            .for_each(|&x| sq.add((x - mean) * (x - mean)));
        let var = sq.value() / (n - 1) as f64;
        Self {
            mean,
            stderr: (var / n as f64).sqrt(),
            n,
        }
    }

    /// `|mean - target| <= k * stderr`, treating a zero stderr as exact.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.stderr + 1e-12 * target.abs().max(1.0)
    }
}

/// One-sided lower confidence bound for a binomial proportion (Wilson score).
pub fn wilson_lower_bound(successes: usize, trials: usize, z: f64) -> f64 {
    if trials == 0 {
        return 0.0;
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let centre = p + z2 / (2.0 * n);
    let spread = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((centre - spread) / (1.0 + z2 / n)).max(0.0)
}

/// z-quantile used for one-sided 99% bounds.
pub const Z_99_ONE_SIDED: f64 = 2.326_347_874_040_841;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut s = CompensatedSum::new();
        s.add(1e16);
        for _ in 0..10 {
            s.add(1.0);
        }
        s.add(-1e16);
        assert_eq!(s.value(), 10.0);
    }

    #[test]
    fn estimate_of_constant_has_zero_stderr() {
        let e = Estimate::from_samples(&[2.5; 10]);
        assert_eq!(e.mean, 2.5);
        assert_eq!(e.stderr, 0.0);
        assert!(e.within(2.5, 3.0));
    }

    #[test]
    fn wilson_bound_is_zero_without_successes() {
        assert_eq!(wilson_lower_bound(0, 100, Z_99_ONE_SIDED), 0.0);
        let lb = wilson_lower_bound(50, 100, Z_99_ONE_SIDED);
        assert!(lb > 0.37 && lb < 0.5, "{lb}");
    }
}

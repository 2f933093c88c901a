//! Binomial interval estimates.

/// Two-sided standard normal quantile for 99% coverage.
pub const Z_99: f64 = 2.5758293035489;

/// Wilson score interval for `successes` out of `n` at normal quantile `z`.
/// Returns `(0, 1)` when `n` is zero.
pub fn wilson_interval(successes: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Whether `p` lies inside the 99% Wilson interval of the observed count.
pub fn within_ci99(successes: usize, n: usize, p: f64) -> bool {
    let (lo, hi) = wilson_interval(successes, n, Z_99);
    (lo..=hi).contains(&p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn contains_estimate_and_clamps() {
        for (k, n) in [(0, 10), (10, 10), (5, 10), (4000, 5000), (1, 1)] {
            let (lo, hi) = wilson_interval(k, n, Z_99);
            let p = k as f64 / n as f64;
            assert!(lo <= p && p <= hi && lo >= 0.0 && hi <= 1.0, "{k}/{n}");
        }
        assert_eq!(wilson_interval(0, 0, Z_99), (0.0, 1.0));
    }

    #[test]
    fn known_value() {
        // 50/100 at z=1.96: centre 0.5, half-width 1.96*sqrt(0.0025+0.000096)/1.038416.
        let (lo, hi) = wilson_interval(50, 100, 1.96);
        let half = 1.96 * (0.25f64 / 100.0 + 1.96f64.powi(2) / 40000.0).sqrt() / (1.0 + 1.96f64.powi(2) / 100.0);
        assert!((lo - (0.5 - half)).abs() < 1e-12 && (hi - (0.5 + half)).abs() < 1e-12);
    }
}

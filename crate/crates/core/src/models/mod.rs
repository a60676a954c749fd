//! Benchmark problems with their reference policies and closed-form checks.

pub mod growth;
pub mod network;
pub mod rbc;
pub mod single;

use statrs::function::gamma::{gamma_ur, ln_gamma};

/// `1 / (1 + e^c)`, evaluated without overflow for large `|c|`.
#[inline]
pub fn logistic_fraction(c: f64) -> f64 {
    if c >= 0.0 {
        let e = (-c).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + c.exp())
    }
}

/// `log(1 + e^c)` without overflow.
#[inline]
pub fn softplus(c: f64) -> f64 {
    if c > 0.0 {
        c + (-c).exp().ln_1p()
    } else {
        c.exp().ln_1p()
    }
}

const CHOP_DOWN_LIMIT: f64 = 12.0;

/// Smallest `k` with `P(X <= k) >= u` for `X ~ Poisson(mu)`.
///
/// Monotone in both `u` and `mu`, so common uniforms couple Poisson counts at
/// nearby intensities.
pub fn poisson_inverse(mu: f64, u: f64) -> u64 {
    if mu <= 0.0 || !mu.is_finite() {
        return 0;
    }
    if mu < CHOP_DOWN_LIMIT {
        let mut k = 0u64;
        let mut p = (-mu).exp();
        let mut cdf = p;
        while cdf < u {
            k += 1;
            p *= mu / k as f64;
            if p == 0.0 {
                break;
            }
            cdf += p;
        }
        return k;
    }
    // start at the mode and walk
    let mut k = mu.floor();
    let mut p = (k * mu.ln() - mu - ln_gamma(k + 1.0)).exp();
    let mut cdf = gamma_ur(k + 1.0, mu);
    if cdf < u {
        loop {
            k += 1.0;
            p *= mu / k;
            cdf += p;
            if cdf >= u || p == 0.0 {
                break;
            }
        }
    } else {
        while k > 0.0 && cdf - p >= u {
            cdf -= p;
            p *= k / mu;
            k -= 1.0;
        }
    }
    k as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{DiscreteCDF, Poisson};

    #[test]
    fn logistic_limits() {
        assert_eq!(logistic_fraction(0.0), 0.5);
        assert!(logistic_fraction(800.0) >= 0.0 && logistic_fraction(800.0) < 1e-300);
        assert_eq!(logistic_fraction(-800.0), 1.0);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(softplus(800.0), 800.0);
    }

    #[test]
    fn inversion_brackets_the_quantile() {
        for &mu in &[0.3, 2.0, 5.0, 11.9, 12.0, 37.5, 55.0, 166.0, 600.0] {
            let d = Poisson::new(mu).unwrap();
            for i in 1..200 {
                let u = i as f64 / 200.0;
                let k = poisson_inverse(mu, u);
                assert!(d.cdf(k) >= u - 1e-12, "mu {mu} u {u} k {k}");
                if k > 0 {
                    assert!(d.cdf(k - 1) < u + 1e-12, "mu {mu} u {u} k {k}");
                }
            }
        }
    }

    #[test]
    fn inversion_is_monotone_in_mean() {
        for i in 1..50 {
            let u = i as f64 / 50.0;
            let mut last = 0;
            for j in 0..400 {
                let k = poisson_inverse(j as f64 * 0.25, u);
                assert!(k >= last);
                last = k;
            }
        }
    }

    #[test]
    fn zero_mean_gives_zero() {
        assert_eq!(poisson_inverse(0.0, 0.999), 0);
    }
}

use emc_bench::summarize;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal, StandardNormal};

proptest! {
    #[test]
    fn quantiles_ordered_and_stderr_nonnegative(v in prop::collection::vec(-1e6..1e6f64, 2..300)) {
        let s = summarize(&v).unwrap();
        prop_assert!(s.stderr >= 0.0);
        prop_assert!(s.quantiles.windows(2).all(|w| w[0] <= w[1]));
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(lo <= s.quantiles[0] && s.quantiles[3] <= hi);
        prop_assert!(s.mean >= lo - 1e-9 * lo.abs() && s.mean <= hi + 1e-9 * hi.abs());
    }

    #[test]
    fn unimodal_quantiles_bracket_the_mean(seed: u64, mu in -100.0..100.0f64, sd in 0.01..50.0f64, n in 100usize..2000) {
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        let d = Normal::new(mu, sd).unwrap();
        let v: Vec<f64> = (0..n).map(|_| d.sample(&mut rng)).collect();
        let s = summarize(&v).unwrap();
        prop_assert!(s.quantiles[0] <= s.mean && s.mean <= s.quantiles[3]);
    }

    #[test]
    fn shift_and_scale(v in prop::collection::vec(-100.0..100.0f64, 5..100), shift in -1e3..1e3f64, scale in 0.1..10.0f64) {
        let base = summarize(&v).unwrap();
        prop_assume!(!base.degenerate);
        let w: Vec<f64> = v.iter().map(|x| x * scale + shift).collect();
        let s = summarize(&w).unwrap();
        prop_assert!((s.mean - (base.mean * scale + shift)).abs() < 1e-9 * (1.0 + s.mean.abs()));
        prop_assert!((s.stderr - base.stderr * scale).abs() < 1e-9 * (1.0 + s.stderr));
        prop_assert!((s.skewness - base.skewness).abs() < 1e-6);
        prop_assert!((s.kurtosis - base.kurtosis).abs() < 1e-6);
    }
}

#[test]
fn large_normal_sample_moments() {
    let mut rng = rand::rngs::StdRng::seed_from_u64(12);
    let v: Vec<f64> = (0..1_000_000).map(|_| StandardNormal.sample(&mut rng)).collect();
    let s = summarize(&v).unwrap();
    assert!(s.skewness.abs() < 0.01, "{}", s.skewness);
    assert!((s.kurtosis - 3.0).abs() < 0.03, "{}", s.kurtosis);
    // nearest-rank 1% quantile of N(0,1) is close to -2.326
    assert!((s.quantiles[0] + 2.326).abs() < 0.02);
}

//! Distribution summaries of simulated revenues and utilities.

use emc_core::{exec, EmcError, Result};

/// Quantile levels reported in every summary.
pub const QUANTILE_LEVELS: [f64; 4] = [0.01, 0.05, 0.95, 0.99];

#[derive(Debug, Clone, PartialEq)]
pub struct StatsSummary {
    pub n: usize,
    pub mean: f64,
    /// Unbiased sample standard deviation over `sqrt(n)`.
    pub stderr: f64,
    pub skewness: f64,
    /// Raw (non-excess) kurtosis; 3 for normal data.
    pub kurtosis: f64,
    /// At [`QUANTILE_LEVELS`].
    pub quantiles: [f64; 4],
    /// Zero spread: skewness and kurtosis are undefined and reported as 0.
    pub degenerate: bool,
}

/// Nearest-rank quantile of sorted data: the `ceil(p n)`-th smallest value.
pub fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let rank = ((p * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

pub fn summarize(samples: &[f64]) -> Result<StatsSummary> {
    let n = samples.len();
    if n < 2 {
        return Err(EmcError::InvalidArgument(format!("need at least 2 samples, got {n}")));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(EmcError::InvalidArgument("samples must be finite".into()));
    }
    let (mean, stderr) = exec::mean_stderr(samples);
    let nf = n as f64;
    let central = |p: i32| exec::stable_sum(&samples.iter().map(|v| (v - mean).powi(p)).collect::<Vec<_>>()) / nf;
    let m2 = central(2);
    let degenerate = !(m2 > 0.0) || m2.sqrt() <= 1e-14 * mean.abs();
    let (skewness, kurtosis) = if degenerate {
        (0.0, 0.0)
    } else {
        (central(3) / m2.powf(1.5), central(4) / (m2 * m2))
    };
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let quantiles = QUANTILE_LEVELS.map(|p| nearest_rank(&sorted, p));
    Ok(StatsSummary {
        n,
        mean,
        stderr: if degenerate { 0.0 } else { stderr },
        skewness,
        kurtosis,
        quantiles,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_sample_is_degenerate() {
        let s = summarize(&[1.0; 4]).unwrap();
        assert_eq!(s.mean, 1.0);
        assert_eq!(s.stderr, 0.0);
        assert_eq!(s.quantiles, [1.0; 4]);
        assert!(s.degenerate);
        assert_eq!((s.skewness, s.kurtosis), (0.0, 0.0));
    }

    #[test]
    fn too_few_samples() {
        assert!(summarize(&[3.0]).is_err());
        assert!(summarize(&[]).is_err());
        assert!(summarize(&[1.0, f64::NAN]).is_err());
    }

    #[test]
    fn hand_moments() {
        // 1, 2, 3, 10: mean 4, central moments by hand
        let s = summarize(&[1.0, 2.0, 3.0, 10.0]).unwrap();
        let m2: f64 = (9.0 + 4.0 + 1.0 + 36.0) / 4.0;
        let m3: f64 = (-27.0 - 8.0 - 1.0 + 216.0) / 4.0;
        let m4: f64 = (81.0 + 16.0 + 1.0 + 1296.0) / 4.0;
        assert_eq!(s.mean, 4.0);
        assert!((s.stderr - (50.0f64 / 3.0).sqrt() / 2.0).abs() < 1e-12);
        assert!((s.skewness - m3 / m2.powf(1.5)).abs() < 1e-12);
        assert!((s.kurtosis - m4 / (m2 * m2)).abs() < 1e-12);
        assert_eq!(s.quantiles, [1.0, 1.0, 10.0, 10.0]);
    }

    #[test]
    fn nearest_rank_positions() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(nearest_rank(&v, 0.01), 1.0);
        assert_eq!(nearest_rank(&v, 0.05), 5.0);
        assert_eq!(nearest_rank(&v, 0.95), 95.0);
        assert_eq!(nearest_rank(&v, 0.99), 99.0);
        assert_eq!(nearest_rank(&v, 0.999), 100.0);
    }
}

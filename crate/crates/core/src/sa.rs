//! Kiefer–Wolfowitz stochastic approximation with scaled step sizes.
//!
//! Iteration `k` moves every coordinate from the same base point:
//!
//! ```text
//! y_i <- y_i + a_i^k * (f(y + b_i^k e_i) - f(y - b_i^k e_i)) / b_i^k
//! a^k = a0 * k^-ea,  b^k = b0 * k^-eb   (ea = 1, eb = 1/4 by default)
//! ```
//!
//! All `2m` evaluations of one iteration are made under the same random
//! numbers, so additive noise cancels exactly in each difference.

use crate::error::{invalid, EmcError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SaConfig {
    pub a0: Vec<f64>,
    pub b0: Vec<f64>,
    pub max_iters: usize,
    pub step_exponent_a: f64,
    pub step_exponent_b: f64,
}

impl SaConfig {
    pub fn new(a0: Vec<f64>, b0: Vec<f64>, max_iters: usize) -> Result<Self> {
        let cfg = SaConfig {
            a0,
            b0,
            max_iters,
            step_exponent_a: 1.0,
            step_exponent_b: 0.25,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `a0 = b0 = max(|y0_i|, 1)` per coordinate.
    pub fn scaled_to(y0: &[f64], max_iters: usize) -> Result<Self> {
        let s: Vec<f64> = y0.iter().map(|v| v.abs().max(1.0)).collect();
        Self::new(s.clone(), s, max_iters)
    }

    pub fn with_exponents(mut self, a: f64, b: f64) -> Result<Self> {
        self.step_exponent_a = a;
        self.step_exponent_b = b;
        self.validate()?;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.a0.len()
    }

    fn validate(&self) -> Result<()> {
        if self.a0.len() != self.b0.len() || self.a0.is_empty() {
            return invalid("a0 and b0 must be non-empty and of equal length");
        }
        if !self.a0.iter().chain(&self.b0).all(|v| v.is_finite() && *v > 0.0) {
            return invalid("a0 and b0 must be finite and strictly positive");
        }
        if self.max_iters < 1 {
            return invalid("max_iters must be at least 1");
        }
        if !(self.step_exponent_a.is_finite() && self.step_exponent_b.is_finite()) {
            return invalid("step exponents must be finite");
        }
        Ok(())
    }
}

/// A noisy objective. Calls sharing `sa_iteration` share random numbers.
pub trait StochasticOracle: Sync {
    fn evaluate(&self, y: &[f64], sa_iteration: u32) -> Result<f64>;
}

impl<F> StochasticOracle for F
where
    F: Fn(&[f64], u32) -> Result<f64> + Sync,
{
    fn evaluate(&self, y: &[f64], sa_iteration: u32) -> Result<f64> {
        self(y, sa_iteration)
    }
}

/// `(a^k, b^k)` for `k >= 1`.
pub fn step_sizes(config: &SaConfig, k: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if k == 0 {
        return invalid("sa iterations are numbered from 1");
    }
    let kf = k as f64;
    let fa = kf.powf(-config.step_exponent_a);
    let fb = kf.powf(-config.step_exponent_b);
    Ok((
        config.a0.iter().map(|a| a * fa).collect(),
        config.b0.iter().map(|b| b * fb).collect(),
    ))
}

fn checked(oracle: &dyn StochasticOracle, y: &[f64], k: usize) -> Result<f64> {
    let v = oracle.evaluate(y, k as u32)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(EmcError::NonFiniteObjective {
            iteration: k as u32,
            point: y.to_vec(),
            value: v,
        })
    }
}

/// One update from `y` at iteration `k`; also returns the average of the
/// `2m` evaluations as a cheap estimate of `f(y)`.
fn update_with_level(y: &[f64], k: usize, oracle: &dyn StochasticOracle, config: &SaConfig) -> Result<(Vec<f64>, f64)> {
    if y.len() != config.dim() {
        return invalid(format!("point has dimension {}, config has {}", y.len(), config.dim()));
    }
    if !y.iter().all(|v| v.is_finite()) {
        return invalid(format!("non-finite sa iterate {y:?}"));
    }
    let (a, b) = step_sizes(config, k)?;
    let mut next = y.to_vec();
    let mut probe = y.to_vec();
    let mut level = 0.0;
    for i in 0..y.len() {
        probe[i] = y[i] + b[i];
        let plus = checked(oracle, &probe, k)?;
        probe[i] = y[i] - b[i];
        let minus = checked(oracle, &probe, k)?;
        probe[i] = y[i];
        next[i] = y[i] + a[i] * (plus - minus) / b[i];
        level += plus + minus;
    }
    Ok((next, level / (2 * y.len()) as f64))
}

/// One Kiefer–Wolfowitz step from `y` at iteration `k >= 1`.
pub fn sa_update(y: &[f64], k: usize, oracle: &dyn StochasticOracle, config: &SaConfig) -> Result<Vec<f64>> {
    update_with_level(y, k, oracle, config).map(|(next, _)| next)
}

/// One entry of the optimizer trace: iterate `y^k` and the mean of the
/// perturbed evaluations around it.
#[derive(Debug, Clone, PartialEq)]
pub struct SaStep {
    pub k: usize,
    pub y: Vec<f64>,
    pub value: f64,
}

/// Runs exactly `config.max_iters` updates from `y0`.
pub fn sa_maximize(y0: &[f64], oracle: &dyn StochasticOracle, config: &SaConfig) -> Result<(Vec<f64>, Vec<SaStep>)> {
    let mut y = y0.to_vec();
    let mut trace = Vec::with_capacity(config.max_iters);
    for k in 1..=config.max_iters {
        let (next, value) = update_with_level(&y, k, oracle, config)?;
        trace.push(SaStep { k, y, value });
        y = next;
    }
    Ok((y, trace))
}

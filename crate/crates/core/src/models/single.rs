//! Single-product monopoly pricing over `n_T` equal periods.
//!
//! The control sets the arrival intensity `lambda = a / (1 + e^c)`, which
//! fixes the price `p = -log(lambda / a) / alpha`. Arrivals in a period are
//! Poisson with mean `lambda T / n_T`; sales are capped by the residual
//! capacity `R`, the single state variable.

use super::{logistic_fraction, poisson_inverse, softplus};
use crate::error::{invalid, EmcError, Result};
use crate::problem::{ControlProblem, Policy};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinglePricingParams {
    pub a: f64,
    pub alpha: f64,
    /// Length of the selling season.
    pub season: f64,
    pub n_periods: usize,
    pub capacity: u32,
}

impl Default for SinglePricingParams {
    fn default() -> Self {
        SinglePricingParams {
            a: 20.0,
            alpha: 1.0,
            season: 1.0,
            n_periods: 4,
            capacity: 20,
        }
    }
}

impl SinglePricingParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.a.is_finite()) {
            return invalid("demand scale a must be positive");
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return invalid("price elasticity alpha must be positive");
        }
        if !(self.season > 0.0 && self.season.is_finite()) {
            return invalid("season length must be positive");
        }
        if self.n_periods < 1 {
            return invalid("at least one pricing period is required");
        }
        Ok(())
    }

    pub fn period_length(&self) -> f64 {
        self.season / self.n_periods as f64
    }

    /// Time to go at the start of period `t`.
    pub fn time_to_go(&self, t: usize) -> f64 {
        self.season * (self.n_periods - t) as f64 / self.n_periods as f64
    }
}

/// Residual-capacity basis `{1, R/n, (R/n)^2}` with `n = max(n_c, 1)`.
pub const SINGLE_BASIS_DIM: usize = 3;

pub fn build_single_pricing(params: &SinglePricingParams) -> Result<ControlProblem> {
    params.validate()?;
    let SinglePricingParams { a, alpha, .. } = *params;
    let dt = params.period_length();
    let scale = params.capacity.max(1) as f64;
    ControlProblem::builder("pricing-single")
        .horizon(params.n_periods)
        .dims(1, 1, 1)
        .initial_state(vec![params.capacity as f64])
        .shocks(|_, draws, z| z[0] = draws.uniform())
        .evolve(move |_, s, c, z, next| {
            let lambda = a * logistic_fraction(c[0]);
            let arrivals = poisson_inverse(lambda * dt, z[0]) as f64;
            next[0] = s[0] - arrivals.min(s[0]);
        })
        .period_utility(move |_, next, s, c| {
            let sold = s[0] - next[0];
            if sold > 0.0 {
                softplus(c[0]) / alpha * sold
            } else {
                0.0
            }
        })
        .basis(SINGLE_BASIS_DIM, move |_, s, out| {
            let r = s[0] / scale;
            out[0] = 1.0;
            out[1] = r;
            out[2] = r * r;
        })
        .build()
}

/// `log sum_{k=0}^{n} (a tau / e)^k / k!`, the optimal continuous-time revenue
/// with `n` seats and `tau` time to go (unit elasticity).
pub fn gvr_value(n: u32, tau: f64, a: f64) -> Result<f64> {
    if !(tau >= 0.0 && tau.is_finite() && a > 0.0 && a.is_finite()) {
        return invalid("time to go must be non-negative and a positive");
    }
    let x = a * tau / std::f64::consts::E;
    if n == 0 || x == 0.0 {
        return Ok(0.0);
    }
    let lx = x.ln();
    let mut log_terms = Vec::with_capacity(n as usize + 1);
    let mut log_fact = 0.0;
    for k in 0..=n {
        if k > 0 {
            log_fact += (k as f64).ln();
        }
        log_terms.push(k as f64 * lx - log_fact);
    }
    let top = log_terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = log_terms.iter().map(|l| (l - top).exp()).sum();
    Ok(top + sum.ln())
}

/// [`gvr_value`] for a general elasticity: defined for `alpha = 1` only.
pub fn gvr_value_alpha(n: u32, tau: f64, a: f64, alpha: f64) -> Result<f64> {
    if alpha != 1.0 {
        return Err(EmcError::Unsupported(format!(
            "closed-form value needs unit elasticity, got alpha = {alpha}"
        )));
    }
    gvr_value(n, tau, a)
}

/// Marginal-value price `V(R, tau) - V(R-1, tau) + 1`; `None` when `R = 0`
/// (nothing left to sell).
pub fn plugin_price(r: u32, tau: f64, a: f64) -> Result<Option<f64>> {
    if r == 0 {
        return Ok(None);
    }
    Ok(Some(gvr_value(r, tau, a)? - gvr_value(r - 1, tau, a)? + 1.0))
}

/// Control value that closes sales (intensity `a / (1 + e^40)`).
const CLOSED_CONTROL: f64 = 40.0;

/// The continuous-time optimal price rule applied period by period.
#[derive(Debug, Clone)]
pub struct PluginPolicy {
    params: SinglePricingParams,
}

impl PluginPolicy {
    pub fn new(params: &SinglePricingParams) -> Result<Self> {
        params.validate()?;
        if params.alpha != 1.0 {
            return Err(EmcError::Unsupported("plug-in policy needs unit elasticity".into()));
        }
        Ok(PluginPolicy { params: *params })
    }

    /// Price quoted at period `t` with residual capacity `r`.
    pub fn price(&self, t: usize, r: u32) -> Option<f64> {
        plugin_price(r, self.params.time_to_go(t), self.params.a).ok().flatten()
    }
}

impl Policy for PluginPolicy {
    fn control(&self, t: usize, state: &[f64], out: &mut [f64]) {
        let r = state[0].max(0.0).round() as u32;
        out[0] = match self.price(t, r) {
            // lambda = a e^{-p}  <=>  e^c = e^p - 1
            Some(p) => p.exp_m1().ln(),
            None => CLOSED_CONTROL,
        };
    }
}

/// Price implied by control `c`.
pub fn price_of_control(c: f64, alpha: f64) -> f64 {
    softplus(c) / alpha
}

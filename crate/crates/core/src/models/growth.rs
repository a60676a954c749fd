//! Stochastic growth: consume a logistic fraction of capital each period,
//! the rest grows by a lognormal factor, and whatever is left at `T` is
//! consumed.
//!
//! ```text
//! g_t     = s_t / (1 + e^{c_t})
//! s_{t+1} = (s_t - g_t) exp(a + b z_{t+1})
//! U       = E[ sum_t log g_t + log s_T ]
//! ```

use rand_distr::{Distribution, StandardNormal};

use super::logistic_fraction;
use crate::error::{invalid, EmcError, Result};
use crate::problem::{ControlProblem, PolicyParameters};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthParams {
    pub a: f64,
    pub b: f64,
    pub horizon: usize,
    pub s0: f64,
}

impl Default for GrowthParams {
    fn default() -> Self {
        GrowthParams {
            a: -0.1,
            b: 0.2,
            horizon: 3,
            s0: 1.0,
        }
    }
}

/// Basis for `c_t`: `{s}` or `{1, s}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GrowthBasis {
    Linear,
    Affine,
}

impl GrowthBasis {
    pub fn dim(self) -> usize {
        match self {
            GrowthBasis::Linear => 1,
            GrowthBasis::Affine => 2,
        }
    }
}

impl GrowthParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.b > 0.0 && self.b.is_finite()) {
            return invalid("growth volatility b must be positive");
        }
        if !(self.s0 > 0.0 && self.s0.is_finite()) {
            return invalid("growth initial capital s0 must be positive");
        }
        if !self.a.is_finite() {
            return invalid("growth drift a must be finite");
        }
        if self.horizon < 1 {
            return invalid("growth horizon must be at least 1");
        }
        Ok(())
    }
}

pub fn build_growth(params: &GrowthParams, basis: GrowthBasis) -> Result<ControlProblem> {
    params.validate()?;
    build_growth_unchecked(params, basis)
}

/// Allows `b = 0` (deterministic dynamics); used by the closed-form checks.
pub fn build_growth_unchecked(params: &GrowthParams, basis: GrowthBasis) -> Result<ControlProblem> {
    let GrowthParams { a, b, horizon, s0 } = *params;
    let last = horizon - 1;
    let builder = ControlProblem::builder("growth")
        .horizon(horizon)
        .dims(1, 1, 1)
        .initial_state(vec![s0])
        .shocks(|_, draws, z| z[0] = StandardNormal.sample(draws))
        .evolve(move |_, s, c, z, next| {
            let kept = s[0] * (1.0 - logistic_fraction(c[0]));
            next[0] = kept * (a + b * z[0]).exp();
        })
        .period_utility(move |t, next, s, c| {
            let consumed = (s[0] * logistic_fraction(c[0])).ln();
            if t == last {
                consumed + next[0].ln()
            } else {
                consumed
            }
        });
    match basis {
        GrowthBasis::Linear => builder.basis(1, |_, s, out| out[0] = s[0]),
        GrowthBasis::Affine => builder.basis(2, |_, s, out| {
            out[0] = 1.0;
            out[1] = s[0];
        }),
    }
    .build()
}

/// Optimal controls `c_t* = log(3 - t)` and value `V_0 = 6a - 4 log 4 + 4 log s0`
/// of the three-period problem.
pub fn growth_analytic(params: &GrowthParams) -> Result<(Vec<f64>, f64)> {
    if params.horizon != 3 {
        return Err(EmcError::Unsupported(format!(
            "closed form exists for horizon 3 only, got {}",
            params.horizon
        )));
    }
    let controls = (0..3).map(|t| ((3 - t) as f64).ln()).collect();
    let v0 = 6.0 * params.a - 4.0 * 4f64.ln() + 4.0 * params.s0.ln();
    Ok((controls, v0))
}

/// The analytic optimum expressed in `basis`; `None` for the one-function
/// basis, whose span does not contain constant controls.
pub fn growth_optimal_params(params: &GrowthParams, basis: GrowthBasis) -> Result<Option<PolicyParameters>> {
    let (controls, _) = growth_analytic(params)?;
    Ok(match basis {
        GrowthBasis::Linear => None,
        GrowthBasis::Affine => Some(PolicyParameters::new(
            vec![controls[0]],
            controls[1..].iter().map(|c| vec![*c, 0.0]).collect(),
        )),
    })
}

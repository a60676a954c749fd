//! Finite-horizon control problems and their policy parameterization.
//!
//! A problem runs for `T` decision periods `t = 0..T`. At period `t` the
//! controller sees state `s_t`, applies control `c_t`, a shock `z_{t+1}` is
//! drawn and the state moves to `s_{t+1} = evolve(t, s_t, c_t, z_{t+1})`.
//! Period 0 uses the free control vector `c0`; later periods use
//! `c_t = policy(t, s_t, theta_t)`, by default the basis expansion
//! `sum_i theta_{t,i} phi_{t,i}(s_t)`.

use std::fmt;
use std::sync::Arc;

use crate::crn::Draws;
use crate::error::{invalid, EmcError, Result};

pub type EvolveFn = dyn Fn(usize, &[f64], &[f64], &[f64], &mut [f64]) + Send + Sync;
pub type ShockFn = dyn Fn(usize, &mut Draws, &mut [f64]) + Send + Sync;
pub type PeriodUtilityFn = dyn Fn(usize, &[f64], &[f64], &[f64]) -> f64 + Send + Sync;
pub type GeneralUtilityFn = dyn Fn(&PathView<'_>) -> f64 + Send + Sync;
/// Writes the `d x n_c` basis values, `out[i * n_c + r] = phi_{t,i}(state)_r`.
pub type BasisFn = dyn Fn(usize, &[f64], &mut [f64]) + Send + Sync;
pub type CustomPolicyFn = dyn Fn(usize, &[f64], &[f64], &mut [f64]) + Send + Sync;

/// The objective: a sum of per-period utilities `u_{t+1}(s_{t+1}, s_t, c_t)`
/// or a single utility of the whole path.
#[derive(Clone)]
pub enum Objective {
    Separable(Arc<PeriodUtilityFn>),
    General(Arc<GeneralUtilityFn>),
}

#[derive(Clone)]
pub enum PolicyMap {
    Basis(Arc<BasisFn>),
    Custom(Arc<CustomPolicyFn>),
}

/// Read-only view of one full path `s_0, c_0, ..., c_{T-1}, s_T`.
#[derive(Debug, Clone, Copy)]
pub struct PathView<'a> {
    pub states: &'a [f64],
    pub controls: &'a [f64],
    pub state_dim: usize,
    pub control_dim: usize,
}

impl<'a> PathView<'a> {
    pub fn horizon(&self) -> usize {
        self.controls.len() / self.control_dim
    }

    pub fn state(&self, t: usize) -> &'a [f64] {
        &self.states[t * self.state_dim..(t + 1) * self.state_dim]
    }

    pub fn control(&self, t: usize) -> &'a [f64] {
        &self.controls[t * self.control_dim..(t + 1) * self.control_dim]
    }
}

#[derive(Clone)]
pub struct ControlProblem {
    name: String,
    horizon: usize,
    state_dim: usize,
    control_dim: usize,
    shock_dim: usize,
    param_dim: usize,
    initial_state: Vec<f64>,
    evolve: Arc<EvolveFn>,
    shock_sampler: Arc<ShockFn>,
    objective: Objective,
    policy_map: PolicyMap,
}

impl fmt::Debug for ControlProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ControlProblem")
            .field("name", &self.name)
            .field("horizon", &self.horizon)
            .field("state_dim", &self.state_dim)
            .field("control_dim", &self.control_dim)
            .field("shock_dim", &self.shock_dim)
            .field("param_dim", &self.param_dim)
            .field("initial_state", &self.initial_state)
            .field("general_utility", &self.is_general())
            .finish()
    }
}

impl ControlProblem {
    pub fn builder(name: impl Into<String>) -> ControlProblemBuilder {
        ControlProblemBuilder {
            name: name.into(),
            ..Default::default()
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn horizon(&self) -> usize {
        self.horizon
    }
    pub fn state_dim(&self) -> usize {
        self.state_dim
    }
    pub fn control_dim(&self) -> usize {
        self.control_dim
    }
    pub fn shock_dim(&self) -> usize {
        self.shock_dim
    }
    pub fn param_dim(&self) -> usize {
        self.param_dim
    }
    pub fn initial_state(&self) -> &[f64] {
        &self.initial_state
    }
    pub fn objective(&self) -> &Objective {
        &self.objective
    }
    pub fn is_general(&self) -> bool {
        matches!(self.objective, Objective::General(_))
    }

    #[inline]
    pub fn evolve(&self, t: usize, state: &[f64], control: &[f64], shock: &[f64], next: &mut [f64]) {
        (self.evolve)(t, state, control, shock, next)
    }

    #[inline]
    pub fn sample_shock(&self, t: usize, draws: &mut Draws, shock: &mut [f64]) {
        (self.shock_sampler)(t, draws, shock)
    }

    /// `u_{t+1}(s_{t+1}, s_t, c_t)`; zero for problems with a general utility.
    #[inline]
    pub fn period_utility(&self, t: usize, next: &[f64], state: &[f64], control: &[f64]) -> f64 {
        match &self.objective {
            Objective::Separable(u) => u(t, next, state, control),
            Objective::General(_) => 0.0,
        }
    }

    pub fn general_utility(&self, path: &PathView<'_>) -> Option<f64> {
        match &self.objective {
            Objective::General(u) => Some(u(path)),
            Objective::Separable(_) => None,
        }
    }

    /// Control at period `t >= 1` for parameters `theta` (length `d`).
    #[inline]
    pub fn apply_policy_map(&self, t: usize, state: &[f64], theta: &[f64], out: &mut [f64]) {
        match &self.policy_map {
            PolicyMap::Basis(basis) => {
                let nc = self.control_dim;
                let mut phi = smallvec::SmallVec::<[f64; 32]>::from_elem(0.0, self.param_dim * nc);
                basis(t, state, &mut phi);
                out.iter_mut().for_each(|c| *c = 0.0);
                for (i, &th) in theta.iter().enumerate() {
                    for (r, c) in out.iter_mut().enumerate() {
                        *c += th * phi[i * nc + r];
                    }
                }
            }
            PolicyMap::Custom(map) => map(t, state, theta, out),
        }
    }

    /// Zero parameters of the right shape: `c0 = 0`, `theta_t = 0`.
    pub fn zero_params(&self) -> PolicyParameters {
        PolicyParameters {
            c0: vec![0.0; self.control_dim],
            thetas: vec![vec![0.0; self.param_dim]; self.horizon.saturating_sub(1)],
        }
    }

    pub fn check_params(&self, params: &PolicyParameters) -> Result<()> {
        if params.c0.len() != self.control_dim {
            return invalid(format!(
                "c0 has length {}, problem control_dim is {}",
                params.c0.len(),
                self.control_dim
            ));
        }
        if params.thetas.len() != self.horizon - 1 {
            return invalid(format!(
                "expected {} period parameter vectors, got {}",
                self.horizon - 1,
                params.thetas.len()
            ));
        }
        for (i, th) in params.thetas.iter().enumerate() {
            if th.len() != self.param_dim {
                return invalid(format!(
                    "theta_{} has length {}, problem param_dim is {}",
                    i + 1,
                    th.len(),
                    self.param_dim
                ));
            }
        }
        Ok(())
    }

    pub(crate) fn check_state(&self, state: &[f64]) -> Result<()> {
        if state.len() != self.state_dim {
            return invalid(format!(
                "state has length {}, problem state_dim is {}",
                state.len(),
                self.state_dim
            ));
        }
        Ok(())
    }
}

#[derive(Default)]
pub struct ControlProblemBuilder {
    name: String,
    horizon: usize,
    state_dim: usize,
    control_dim: usize,
    shock_dim: usize,
    param_dim: usize,
    initial_state: Vec<f64>,
    evolve: Option<Arc<EvolveFn>>,
    shock_sampler: Option<Arc<ShockFn>>,
    period_utility: Option<Arc<PeriodUtilityFn>>,
    general_utility: Option<Arc<GeneralUtilityFn>>,
    policy_map: Option<PolicyMap>,
}

impl ControlProblemBuilder {
    pub fn horizon(mut self, t: usize) -> Self {
        self.horizon = t;
        self
    }

    /// Sets `n_s`, `n_c`, `n_z` at once.
    pub fn dims(mut self, state: usize, control: usize, shock: usize) -> Self {
        self.state_dim = state;
        self.control_dim = control;
        self.shock_dim = shock;
        self
    }

    pub fn initial_state(mut self, s0: Vec<f64>) -> Self {
        self.initial_state = s0;
        self
    }

    pub fn evolve(
        mut self,
        f: impl Fn(usize, &[f64], &[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        self.evolve = Some(Arc::new(f));
        self
    }

    pub fn shocks(mut self, f: impl Fn(usize, &mut Draws, &mut [f64]) + Send + Sync + 'static) -> Self {
        self.shock_sampler = Some(Arc::new(f));
        self
    }

    pub fn period_utility(
        mut self,
        f: impl Fn(usize, &[f64], &[f64], &[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.period_utility = Some(Arc::new(f));
        self
    }

    pub fn general_utility(mut self, f: impl Fn(&PathView<'_>) -> f64 + Send + Sync + 'static) -> Self {
        self.general_utility = Some(Arc::new(f));
        self
    }

    /// Default policy map: `d` basis functions written by `f` into a
    /// `d x n_c` row-major buffer.
    pub fn basis(mut self, d: usize, f: impl Fn(usize, &[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.param_dim = d;
        self.policy_map = Some(PolicyMap::Basis(Arc::new(f)));
        self
    }

    pub fn custom_policy(
        mut self,
        d: usize,
        f: impl Fn(usize, &[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        self.param_dim = d;
        self.policy_map = Some(PolicyMap::Custom(Arc::new(f)));
        self
    }

    pub fn build(self) -> Result<ControlProblem> {
        if self.horizon < 1 {
            return invalid("horizon must be at least 1");
        }
        if self.state_dim < 1 || self.control_dim < 1 || self.shock_dim < 1 {
            return invalid("state, control and shock dimensions must be at least 1");
        }
        if self.param_dim < 1 {
            return invalid("param_dim must be at least 1");
        }
        if self.initial_state.len() != self.state_dim {
            return invalid(format!(
                "initial state has length {}, expected {}",
                self.initial_state.len(),
                self.state_dim
            ));
        }
        let objective = match (self.period_utility, self.general_utility) {
            (Some(u), None) => Objective::Separable(u),
            (None, Some(u)) => Objective::General(u),
            (Some(_), Some(_)) => return invalid("set either a period utility or a general utility, not both"),
            (None, None) => return invalid("a period utility or a general utility is required"),
        };
        let evolve = self.evolve.ok_or_else(|| EmcError::InvalidArgument("evolve map is required".into()))?;
        let shock_sampler = self
            .shock_sampler
            .ok_or_else(|| EmcError::InvalidArgument("shock sampler is required".into()))?;
        let policy_map = self
            .policy_map
            .ok_or_else(|| EmcError::InvalidArgument("a basis or custom policy map is required".into()))?;
        Ok(ControlProblem {
            name: self.name,
            horizon: self.horizon,
            state_dim: self.state_dim,
            control_dim: self.control_dim,
            shock_dim: self.shock_dim,
            param_dim: self.param_dim,
            initial_state: self.initial_state,
            evolve,
            shock_sampler,
            objective,
            policy_map,
        })
    }
}

/// The decision vector `x = (c0, theta_1, ..., theta_{T-1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParameters {
    pub c0: Vec<f64>,
    pub thetas: Vec<Vec<f64>>,
}

impl PolicyParameters {
    pub fn new(c0: Vec<f64>, thetas: Vec<Vec<f64>>) -> Self {
        PolicyParameters { c0, thetas }
    }

    /// Parameter block for period `t`: `c0` at 0, `theta_t` otherwise.
    pub fn block(&self, t: usize) -> &[f64] {
        if t == 0 {
            &self.c0
        } else {
            &self.thetas[t - 1]
        }
    }

    pub fn block_mut(&mut self, t: usize) -> &mut Vec<f64> {
        if t == 0 {
            &mut self.c0
        } else {
            &mut self.thetas[t - 1]
        }
    }

    pub fn with_block(&self, t: usize, values: &[f64]) -> Self {
        let mut out = self.clone();
        out.block_mut(t).copy_from_slice(values);
        out
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut v = self.c0.clone();
        for th in &self.thetas {
            v.extend_from_slice(th);
        }
        v
    }

    /// Euclidean distance over all coordinates.
    pub fn distance(&self, other: &Self) -> f64 {
        self.flatten()
            .iter()
            .zip(other.flatten())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// Anything that maps `(t, s_t)` to a control; used to simulate both
/// parameterized policies and fixed baseline rules.
pub trait Policy: Sync {
    fn control(&self, t: usize, state: &[f64], out: &mut [f64]);
}

/// A [`ControlProblem`]'s own policy map evaluated at fixed parameters.
pub struct ParamPolicy<'a> {
    problem: &'a ControlProblem,
    params: &'a PolicyParameters,
}

impl<'a> ParamPolicy<'a> {
    pub fn new(problem: &'a ControlProblem, params: &'a PolicyParameters) -> Result<Self> {
        problem.check_params(params)?;
        Ok(ParamPolicy { problem, params })
    }
}

impl Policy for ParamPolicy<'_> {
    #[inline]
    fn control(&self, t: usize, state: &[f64], out: &mut [f64]) {
        if t == 0 {
            out.copy_from_slice(&self.params.c0);
        } else {
            self.problem
                .apply_policy_map(t, state, &self.params.thetas[t - 1], out);
        }
    }
}

impl<F> Policy for F
where
    F: Fn(usize, &[f64], &mut [f64]) + Sync,
{
    fn control(&self, t: usize, state: &[f64], out: &mut [f64]) {
        self(t, state, out)
    }
}

/// `c_t = c(t, s_t, theta_t)`, or `c0` at `t = 0`.
pub fn policy_control(
    problem: &ControlProblem,
    t: usize,
    state: &[f64],
    params: &PolicyParameters,
) -> Result<Vec<f64>> {
    problem.check_params(params)?;
    problem.check_state(state)?;
    if t >= problem.horizon() {
        return invalid(format!("period {t} outside 0..{}", problem.horizon()));
    }
    let mut out = vec![0.0; problem.control_dim()];
    ParamPolicy::new(problem, params)?.control(t, state, &mut out);
    Ok(out)
}

/// Basis of scaled monomials `(s_0 / scale)^p` for each exponent `p`, for
/// scalar-state, scalar-control problems.
pub fn monomial_basis(exponents: Vec<i32>, scale: f64) -> impl Fn(usize, &[f64], &mut [f64]) + Send + Sync {
    move |_t, state, out| {
        let x = state[0] / scale;
        for (o, &p) in out.iter_mut().zip(&exponents) {
            *o = x.powi(p);
        }
    }
}

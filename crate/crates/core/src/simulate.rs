//! Path simulation and the Monte Carlo surrogate objectives.
//!
//! Path `l` always draws the shock for period `j` from address `(l, j)` of the
//! supplied [`CrnBlock`]. A tail re-simulation from frozen period-`t` states
//! therefore reuses, path for path, the shocks a full simulation under the
//! same block would have used from `t` onward.

use smallvec::SmallVec;

use crate::crn::CrnBlock;
use crate::error::{invalid, EmcError, Result};
use crate::exec;
use crate::problem::{ControlProblem, ParamPolicy, PathView, Policy, PolicyParameters};

type Buf = SmallVec<[f64; 8]>;

/// Simulated paths, stored flat. Path `l` covers periods
/// `start_period..=T` for states and `start_period..T` for controls/shocks.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryBatch {
    n_paths: usize,
    start_period: usize,
    horizon: usize,
    state_dim: usize,
    control_dim: usize,
    shock_dim: usize,
    states: Vec<f64>,
    controls: Vec<f64>,
    shocks: Vec<f64>,
    path_utilities: Vec<f64>,
}

impl TrajectoryBatch {
    pub fn n_paths(&self) -> usize {
        self.n_paths
    }
    pub fn start_period(&self) -> usize {
        self.start_period
    }
    pub fn path_utilities(&self) -> &[f64] {
        &self.path_utilities
    }
    fn steps(&self) -> usize {
        self.horizon - self.start_period
    }

    /// `s_t` on path `l`, `start_period <= t <= T`.
    pub fn state(&self, l: usize, t: usize) -> &[f64] {
        let k = l * (self.steps() + 1) + (t - self.start_period);
        &self.states[k * self.state_dim..(k + 1) * self.state_dim]
    }

    /// `c_t` on path `l`, `start_period <= t < T`.
    pub fn control(&self, l: usize, t: usize) -> &[f64] {
        let k = l * self.steps() + (t - self.start_period);
        &self.controls[k * self.control_dim..(k + 1) * self.control_dim]
    }

    /// `z_{t+1}` on path `l`, `start_period <= t < T`.
    pub fn shock(&self, l: usize, t: usize) -> &[f64] {
        let k = l * self.steps() + (t - self.start_period);
        &self.shocks[k * self.shock_dim..(k + 1) * self.shock_dim]
    }

    /// Largest absolute gap between stored states and `evolve` applied to the
    /// stored state, control and shock.
    pub fn dynamics_residual(&self, problem: &ControlProblem) -> f64 {
        let mut next = vec![0.0; self.state_dim];
        let mut worst = 0.0f64;
        for l in 0..self.n_paths {
            for t in self.start_period..self.horizon {
                problem.evolve(t, self.state(l, t), self.control(l, t), self.shock(l, t), &mut next);
                for (a, b) in next.iter().zip(self.state(l, t + 1)) {
                    worst = worst.max((a - b).abs());
                }
            }
        }
        worst
    }

    /// Recomputes each path's utility from the stored path. `frozen` supplies
    /// the prefix for tail batches of general-utility problems.
    pub fn recompute_utilities(&self, problem: &ControlProblem, frozen: Option<&FrozenStates>) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.n_paths);
        for l in 0..self.n_paths {
            if problem.is_general() {
                let (mut states, mut controls) = match (self.start_period, frozen) {
                    (0, _) => (Vec::new(), Vec::new()),
                    (_, Some(f)) => f.prefix(l),
                    (_, None) => return invalid("general utility on a tail batch needs the frozen prefix"),
                };
                for t in self.start_period..self.horizon {
                    states.extend_from_slice(self.state(l, t));
                    controls.extend_from_slice(self.control(l, t));
                }
                states.extend_from_slice(self.state(l, self.horizon));
                let view = PathView {
                    states: &states,
                    controls: &controls,
                    state_dim: self.state_dim,
                    control_dim: self.control_dim,
                };
                out.push(problem.general_utility(&view).unwrap_or(f64::NAN));
            } else {
                let mut acc = 0.0;
                for t in self.start_period..self.horizon {
                    acc += problem.period_utility(t, self.state(l, t + 1), self.state(l, t), self.control(l, t));
                }
                out.push(acc);
            }
        }
        Ok(out)
    }
}

/// Period-`t` states (and the paths leading to them) frozen from a full
/// simulation; the starting points of tail re-simulations.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenStates {
    period: usize,
    n_paths: usize,
    state_dim: usize,
    control_dim: usize,
    states: Vec<f64>,
    prefix_states: Option<Vec<f64>>,
    prefix_controls: Option<Vec<f64>>,
}

impl FrozenStates {
    /// Takes the period-`t` states of a full batch together with the
    /// prefix `s_0, c_0, ..., s_t` of every path.
    pub fn from_batch(batch: &TrajectoryBatch, t: usize) -> Result<Self> {
        if batch.start_period != 0 {
            return invalid("frozen states must come from a full (period 0) batch");
        }
        if t > batch.horizon {
            return invalid(format!("period {t} beyond horizon {}", batch.horizon));
        }
        let n = batch.n_paths;
        let mut states = Vec::with_capacity(n * batch.state_dim);
        let mut ps = Vec::with_capacity(n * (t + 1) * batch.state_dim);
        let mut pc = Vec::with_capacity(n * t * batch.control_dim);
        for l in 0..n {
            states.extend_from_slice(batch.state(l, t));
            for j in 0..=t {
                ps.extend_from_slice(batch.state(l, j));
            }
            for j in 0..t {
                pc.extend_from_slice(batch.control(l, j));
            }
        }
        Ok(FrozenStates {
            period: t,
            n_paths: n,
            state_dim: batch.state_dim,
            control_dim: batch.control_dim,
            states,
            prefix_states: Some(ps),
            prefix_controls: Some(pc),
        })
    }

    /// Bare states without prefixes; enough for separable objectives.
    pub fn from_states(t: usize, states: &[Vec<f64>]) -> Result<Self> {
        let state_dim = states.first().map(|s| s.len()).unwrap_or(0);
        if states.iter().any(|s| s.len() != state_dim) {
            return invalid("frozen states have inconsistent lengths");
        }
        Ok(FrozenStates {
            period: t,
            n_paths: states.len(),
            state_dim,
            control_dim: 0,
            states: states.concat(),
            prefix_states: None,
            prefix_controls: None,
        })
    }

    pub fn period(&self) -> usize {
        self.period
    }
    pub fn n_paths(&self) -> usize {
        self.n_paths
    }
    pub fn state(&self, l: usize) -> &[f64] {
        &self.states[l * self.state_dim..(l + 1) * self.state_dim]
    }
    pub fn has_prefix(&self) -> bool {
        self.prefix_states.is_some()
    }

    /// Owned copies of path `l`'s prefix states `s_0..s_{t-1}` and controls
    /// `c_0..c_{t-1}`; `s_t` is left for the tail to append.
    fn prefix(&self, l: usize) -> (Vec<f64>, Vec<f64>) {
        let t = self.period;
        let ps = self.prefix_states.as_ref().expect("prefix");
        let pc = self.prefix_controls.as_ref().expect("prefix");
        let s_len = (t + 1) * self.state_dim;
        let c_len = t * self.control_dim;
        let states = ps[l * s_len..l * s_len + t * self.state_dim].to_vec();
        let controls = pc[l * c_len..(l + 1) * c_len].to_vec();
        (states, controls)
    }
}

/// Where simulated paths begin.
#[derive(Debug, Clone, Copy)]
pub enum Start<'a> {
    Initial,
    Frozen(&'a FrozenStates),
}

fn check_frozen(problem: &ControlProblem, frozen: &FrozenStates) -> Result<()> {
    if frozen.period >= problem.horizon() {
        return invalid(format!(
            "tail start period {} must be below the horizon {}",
            frozen.period,
            problem.horizon()
        ));
    }
    if frozen.state_dim != problem.state_dim() {
        return invalid("frozen state dimension does not match the problem");
    }
    if problem.is_general() && frozen.period > 0 && !frozen.has_prefix() {
        return invalid("general-utility tails need frozen prefix paths");
    }
    Ok(())
}

/// Runs path `l` from `(t0, s_start)` and returns the tail utility
/// `sum_{j >= t0} u_{j+1}`. Separable objectives only.
#[inline]
fn run_tail<P: Policy + ?Sized>(
    problem: &ControlProblem,
    policy: &P,
    block: CrnBlock,
    l: usize,
    t0: usize,
    s_start: &[f64],
) -> f64 {
    let mut s: Buf = SmallVec::from_slice(s_start);
    let mut next: Buf = SmallVec::from_elem(0.0, problem.state_dim());
    let mut c: Buf = SmallVec::from_elem(0.0, problem.control_dim());
    let mut z: Buf = SmallVec::from_elem(0.0, problem.shock_dim());
    let mut acc = 0.0;
    for j in t0..problem.horizon() {
        policy.control(j, &s, &mut c);
        let mut draws = block.draws(l as u32, j as u32);
        problem.sample_shock(j, &mut draws, &mut z);
        problem.evolve(j, &s, &c, &z, &mut next);
        acc += problem.period_utility(j, &next, &s, &c);
        std::mem::swap(&mut s, &mut next);
    }
    acc
}

/// Full-path utility of a general-objective problem, splicing the frozen
/// prefix of path `l` with a tail simulated from `t0`.
fn run_general<P: Policy + ?Sized>(
    problem: &ControlProblem,
    policy: &P,
    block: CrnBlock,
    l: usize,
    start: Start<'_>,
) -> f64 {
    let ns = problem.state_dim();
    let nc = problem.control_dim();
    let (t0, mut states, mut controls) = match start {
        Start::Initial => (0, Vec::new(), Vec::new()),
        Start::Frozen(f) if f.period == 0 => (0, Vec::new(), Vec::new()),
        Start::Frozen(f) => {
            let (s, c) = f.prefix(l);
            (f.period, s, c)
        }
    };
    let horizon = problem.horizon();
    states.reserve((horizon + 1 - t0) * ns);
    controls.reserve((horizon - t0) * nc);
    let s_start = match start {
        Start::Initial => problem.initial_state(),
        Start::Frozen(f) => f.state(l),
    };
    states.extend_from_slice(s_start);
    let mut c: Buf = SmallVec::from_elem(0.0, nc);
    let mut z: Buf = SmallVec::from_elem(0.0, problem.shock_dim());
    let mut next: Buf = SmallVec::from_elem(0.0, ns);
    for j in t0..horizon {
        let s = &states[j * ns..(j + 1) * ns];
        policy.control(j, s, &mut c);
        let mut draws = block.draws(l as u32, j as u32);
        problem.sample_shock(j, &mut draws, &mut z);
        problem.evolve(j, s, &c, &z, &mut next);
        controls.extend_from_slice(&c);
        states.extend_from_slice(&next);
    }
    let view = PathView {
        states: &states,
        controls: &controls,
        state_dim: ns,
        control_dim: nc,
    };
    problem.general_utility(&view).unwrap_or(f64::NAN)
}

/// Per-path utilities of `policy` over `n_paths` paths. From `Start::Initial`
/// each value is the whole objective; from frozen period-`t` states it is the
/// tail `sum_{j >= t} u_{j+1}` (or the spliced full-path utility for general
/// objectives).
pub fn policy_utilities<P: Policy + ?Sized>(
    problem: &ControlProblem,
    policy: &P,
    n_paths: usize,
    block: CrnBlock,
    start: Start<'_>,
) -> Result<Vec<f64>> {
    if let Start::Frozen(f) = start {
        check_frozen(problem, f)?;
        if f.n_paths != n_paths {
            return invalid(format!("{} frozen states for {} paths", f.n_paths, n_paths));
        }
    }
    let values = if problem.is_general() {
        exec::map_indexed(n_paths, |l| run_general(problem, policy, block, l, start))
    } else {
        match start {
            Start::Initial => {
                let s0 = problem.initial_state();
                exec::map_indexed(n_paths, |l| run_tail(problem, policy, block, l, 0, s0))
            }
            Start::Frozen(f) => {
                exec::map_indexed(n_paths, |l| run_tail(problem, policy, block, l, f.period, f.state(l)))
            }
        }
    };
    Ok(values)
}

/// Simulates and stores `n_paths` paths under `params`.
pub fn simulate_paths(
    problem: &ControlProblem,
    params: &PolicyParameters,
    n_paths: usize,
    block: CrnBlock,
    start: Start<'_>,
) -> Result<TrajectoryBatch> {
    let policy = ParamPolicy::new(problem, params)?;
    simulate_policy_paths(problem, &policy, n_paths, block, start)
}

/// [`simulate_paths`] for an arbitrary policy.
pub fn simulate_policy_paths<P: Policy + ?Sized>(
    problem: &ControlProblem,
    policy: &P,
    n_paths: usize,
    block: CrnBlock,
    start: Start<'_>,
) -> Result<TrajectoryBatch> {
    let t0 = match start {
        Start::Initial => 0,
        Start::Frozen(f) => {
            check_frozen(problem, f)?;
            if f.n_paths != n_paths {
                return invalid(format!("{} start states for {} paths", f.n_paths, n_paths));
            }
            f.period
        }
    };
    let (ns, nc, nz) = (problem.state_dim(), problem.control_dim(), problem.shock_dim());
    let horizon = problem.horizon();
    let steps = horizon - t0;
    let per_path = exec::map_indexed(n_paths, |l| {
        let mut states = Vec::with_capacity((steps + 1) * ns);
        let mut controls = Vec::with_capacity(steps * nc);
        let mut shocks = Vec::with_capacity(steps * nz);
        let s_start = match start {
            Start::Initial => problem.initial_state(),
            Start::Frozen(f) => f.state(l),
        };
        states.extend_from_slice(s_start);
        let mut c: Buf = SmallVec::from_elem(0.0, nc);
        let mut z: Buf = SmallVec::from_elem(0.0, nz);
        let mut next: Buf = SmallVec::from_elem(0.0, ns);
        let mut acc = 0.0;
        for j in t0..horizon {
            let k = j - t0;
            let s = &states[k * ns..(k + 1) * ns];
            policy.control(j, s, &mut c);
            let mut draws = block.draws(l as u32, j as u32);
            problem.sample_shock(j, &mut draws, &mut z);
            problem.evolve(j, s, &c, &z, &mut next);
            acc += problem.period_utility(j, &next, s, &c);
            controls.extend_from_slice(&c);
            shocks.extend_from_slice(&z);
            states.extend_from_slice(&next);
        }
        (states, controls, shocks, acc)
    });
    let mut batch = TrajectoryBatch {
        n_paths,
        start_period: t0,
        horizon,
        state_dim: ns,
        control_dim: nc,
        shock_dim: nz,
        states: Vec::with_capacity(n_paths * (steps + 1) * ns),
        controls: Vec::with_capacity(n_paths * steps * nc),
        shocks: Vec::with_capacity(n_paths * steps * nz),
        path_utilities: Vec::with_capacity(n_paths),
    };
    for (s, c, z, u) in per_path {
        batch.states.extend_from_slice(&s);
        batch.controls.extend_from_slice(&c);
        batch.shocks.extend_from_slice(&z);
        batch.path_utilities.push(u);
    }
    if problem.is_general() {
        let frozen = match start {
            Start::Frozen(f) => Some(f),
            Start::Initial => None,
        };
        batch.path_utilities = batch.recompute_utilities(problem, frozen)?;
    }
    Ok(batch)
}

/// Sample mean and standard error of the full objective under `params`.
pub fn surrogate_full(
    problem: &ControlProblem,
    params: &PolicyParameters,
    n_paths: usize,
    block: CrnBlock,
) -> Result<(f64, f64)> {
    if n_paths < 2 {
        return invalid("surrogate needs at least 2 paths");
    }
    let policy = ParamPolicy::new(problem, params)?;
    let values = policy_utilities(problem, &policy, n_paths, block, Start::Initial)?;
    Ok(exec::mean_stderr(&values))
}

/// Sample mean and standard error of the tail objective from frozen
/// period-`t` states, `t = frozen.period()`, for `1 <= t <= T-1`. Only
/// `theta_t, ..., theta_{T-1}` of `params` affect the result.
pub fn surrogate_tail(
    problem: &ControlProblem,
    params: &PolicyParameters,
    frozen: &FrozenStates,
    block: CrnBlock,
) -> Result<(f64, f64)> {
    let t = frozen.period();
    if t < 1 || t >= problem.horizon() {
        return Err(EmcError::InvalidArgument(format!(
            "tail period {t} outside 1..{}",
            problem.horizon() - 1
        )));
    }
    if frozen.n_paths() < 2 {
        return invalid("surrogate needs at least 2 paths");
    }
    let policy = ParamPolicy::new(problem, params)?;
    let values = policy_utilities(problem, &policy, frozen.n_paths(), block, Start::Frozen(frozen))?;
    Ok(exec::mean_stderr(&values))
}

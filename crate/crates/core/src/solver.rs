//! The EM-C outer loop.
//!
//! Sweep `k` first simulates `N` full paths under `x^{k-1}` on the sweep's
//! guard stream. Moving backwards from `t = T-1` to `t = 1` it then maximizes
//! the tail surrogate from the frozen period-`t` states over `theta_t` by
//! stochastic approximation, and finally maximizes the full surrogate over
//! `c0`. Each candidate is re-evaluated on the guard stream and kept only if
//! it strictly beats the incumbent there.
//!
//! Tail paths reuse the guard stream's shocks from period `t` on, so a tail
//! difference on the guard stream equals the corresponding full-path
//! difference. The guard values therefore form a non-decreasing chain from
//! the start of the sweep to its end.

use std::time::{Duration, Instant};

use crate::crn::CrnStream;
use crate::error::{invalid, EmcError, Result};
use crate::problem::{ControlProblem, PolicyParameters};
use crate::sa::{sa_maximize, SaConfig};
use crate::simulate::{simulate_paths, surrogate_full, surrogate_tail, FrozenStates, Start};

/// How the per-subproblem SA scales `a0`, `b0` are chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum StepScale {
    /// `a0_i = a_factor * max(|y0_i|, floor)`, `b0_i = b_factor * max(|y0_i|, floor)`,
    /// where `y0` is the incumbent block at the start of the subproblem.
    Iterate { a_factor: f64, b_factor: f64, floor: f64 },
    /// Explicit per-coordinate scales for the `c0` and `theta_t` blocks.
    Fixed {
        c0_a: Vec<f64>,
        c0_b: Vec<f64>,
        theta_a: Vec<f64>,
        theta_b: Vec<f64>,
    },
}

impl Default for StepScale {
    fn default() -> Self {
        StepScale::Iterate {
            a_factor: 1.0,
            b_factor: 1.0,
            floor: 1.0,
        }
    }
}

impl StepScale {
    fn config_for(&self, period: usize, y0: &[f64], sa_iters: usize) -> Result<SaConfig> {
        match self {
            StepScale::Iterate { a_factor, b_factor, floor } => {
                let base: Vec<f64> = y0.iter().map(|v| v.abs().max(*floor)).collect();
                SaConfig::new(
                    base.iter().map(|s| s * a_factor).collect(),
                    base.iter().map(|s| s * b_factor).collect(),
                    sa_iters,
                )
            }
            StepScale::Fixed {
                c0_a,
                c0_b,
                theta_a,
                theta_b,
            } => {
                let (a, b) = if period == 0 { (c0_a, c0_b) } else { (theta_a, theta_b) };
                if a.len() != y0.len() {
                    return invalid(format!(
                        "fixed step scale for period {period} has {} entries, block has {}",
                        a.len(),
                        y0.len()
                    ));
                }
                SaConfig::new(a.clone(), b.clone(), sa_iters)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmcConfig {
    pub max_outer_iters: usize,
    pub n_paths: usize,
    pub sa_iters: usize,
    pub step_scale: StepScale,
    pub seed: u64,
    /// Stop once a sweep's guard gain is below `rel_tol * |value|`; 0 disables.
    pub rel_tol: f64,
}

impl EmcConfig {
    pub fn new(max_outer_iters: usize, n_paths: usize, sa_iters: usize, seed: u64) -> Self {
        EmcConfig {
            max_outer_iters,
            n_paths,
            sa_iters,
            step_scale: StepScale::default(),
            seed,
            rel_tol: 0.0,
        }
    }

    pub fn with_step_scale(mut self, scale: StepScale) -> Self {
        self.step_scale = scale;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_outer_iters < 1 {
            return invalid("at least one outer iteration is required");
        }
        if self.n_paths < 2 {
            return invalid("at least two simulation paths are required");
        }
        if self.sa_iters < 1 {
            return invalid("at least one SA iteration is required");
        }
        if !(self.rel_tol >= 0.0 && self.rel_tol.is_finite()) {
            return invalid("rel_tol must be finite and non-negative");
        }
        Ok(())
    }
}

/// One guarded subproblem of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct Substep {
    pub period: usize,
    /// Guard surrogate at the incumbent block.
    pub incumbent_value: f64,
    /// Guard surrogate at the SA candidate.
    pub candidate_value: f64,
    pub accepted: bool,
    pub incumbent: Vec<f64>,
    pub candidate: Vec<f64>,
}

impl Substep {
    pub fn chosen(&self) -> &[f64] {
        if self.accepted {
            &self.candidate
        } else {
            &self.incumbent
        }
    }

    pub fn chosen_value(&self) -> f64 {
        if self.accepted {
            self.candidate_value
        } else {
            self.incumbent_value
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub k: usize,
    /// Full surrogate of `x^{k-1}` on the sweep's guard stream.
    pub start_value: f64,
    pub start_stderr: f64,
    /// Full surrogate of `x^k` on the same stream.
    pub value: f64,
    pub stderr: f64,
    /// In the order solved: `T-1, ..., 1, 0`.
    pub substeps: Vec<Substep>,
    pub params: PolicyParameters,
    /// `||x^k - x^{k-1}||`.
    pub param_step: f64,
    pub wall_time: Duration,
}

impl IterationRecord {
    /// Accept flags indexed by period.
    pub fn accepted_by_period(&self) -> Vec<bool> {
        let mut flags = vec![false; self.substeps.len()];
        for s in &self.substeps {
            flags[s.period] = s.accepted;
        }
        flags
    }

    pub fn gain(&self) -> f64 {
        self.value - self.start_value
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationTrace {
    pub records: Vec<IterationRecord>,
    pub final_params: PolicyParameters,
}

/// Keeps `candidate` only on strict improvement.
pub fn improvement_guard<'a, T: ?Sized>(old_value: f64, new_value: f64, incumbent: &'a T, candidate: &'a T) -> &'a T {
    if new_value > old_value {
        candidate
    } else {
        incumbent
    }
}

fn period_err(period: usize) -> impl Fn(EmcError) -> EmcError {
    move |e| EmcError::Period {
        period,
        source: Box::new(e),
    }
}

/// One backward sweep producing `x^k` from `x^{k-1}`.
pub fn emc_sweep(
    problem: &ControlProblem,
    x_prev: &PolicyParameters,
    config: &EmcConfig,
    k: usize,
) -> Result<(PolicyParameters, IterationRecord)> {
    config.validate()?;
    problem.check_params(x_prev)?;
    let started = Instant::now();
    let crn = CrnStream::new(config.seed);
    let kk = k as u32;
    let guard = crn.guard_block(kk);
    let n = config.n_paths;

    let batch = simulate_paths(problem, x_prev, n, guard, Start::Initial)?;
    let (start_value, start_stderr) = crate::exec::mean_stderr(batch.path_utilities());

    let mut x = x_prev.clone();
    let mut substeps = Vec::with_capacity(problem.horizon());

    for t in (1..problem.horizon()).rev() {
        let wrap = period_err(t);
        let frozen = FrozenStates::from_batch(&batch, t)?;
        let incumbent = x.block(t).to_vec();
        let (incumbent_value, _) = surrogate_tail(problem, &x, &frozen, guard).map_err(&wrap)?;
        let oracle = |y: &[f64], j: u32| {
            let trial = x.with_block(t, y);
            surrogate_tail(problem, &trial, &frozen, crn.block(kk, t as u32, j)).map(|(m, _)| m)
        };
        let sa = config.step_scale.config_for(t, &incumbent, config.sa_iters)?;
        let (candidate, _) = sa_maximize(&incumbent, &oracle, &sa).map_err(&wrap)?;
        let (candidate_value, _) = surrogate_tail(problem, &x.with_block(t, &candidate), &frozen, guard).map_err(&wrap)?;
        let chosen = improvement_guard(incumbent_value, candidate_value, &incumbent, &candidate).to_vec();
        x.block_mut(t).copy_from_slice(&chosen);
        substeps.push(Substep {
            period: t,
            incumbent_value,
            candidate_value,
            accepted: candidate_value > incumbent_value,
            incumbent,
            candidate,
        });
    }

    let wrap = period_err(0);
    let incumbent = x.c0.clone();
    let (incumbent_value, incumbent_stderr) = surrogate_full(problem, &x, n, guard).map_err(&wrap)?;
    let oracle = |y: &[f64], j: u32| {
        let trial = x.with_block(0, y);
        surrogate_full(problem, &trial, n, crn.block(kk, 0, j)).map(|(m, _)| m)
    };
    let sa = config.step_scale.config_for(0, &incumbent, config.sa_iters)?;
    let (candidate, _) = sa_maximize(&incumbent, &oracle, &sa).map_err(&wrap)?;
    let (candidate_value, candidate_stderr) =
        surrogate_full(problem, &x.with_block(0, &candidate), n, guard).map_err(&wrap)?;
    let accepted = candidate_value > incumbent_value;
    if accepted {
        x.c0.copy_from_slice(&candidate);
    }
    let (value, stderr) = if accepted {
        (candidate_value, candidate_stderr)
    } else {
        (incumbent_value, incumbent_stderr)
    };
    substeps.push(Substep {
        period: 0,
        incumbent_value,
        candidate_value,
        accepted,
        incumbent,
        candidate,
    });

    let record = IterationRecord {
        k,
        start_value,
        start_stderr,
        value,
        stderr,
        substeps,
        param_step: x.distance(x_prev),
        params: x.clone(),
        wall_time: started.elapsed(),
    };
    Ok((x, record))
}

/// Runs sweeps `k = 1..=K`, stopping early if `rel_tol > 0` and a sweep's
/// guard gain falls below `rel_tol * |value|`.
pub fn solve(
    problem: &ControlProblem,
    x0: &PolicyParameters,
    config: &EmcConfig,
) -> Result<(PolicyParameters, IterationTrace)> {
    config.validate()?;
    problem.check_params(x0)?;
    let mut x = x0.clone();
    let mut records = Vec::with_capacity(config.max_outer_iters);
    for k in 1..=config.max_outer_iters {
        let (next, record) = emc_sweep(problem, &x, config, k)?;
        let stop = config.rel_tol > 0.0 && record.gain() < config.rel_tol * record.value.abs();
        records.push(record);
        x = next;
        if stop {
            break;
        }
    }
    let trace = IterationTrace {
        records,
        final_params: x.clone(),
    };
    Ok((x, trace))
}

/// [`solve`] for problems whose objective is a single utility of the whole
/// path; tails are spliced onto the frozen prefix paths.
pub fn solve_general(
    problem: &ControlProblem,
    x0: &PolicyParameters,
    config: &EmcConfig,
) -> Result<(PolicyParameters, IterationTrace)> {
    if !problem.is_general() {
        return invalid("solve_general needs a problem with a general utility");
    }
    solve(problem, x0, config)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    /// `value_{k+1} - value_k` between consecutive records.
    pub deltas: Vec<f64>,
    pub deltas_nonnegative: Vec<bool>,
    pub monotone: bool,
    /// `value - start_value` of each sweep (same guard stream; never negative).
    pub sweep_gains: Vec<f64>,
    pub sweeps_monotone: bool,
    /// `||x^k - x^{k-1}||` per record.
    pub param_steps: Vec<f64>,
    /// First iteration `k` after which every delta is at most
    /// `rel_tol * |value_k|`; `None` for a single record.
    pub plateau: Option<usize>,
}

pub fn convergence_report(trace: &IterationTrace, rel_tol: f64) -> ConvergenceReport {
    let values: Vec<f64> = trace.records.iter().map(|r| r.value).collect();
    let deltas: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
    let deltas_nonnegative: Vec<bool> = deltas.iter().map(|d| *d >= 0.0).collect();
    let sweep_gains: Vec<f64> = trace.records.iter().map(IterationRecord::gain).collect();
    let plateau = if deltas.is_empty() {
        None
    } else {
        (0..deltas.len())
            .find(|&i| deltas[i..].iter().all(|d| *d <= rel_tol * values[i].abs()))
            .map(|i| trace.records[i].k)
    };
    ConvergenceReport {
        monotone: deltas_nonnegative.iter().all(|b| *b),
        deltas_nonnegative,
        deltas,
        sweeps_monotone: sweep_gains.iter().all(|g| *g >= 0.0),
        sweep_gains,
        param_steps: trace.records.iter().map(|r| r.param_step).collect(),
        plateau,
    }
}

//! Finite-horizon stochastic control by backward, simulation-based policy
//! updates.
//!
//! A [`ControlProblem`] fixes dynamics, shocks, utilities and a policy
//! parameterization. [`solve`] runs the EM-C sweep: starting from the last
//! period and moving back to period 0, each period's parameters are improved
//! by Kiefer–Wolfowitz stochastic approximation ([`sa`]) on a Monte Carlo
//! surrogate of the tail objective, and a change is kept only if it strictly
//! improves that surrogate under common random numbers. The [`models`] module
//! holds the benchmark problems and their reference policies.

pub mod crn;
pub mod error;
pub mod exec;
pub mod models;
pub mod problem;
pub mod sa;
pub mod simulate;
pub mod solver;

pub use crn::{CrnBlock, CrnStream, Draws};
pub use error::{EmcError, Result};
pub use problem::{
    policy_control, ControlProblem, ControlProblemBuilder, ParamPolicy, PathView, Policy, PolicyParameters,
};
pub use sa::{sa_maximize, sa_update, step_sizes, SaConfig, StochasticOracle};
pub use simulate::{
    policy_utilities, simulate_paths, simulate_policy_paths, surrogate_full, surrogate_tail, FrozenStates, Start,
    TrajectoryBatch,
};
pub use solver::{
    convergence_report, emc_sweep, improvement_guard, solve, solve_general, ConvergenceReport, EmcConfig,
    IterationRecord, IterationTrace, StepScale, Substep,
};

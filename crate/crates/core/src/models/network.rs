//! Multi-product (network) monopoly pricing.
//!
//! Itinerary `j` uses the legs `k` with `A[k][j] = 1`. The control of
//! itinerary `j` is its arrival intensity, clamped to
//! `[delta, 1 - delta] * lambda0_j e^{eps0_j}`, and the price follows as
//! `p_j = (log(lambda0_j / lambda_j) / eps0_j + 1) p0_j`. Arrivals that
//! exceed the residual leg capacity are rationed by the revenue-maximizing
//! integer allocation ([`cap_allocation`]).
//!
//! The state is `(R_1, ..., R_{n_l}, revenue of the last period)`; the last
//! entry carries the period's revenue to the utility and is ignored by the
//! basis.

use crate::crn::{CrnBlock, Draws};
use crate::error::{invalid, EmcError, Result};
use crate::exec;
use crate::problem::{ControlProblem, PolicyParameters};

use super::poisson_inverse;

const MAX_DIM: usize = 8;

/// Guard keeping intensities strictly inside `(0, lambda0 e^{eps0})`.
pub const CLAMP_DELTA: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    /// `n_l x n_i` leg-itinerary incidence.
    pub incidence: Vec<Vec<u8>>,
    pub capacities: Vec<u32>,
    pub p0: Vec<f64>,
    pub eps0: Vec<f64>,
    pub lambda0: Vec<f64>,
    pub season: f64,
    pub n_periods: usize,
}

impl NetworkSpec {
    /// Two legs `1->2`, `2->3` and itineraries `1->2`, `2->3`, `1->2->3`.
    pub fn three_node() -> Self {
        NetworkSpec {
            incidence: vec![vec![1, 0, 1], vec![0, 1, 1]],
            capacities: vec![300, 200],
            p0: vec![220.0, 250.0, 400.0],
            eps0: vec![1.0, 1.2, 1.1],
            lambda0: vec![300.0, 300.0, 300.0],
            season: 1.0,
            n_periods: 6,
        }
    }

    pub fn n_legs(&self) -> usize {
        self.incidence.len()
    }

    pub fn n_itineraries(&self) -> usize {
        self.p0.len()
    }

    pub fn period_length(&self) -> f64 {
        self.season / self.n_periods as f64
    }

    pub fn validate(&self) -> Result<()> {
        let ni = self.n_itineraries();
        if ni == 0 || self.n_legs() == 0 {
            return invalid("network needs at least one leg and one itinerary");
        }
        if self.eps0.len() != ni || self.lambda0.len() != ni {
            return invalid("p0, eps0 and lambda0 must have one entry per itinerary");
        }
        if self.capacities.len() != self.n_legs() {
            return invalid("one capacity per leg is required");
        }
        if self.incidence.iter().any(|row| row.len() != ni) {
            return invalid("incidence rows must have one entry per itinerary");
        }
        if self.incidence.iter().flatten().any(|a| *a > 1) {
            return invalid("incidence entries must be 0 or 1");
        }
        for j in 0..ni {
            if self.incidence.iter().all(|row| row[j] == 0) {
                return invalid(format!("itinerary {j} uses no leg"));
            }
        }
        let positive = |v: &[f64]| v.iter().all(|x| *x > 0.0 && x.is_finite());
        if !(positive(&self.p0) && positive(&self.eps0) && positive(&self.lambda0)) {
            return invalid("p0, eps0 and lambda0 must be positive");
        }
        if ni > MAX_DIM || self.n_legs() > MAX_DIM {
            return invalid(format!("at most {MAX_DIM} legs and itineraries are supported"));
        }
        if !(self.season > 0.0 && self.season.is_finite()) || self.n_periods < 1 {
            return invalid("season must be positive with at least one period");
        }
        Ok(())
    }

    /// Upper end `lambda0_j e^{eps0_j}` of the admissible intensities.
    pub fn lambda_max(&self, j: usize) -> f64 {
        self.lambda0[j] * self.eps0[j].exp()
    }

    /// `lambda_j = min((1-delta) lambda_max, max(c, delta lambda_max))`.
    #[inline]
    pub fn clamp_intensity(&self, j: usize, c: f64) -> f64 {
        let top = self.lambda_max(j);
        c.max(CLAMP_DELTA * top).min((1.0 - CLAMP_DELTA) * top)
    }

    #[inline]
    pub fn price(&self, j: usize, lambda: f64) -> f64 {
        ((self.lambda0[j] / lambda).ln() / self.eps0[j] + 1.0) * self.p0[j]
    }

    /// `lambda_j` giving price `p`.
    pub fn intensity_for_price(&self, j: usize, p: f64) -> f64 {
        self.lambda0[j] * (-(p / self.p0[j] - 1.0) * self.eps0[j]).exp()
    }

    fn uses(&self, k: usize, j: usize) -> bool {
        self.incidence[k][j] == 1
    }

    /// `n^c - A n`.
    pub fn residual(&self, sold: &[u32]) -> Vec<i64> {
        (0..self.n_legs())
            .map(|k| {
                self.capacities[k] as i64
                    - (0..self.n_itineraries())
                        .filter(|&j| self.uses(k, j))
                        .map(|j| sold[j] as i64)
                        .sum::<i64>()
            })
            .collect()
    }

    /// Basis dimension: a constant plus one slope per leg, for every itinerary.
    pub fn basis_dim(&self) -> usize {
        (self.n_legs() + 1) * self.n_itineraries()
    }
}

/// Revenue-maximizing integer allocation of `residual` leg capacity to the
/// requested `arrivals`. Everything is accepted when it fits.
pub fn allocate(spec: &NetworkSpec, residual: &[i64], arrivals: &[u32], prices: &[f64]) -> Vec<u32> {
    let ni = spec.n_itineraries();
    let fits = (0..spec.n_legs()).all(|k| {
        (0..ni)
            .filter(|&j| spec.uses(k, j))
            .map(|j| arrivals[j] as i64)
            .sum::<i64>()
            <= residual[k]
    });
    if fits {
        return arrivals.to_vec();
    }
    let mut order: Vec<usize> = (0..ni).collect();
    order.sort_by(|&x, &y| prices[y].total_cmp(&prices[x]).then(x.cmp(&y)));
    let mut search = BranchAndBound {
        spec,
        order: &order,
        arrivals,
        prices,
        residual: residual.to_vec(),
        current: vec![0; ni],
        best: vec![0; ni],
        best_value: 0.0,
    };
    search.descend(0, 0.0);
    search.best
}

struct BranchAndBound<'a> {
    spec: &'a NetworkSpec,
    order: &'a [usize],
    arrivals: &'a [u32],
    prices: &'a [f64],
    residual: Vec<i64>,
    current: Vec<u32>,
    best: Vec<u32>,
    best_value: f64,
}

impl BranchAndBound<'_> {
    fn cap(&self, j: usize) -> i64 {
        let legs = (0..self.spec.n_legs()).filter(|&k| self.spec.uses(k, j));
        legs.map(|k| self.residual[k]).min().unwrap_or(0).clamp(0, self.arrivals[j] as i64)
    }

    fn bound(&self, depth: usize) -> f64 {
        self.order[depth..]
            .iter()
            .map(|&j| self.prices[j].max(0.0) * self.cap(j) as f64)
            .sum()
    }

    fn descend(&mut self, depth: usize, value: f64) {
        if depth == self.order.len() {
            if value > self.best_value {
                self.best_value = value;
                self.best.copy_from_slice(&self.current);
            }
            return;
        }
        if value + self.bound(depth) <= self.best_value {
            return;
        }
        let j = self.order[depth];
        let top = if self.prices[j] > 0.0 { self.cap(j) } else { 0 };
        for x in (0..=top).rev() {
            for k in 0..self.spec.n_legs() {
                if self.spec.uses(k, j) {
                    self.residual[k] -= x;
                }
            }
            self.current[j] = x as u32;
            self.descend(depth + 1, value + self.prices[j] * x as f64);
            for k in 0..self.spec.n_legs() {
                if self.spec.uses(k, j) {
                    self.residual[k] += x;
                }
            }
            self.current[j] = 0;
        }
    }
}

/// The capping map: sales accepted this period given cumulative sales
/// `sold`, new `arrivals` and current `prices`.
pub fn cap_allocation(spec: &NetworkSpec, sold: &[u32], arrivals: &[u32], prices: &[f64]) -> Result<Vec<u32>> {
    let ni = spec.n_itineraries();
    if sold.len() != ni || arrivals.len() != ni || prices.len() != ni {
        return invalid("sales, arrivals and prices need one entry per itinerary");
    }
    let residual = spec.residual(sold);
    if residual.iter().any(|r| *r < 0) {
        return Err(EmcError::Internal(format!(
            "cumulative sales {sold:?} exceed leg capacities {:?}",
            spec.capacities
        )));
    }
    Ok(allocate(spec, &residual, arrivals, prices))
}

fn draw_uniforms(draws: &mut Draws, out: &mut [f64]) {
    for u in out.iter_mut() {
        *u = draws.uniform();
    }
}

pub fn build_network_pricing(spec: &NetworkSpec) -> Result<ControlProblem> {
    spec.validate()?;
    let nl = spec.n_legs();
    let ni = spec.n_itineraries();
    let dt = spec.period_length();
    let mut initial = spec.capacities.iter().map(|c| *c as f64).collect::<Vec<_>>();
    initial.push(0.0);
    let evolve_spec = spec.clone();
    let basis_scale: Vec<f64> = spec.capacities.iter().map(|c| (*c).max(1) as f64).collect();
    ControlProblem::builder("pricing-multi")
        .horizon(spec.n_periods)
        .dims(nl + 1, ni, ni)
        .initial_state(initial)
        .shocks(|_, draws, z| draw_uniforms(draws, z))
        .evolve(move |_, s, c, z, next| {
            let spec = &evolve_spec;
            let mut prices = [0.0; MAX_DIM];
            let mut arrivals = [0u32; MAX_DIM];
            let mut residual = [0i64; MAX_DIM];
            for j in 0..ni {
                let lambda = spec.clamp_intensity(j, c[j]);
                prices[j] = spec.price(j, lambda);
                arrivals[j] = poisson_inverse(lambda * dt, z[j]) as u32;
            }
            for k in 0..nl {
                residual[k] = s[k].round() as i64;
            }
            let sales = allocate(spec, &residual[..nl], &arrivals[..ni], &prices[..ni]);
            let mut revenue = 0.0;
            next[..nl].copy_from_slice(&s[..nl]);
            for j in 0..ni {
                revenue += prices[j] * sales[j] as f64;
                for k in 0..nl {
                    if spec.incidence[k][j] == 1 {
                        next[k] -= sales[j] as f64;
                    }
                }
            }
            next[nl] = revenue;
        })
        .period_utility(move |_, next, _, _| next[nl])
        .basis(spec.basis_dim(), move |_, s, out| {
            out.iter_mut().for_each(|v| *v = 0.0);
            for f in 0..=nl {
                let value = if f == 0 { 1.0 } else { s[f - 1] / basis_scale[f - 1] };
                for j in 0..ni {
                    out[(f * ni + j) * ni + j] = value;
                }
            }
        })
        .build()
}

/// Starting point with every intensity at `level`: `c0 = level` and
/// `theta_t` constant term `level`, slopes zero.
pub fn network_initial_params(spec: &NetworkSpec, level: f64) -> PolicyParameters {
    let ni = spec.n_itineraries();
    let mut theta = vec![0.0; spec.basis_dim()];
    theta[..ni].iter_mut().for_each(|v| *v = level);
    PolicyParameters::new(vec![level; ni], vec![theta; spec.n_periods - 1])
}

/// Time-invariant deterministic pricing problem
/// `max sum_j p_j(lambda_j) lambda_j T  s.t.  A lambda T <= n^c`.
#[derive(Debug, Clone, PartialEq)]
pub struct Relaxation {
    pub lambda: Vec<f64>,
    pub prices: Vec<f64>,
    /// Leg shadow prices.
    pub duals: Vec<f64>,
    pub iterations: usize,
}

impl Relaxation {
    pub fn revenue(&self, spec: &NetworkSpec) -> f64 {
        self.lambda
            .iter()
            .zip(&self.prices)
            .map(|(l, p)| l * p * spec.season)
            .sum()
    }
}

/// Revenue-maximizing intensity of itinerary `j` when each sale costs `pi`.
fn best_response(spec: &NetworkSpec, j: usize, pi: f64) -> f64 {
    // d/dl [p(l) l] = p0 (log(l0/l)/e + 1 - 1/e) = pi
    let l = spec.lambda0[j] * (spec.eps0[j] - 1.0 - spec.eps0[j] * pi / spec.p0[j]).exp();
    spec.clamp_intensity(j, l)
}

/// Solves the deterministic relaxation through its leg-price dual. For
/// shadow prices `mu >= 0` each itinerary's intensity has a closed form and
/// the dual `D(mu)` is smooth and convex. Every candidate set of binding legs
/// is solved by damped Newton iteration on `D` restricted to those legs; the
/// candidate meeting the KKT conditions (non-negative prices on binding
/// legs, capacity respected on the others) is the optimum.
pub fn deterministic_relaxation(spec: &NetworkSpec) -> Result<Relaxation> {
    spec.validate()?;
    let dual = Dual { spec };
    let nl = spec.n_legs();
    let mut best: Option<(f64, Vec<f64>, usize)> = None;
    let mut total_iters = 0;
    for mask in 0u32..(1 << nl) {
        let active: Vec<usize> = (0..nl).filter(|k| mask & (1 << k) != 0).collect();
        let Some((mu, iters)) = dual.newton(&active) else {
            continue;
        };
        total_iters += iters;
        let g = dual.gradient(&mu);
        let tol = 1e-7 * (1.0 + spec.capacities.iter().map(|c| *c as f64).fold(0.0, f64::max));
        let kkt = active.iter().all(|&k| mu[k] >= 0.0) && (0..nl).all(|k| g[k] >= -tol);
        if kkt {
            let value = dual.value(&mu);
            if best.as_ref().is_none_or(|(v, _, _)| value < *v) {
                best = Some((value, mu, total_iters));
            }
        }
    }
    let Some((_, mu, iterations)) = best else {
        return Err(EmcError::NoConvergence {
            iterations: total_iters,
            detail: "no set of binding legs satisfied the optimality conditions".into(),
        });
    };
    let lambda = dual.lambdas(&mu);
    let prices = (0..spec.n_itineraries()).map(|j| spec.price(j, lambda[j])).collect();
    Ok(Relaxation {
        lambda,
        prices,
        duals: mu,
        iterations,
    })
}

struct Dual<'a> {
    spec: &'a NetworkSpec,
}

impl Dual<'_> {
    fn leg_price(&self, mu: &[f64], j: usize) -> f64 {
        (0..self.spec.n_legs()).filter(|&k| self.spec.uses(k, j)).map(|k| mu[k]).sum()
    }

    fn lambdas(&self, mu: &[f64]) -> Vec<f64> {
        (0..self.spec.n_itineraries())
            .map(|j| best_response(self.spec, j, self.leg_price(mu, j)))
            .collect()
    }

    fn value(&self, mu: &[f64]) -> f64 {
        let s = self.spec;
        let l = self.lambdas(mu);
        let mut v: f64 = (0..s.n_itineraries())
            .map(|j| (s.price(j, l[j]) - self.leg_price(mu, j)) * l[j] * s.season)
            .sum();
        v += mu.iter().zip(&s.capacities).map(|(m, c)| m * *c as f64).sum::<f64>();
        v
    }

    /// `n^c - A lambda(mu) T`.
    fn gradient(&self, mu: &[f64]) -> Vec<f64> {
        let s = self.spec;
        let l = self.lambdas(mu);
        (0..s.n_legs())
            .map(|k| {
                s.capacities[k] as f64
                    - (0..s.n_itineraries()).filter(|&j| s.uses(k, j)).map(|j| l[j] * s.season).sum::<f64>()
            })
            .collect()
    }

    /// `A diag(eps_j lambda_j T / p0_j) A'`, with clamped itineraries contributing nothing.
    fn hessian(&self, mu: &[f64]) -> Vec<Vec<f64>> {
        let s = self.spec;
        let nl = s.n_legs();
        let l = self.lambdas(mu);
        let mut h = vec![vec![0.0; nl]; nl];
        for j in 0..s.n_itineraries() {
            let top = s.lambda_max(j);
            let interior = l[j] > CLAMP_DELTA * top && l[j] < (1.0 - CLAMP_DELTA) * top;
            if !interior {
                continue;
            }
            let w = s.eps0[j] * l[j] * s.season / s.p0[j];
            for a in 0..nl {
                for b in 0..nl {
                    if s.uses(a, j) && s.uses(b, j) {
                        h[a][b] += w;
                    }
                }
            }
        }
        h
    }

    /// Minimizes `D` over the legs in `active`, others held at zero.
    fn newton(&self, active: &[usize]) -> Option<(Vec<f64>, usize)> {
        let nl = self.spec.n_legs();
        let mut mu = vec![0.0; nl];
        if active.is_empty() {
            return Some((mu, 0));
        }
        for it in 1..=200 {
            let g = self.gradient(&mu);
            let h = self.hessian(&mu);
            let ga: Vec<f64> = active.iter().map(|&k| g[k]).collect();
            let ha: Vec<Vec<f64>> = active
                .iter()
                .map(|&a| active.iter().map(|&b| h[a][b]).collect())
                .collect();
            let step = solve_linear(ha, ga.clone()).unwrap_or(ga);
            let d0 = self.value(&mu);
            let mut t = 1.0;
            let mut moved = false;
            for _ in 0..60 {
                let mut cand = mu.clone();
                for (i, &k) in active.iter().enumerate() {
                    cand[k] -= t * step[i];
                }
                if self.value(&cand) <= d0 {
                    let change: f64 = active.iter().map(|&k| (cand[k] - mu[k]).abs()).sum();
                    mu = cand;
                    moved = change > 0.0;
                    if change <= 1e-12 * (1.0 + mu.iter().map(|m| m.abs()).sum::<f64>()) {
                        return Some((mu, it));
                    }
                    break;
                }
                t *= 0.5;
            }
            if !moved {
                return Some((mu, it));
            }
        }
        None
    }
}

/// Gaussian elimination with partial pivoting; `None` when singular.
fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for c in col..n {
                a[row][c] -= f * a[col][c];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|c| a[row][c] * x[c]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Rationing rule of a fixed-price heuristic.
#[derive(Debug, Clone, PartialEq)]
pub enum Rationing {
    /// Shared inventory; itinerary `j` closes once a leg it uses has no seat
    /// left. Arrivals of one period that do not all fit are rationed by
    /// [`allocate`], as in the pricing problem itself.
    MakeToOrder,
    /// Seats pre-allocated per itinerary; `j` closes when its block is gone.
    MakeToStock(Vec<u32>),
}

/// Prices fixed at the deterministic optimum, with MTO or MTS rationing.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPricePolicy {
    pub lambda: Vec<f64>,
    pub prices: Vec<f64>,
    pub rationing: Rationing,
}

/// Seat blocks for make-to-stock: each leg's capacity is split over its
/// itineraries in proportion to `lambda_j`, and an itinerary gets the
/// smallest share over its legs, rounded down. Seats lost to rounding stay
/// unsold. When every leg binds in the relaxation this is `floor(lambda_j T)`.
pub fn mts_allocation(spec: &NetworkSpec, lambda: &[f64]) -> Vec<u32> {
    let nl = spec.n_legs();
    let ni = spec.n_itineraries();
    (0..ni)
        .map(|j| {
            let share = (0..nl)
                .filter(|&k| spec.uses(k, j))
                .map(|k| {
                    let total: f64 = (0..ni).filter(|&i| spec.uses(k, i)).map(|i| lambda[i]).sum();
                    spec.capacities[k] as f64 * lambda[j] / total
                })
                .fold(f64::INFINITY, f64::min);
            // guard against shares like 187.99999999 that should be whole
            (share + 1e-9).floor().max(0.0) as u32
        })
        .collect()
}

pub fn mto_policy(_spec: &NetworkSpec, relaxation: &Relaxation) -> FixedPricePolicy {
    FixedPricePolicy {
        lambda: relaxation.lambda.clone(),
        prices: relaxation.prices.clone(),
        rationing: Rationing::MakeToOrder,
    }
}

pub fn mts_policy(spec: &NetworkSpec, relaxation: &Relaxation) -> FixedPricePolicy {
    FixedPricePolicy {
        lambda: relaxation.lambda.clone(),
        prices: relaxation.prices.clone(),
        rationing: Rationing::MakeToStock(mts_allocation(spec, &relaxation.lambda)),
    }
}

/// Per-path revenue of a fixed-price heuristic.
#[derive(Debug, Clone, PartialEq)]
pub struct RevenuePaths {
    pub total: Vec<f64>,
    /// `per_period[l][t]`: revenue of path `l` in period `t`.
    pub per_period: Vec<Vec<f64>>,
    /// Cumulative sales per itinerary at the end of each path.
    pub sold: Vec<Vec<u32>>,
}

impl RevenuePaths {
    pub fn period(&self, t: usize) -> Vec<f64> {
        self.per_period.iter().map(|p| p[t]).collect()
    }
}

/// Simulates a fixed-price heuristic. Arrivals at period `t` on path `l` use
/// the uniforms at address `(l, t)` in the same order as the pricing
/// problem's shock sampler.
pub fn simulate_fixed_price(
    spec: &NetworkSpec,
    policy: &FixedPricePolicy,
    n_paths: usize,
    block: CrnBlock,
) -> Result<RevenuePaths> {
    spec.validate()?;
    let ni = spec.n_itineraries();
    let nl = spec.n_legs();
    if policy.lambda.len() != ni || policy.prices.len() != ni {
        return invalid("policy needs one intensity and price per itinerary");
    }
    if let Rationing::MakeToStock(alloc) = &policy.rationing {
        if alloc.len() != ni || spec.residual(alloc).iter().any(|r| *r < 0) {
            return invalid("make-to-stock blocks must be feasible for the leg capacities");
        }
    }
    let dt = spec.period_length();
    let results = exec::map_indexed(n_paths, |l| {
        let mut sold = vec![0u32; ni];
        let mut per_period = Vec::with_capacity(spec.n_periods);
        let mut u = vec![0.0; ni];
        for t in 0..spec.n_periods {
            let mut draws = block.draws(l as u32, t as u32);
            draw_uniforms(&mut draws, &mut u);
            let arrivals: Vec<u32> = (0..ni)
                .map(|j| poisson_inverse(policy.lambda[j] * dt, u[j]) as u32)
                .collect();
            let sales = match &policy.rationing {
                Rationing::MakeToStock(alloc) => (0..ni).map(|j| arrivals[j].min(alloc[j] - sold[j])).collect(),
                Rationing::MakeToOrder => allocate(spec, &spec.residual(&sold), &arrivals, &policy.prices),
            };
            let mut revenue = 0.0;
            for j in 0..ni {
                sold[j] += sales[j];
                revenue += policy.prices[j] * sales[j] as f64;
            }
            per_period.push(revenue);
        }
        debug_assert!(spec.residual(&sold).iter().take(nl).all(|r| *r >= 0));
        (per_period, sold)
    });
    let mut out = RevenuePaths {
        total: Vec::with_capacity(n_paths),
        per_period: Vec::with_capacity(n_paths),
        sold: Vec::with_capacity(n_paths),
    };
    for (per_period, sold) in results {
        out.total.push(per_period.iter().sum());
        out.per_period.push(per_period);
        out.sold.push(sold);
    }
    Ok(out)
}

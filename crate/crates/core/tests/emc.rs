use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use emc_core::models::growth::{build_growth, growth_analytic, growth_optimal_params, GrowthBasis, GrowthParams};
use emc_core::models::network::{build_network_pricing, network_initial_params, NetworkSpec};
use emc_core::models::rbc::{build_rbc, RbcParams};
use emc_core::models::single::{build_single_pricing, SinglePricingParams};
use emc_core::models::logistic_fraction;
use emc_core::{
    exec, simulate_paths, solve, solve_general, surrogate_full, surrogate_tail, ControlProblem, CrnStream, EmcConfig,
    FrozenStates, IterationTrace, PolicyParameters, Start, StepScale,
};
use rand::{Rng, SeedableRng};

fn growth() -> ControlProblem {
    build_growth(&GrowthParams::default(), GrowthBasis::Affine).unwrap()
}

/// Growth with the same dynamics written as one utility of the whole path.
fn growth_general(counter: Option<Arc<AtomicUsize>>) -> ControlProblem {
    let GrowthParams { a, b, s0, .. } = GrowthParams::default();
    ControlProblem::builder("growth-general")
        .horizon(3)
        .dims(1, 1, 1)
        .initial_state(vec![s0])
        .shocks(|_, d, z| z[0] = rand_distr::Distribution::sample(&rand_distr::StandardNormal, d))
        .evolve(move |_, s, c, z, next| {
            if let Some(n) = &counter {
                n.fetch_add(1, Ordering::Relaxed);
            }
            next[0] = s[0] * (1.0 - logistic_fraction(c[0])) * (a + b * z[0]).exp();
        })
        .general_utility(|p| {
            let mut u = 0.0;
            for t in 0..p.horizon() {
                u += (p.state(t)[0] * logistic_fraction(p.control(t)[0])).ln();
            }
            u + p.state(p.horizon())[0].ln()
        })
        .basis(2, |_, s, o| {
            o[0] = 1.0;
            o[1] = s[0];
        })
        .build()
        .unwrap()
}

fn random_params(rng: &mut impl Rng, d: usize, periods: usize) -> PolicyParameters {
    PolicyParameters::new(
        vec![rng.random_range(-1.0..1.5)],
        (1..periods).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect(),
    )
}

#[test]
fn tail_differences_equal_full_differences() {
    let p = growth();
    let mut rng = rand::rngs::StdRng::seed_from_u64(2024);
    let block = CrnStream::new(31).guard_block(1);
    let n = 500;
    for pair in 0..100 {
        let x = random_params(&mut rng, 2, 3);
        let t = 1 + pair % 2;
        let y = x.with_block(t, &[rng.random_range(-1.0..1.5), rng.random_range(-1.0..1.0)]);
        let batch = simulate_paths(&p, &x, n, block, Start::Initial).unwrap();
        let frozen = FrozenStates::from_batch(&batch, t).unwrap();
        let (tx, _) = surrogate_tail(&p, &x, &frozen, block).unwrap();
        let (ty, _) = surrogate_tail(&p, &y, &frozen, block).unwrap();
        let (fx, _) = surrogate_full(&p, &x, n, block).unwrap();
        let (fy, _) = surrogate_full(&p, &y, n, block).unwrap();
        let scale = fx.abs().max(fy.abs()).max(1.0);
        assert!(
            ((ty - tx) - (fy - fx)).abs() <= 1e-12 * scale,
            "pair {pair}, t {t}: tail {} full {}",
            ty - tx,
            fy - fx
        );
    }
}

/// Checks the guard chain of every sweep by recomputing the full guard
/// surrogate after each sub-step.
fn assert_guarded(p: &ControlProblem, x0: &PolicyParameters, cfg: &EmcConfig, trace: &IterationTrace) {
    let mut x_prev = x0.clone();
    for r in &trace.records {
        assert!(r.value >= r.start_value, "sweep {} lost value", r.k);
        let guard = CrnStream::new(cfg.seed).guard_block(r.k as u32);
        let mut x = x_prev.clone();
        let mut last = surrogate_full(p, &x, cfg.n_paths, guard).unwrap().0;
        assert_eq!(last, r.start_value);
        for s in &r.substeps {
            if s.accepted {
                assert!(s.candidate_value > s.incumbent_value);
            } else {
                assert!(s.candidate_value <= s.incumbent_value);
            }
            x = x.with_block(s.period, s.chosen());
            let now = surrogate_full(p, &x, cfg.n_paths, guard).unwrap().0;
            let tol = 1e-12 * now.abs().max(1.0);
            assert!(now >= last - tol, "sweep {} period {}: {last} -> {now}", r.k, s.period);
            if s.accepted {
                assert!(now > last - tol);
            }
            last = now;
        }
        assert!((last - r.value).abs() <= 1e-12 * last.abs().max(1.0));
        x_prev = r.params.clone();
    }
}

#[test]
fn guard_never_loses_value_across_models_and_seeds() {
    let single = build_single_pricing(&SinglePricingParams {
        capacity: 10,
        ..Default::default()
    })
    .unwrap();
    let spec = NetworkSpec {
        capacities: vec![30, 20],
        lambda0: vec![30.0; 3],
        n_periods: 3,
        ..NetworkSpec::three_node()
    };
    let network = build_network_pricing(&spec).unwrap();
    let rbc = build_rbc(&RbcParams {
        horizon: 4,
        ..Default::default()
    })
    .unwrap();
    let g = growth();
    let cases: Vec<(&ControlProblem, PolicyParameters)> = vec![
        (&g, g.zero_params()),
        (&single, single.zero_params()),
        (&network, network_initial_params(&spec, 10.0)),
        (&rbc, rbc.zero_params()),
    ];
    for (p, x0) in &cases {
        for seed in 0..5u64 {
            let cfg = EmcConfig::new(2, 60, 20, seed);
            let (_, trace) = solve(p, x0, &cfg).unwrap();
            assert_guarded(p, x0, &cfg, &trace);
        }
    }
}

#[test]
fn evolve_calls_match_the_cost_model() {
    let counter = Arc::new(AtomicUsize::new(0));
    let p = growth_general(Some(counter.clone()));
    let (n, m, t, d, k) = (40usize, 15usize, 3usize, 2usize, 2usize);
    solve_general(&p, &p.zero_params(), &EmcConfig::new(k, n, m, 5)).unwrap();
    // guard batch, (2dm + 2) tail runs per period t >= 1, (2m + 2) full runs for c0
    let tails: usize = (1..t).map(|s| t - s).sum();
    let per_sweep = n * t + (2 * d * m + 2) * n * tails + (2 * m + 2) * n * t;
    assert_eq!(counter.load(Ordering::Relaxed), k * per_sweep);
}

#[test]
fn general_objective_agrees_with_separable_form() {
    let sep = growth();
    let gen = growth_general(None);
    let mut rng = rand::rngs::StdRng::seed_from_u64(9);
    let block = CrnStream::new(4).guard_block(1);
    for _ in 0..10 {
        let x = random_params(&mut rng, 2, 3);
        let (a, _) = surrogate_full(&sep, &x, 300, block).unwrap();
        let (b, _) = surrogate_full(&gen, &x, 300, block).unwrap();
        assert!((a - b).abs() < 1e-12 * a.abs().max(1.0));
        let batch = simulate_paths(&gen, &x, 300, block, Start::Initial).unwrap();
        let frozen = FrozenStates::from_batch(&batch, 2).unwrap();
        let y = x.with_block(2, &[0.3, -0.2]);
        let (fa, _) = surrogate_full(&gen, &y, 300, block).unwrap();
        let (fb, _) = surrogate_tail(&gen, &y, &frozen, block).unwrap();
        // general tails report the whole spliced path utility
        assert!((fa - fb).abs() < 1e-12 * fa.abs().max(1.0));
    }
    let cfg = EmcConfig::new(2, 200, 100, 3);
    let (xs, ts) = solve(&sep, &sep.zero_params(), &cfg).unwrap();
    let (xg, tg) = solve_general(&gen, &gen.zero_params(), &cfg).unwrap();
    assert!(xs.distance(&xg) < 1e-8, "{xs:?} vs {xg:?}");
    for (a, b) in ts.records.iter().zip(&tg.records) {
        assert!((a.value - b.value).abs() < 1e-10);
    }
}

#[test]
fn min_utility_objective_is_solved_monotonically() {
    // worst-period consumption; no separable form exists
    let GrowthParams { a, b, .. } = GrowthParams::default();
    let p = ControlProblem::builder("growth-min")
        .horizon(3)
        .dims(1, 1, 1)
        .initial_state(vec![1.0])
        .shocks(|_, d, z| z[0] = rand_distr::Distribution::sample(&rand_distr::StandardNormal, d))
        .evolve(move |_, s, c, z, next| next[0] = s[0] * (1.0 - logistic_fraction(c[0])) * (a + b * z[0]).exp())
        .general_utility(|p| {
            (0..p.horizon())
                .map(|t| p.state(t)[0] * logistic_fraction(p.control(t)[0]))
                .chain([p.state(p.horizon())[0]])
                .fold(f64::INFINITY, f64::min)
        })
        .basis(2, |_, s, o| {
            o[0] = 1.0;
            o[1] = s[0];
        })
        .build()
        .unwrap();
    let x0 = p.zero_params();
    let cfg = EmcConfig::new(3, 200, 100, 17);
    let (x, trace) = solve_general(&p, &x0, &cfg).unwrap();
    assert_guarded(&p, &x0, &cfg, &trace);
    let eval = CrnStream::new(18).eval_block();
    let (v0, _) = surrogate_full(&p, &x0, 20_000, eval).unwrap();
    let (v1, se) = surrogate_full(&p, &x, 20_000, eval).unwrap();
    assert!(v1 > v0 + 3.0 * se, "{v0} -> {v1}");
    assert!(solve_general(&growth(), &x0, &cfg).is_err());
}

#[test]
fn product_utility_matches_independent_monte_carlo() {
    // U = g_0 * g_1 * s_2 under fixed fractions with s_0 = 1:
    // E[U] = f0 (1-f0)^2 f1 (1-f1) E[e^{2(a+bz_1)}] E[e^{a+bz_2}].
    let GrowthParams { a, b, .. } = GrowthParams::default();
    let p = ControlProblem::builder("growth-product")
        .horizon(2)
        .dims(1, 1, 1)
        .initial_state(vec![1.0])
        .shocks(|_, d, z| z[0] = rand_distr::Distribution::sample(&rand_distr::StandardNormal, d))
        .evolve(move |_, s, c, z, next| next[0] = s[0] * (1.0 - logistic_fraction(c[0])) * (a + b * z[0]).exp())
        .general_utility(|p| {
            let g0 = p.state(0)[0] * logistic_fraction(p.control(0)[0]);
            let g1 = p.state(1)[0] * logistic_fraction(p.control(1)[0]);
            g0 * g1 * p.state(2)[0]
        })
        .basis(1, |_, _, o| o[0] = 1.0)
        .build()
        .unwrap();
    let x = PolicyParameters::new(vec![0.4], vec![vec![-0.3]]);
    let (f0, f1) = (logistic_fraction(0.4), logistic_fraction(-0.3));
    let exact = f0 * (1.0 - f0).powi(2) * f1 * (1.0 - f1) * (2.0 * a + 2.0 * b * b).exp() * (a + b * b / 2.0).exp();
    let (m, se) = surrogate_full(&p, &x, 200_000, CrnStream::new(8).eval_block()).unwrap();
    assert!((m - exact).abs() < 3.0 * se, "{m} vs {exact} ({se})");
    let mut rng = rand::rngs::StdRng::seed_from_u64(99);
    let samples: Vec<f64> = (0..200_000)
        .map(|_| {
            let z1: f64 = rng.sample(rand_distr::StandardNormal);
            let z2: f64 = rng.sample(rand_distr::StandardNormal);
            let s1 = (1.0 - f0) * (a + b * z1).exp();
            f0 * (s1 * f1) * s1 * (1.0 - f1) * (a + b * z2).exp()
        })
        .collect();
    let (mc, mc_se) = exec::mean_stderr(&samples);
    assert!((m - mc).abs() < 3.0 * (se * se + mc_se * mc_se).sqrt());
}

#[test]
fn optimum_value_matches_closed_form_with_many_paths() {
    let params = GrowthParams::default();
    let p = growth();
    let x = growth_optimal_params(&params, GrowthBasis::Affine).unwrap().unwrap();
    let (m, se) = surrogate_full(&p, &x, 100_000, CrnStream::new(1).eval_block()).unwrap();
    let v0 = growth_analytic(&params).unwrap().1;
    assert!((m - v0).abs() < 3.0 * se, "{m} vs {v0} ({se})");
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let p = build_rbc(&RbcParams {
        horizon: 4,
        ..Default::default()
    })
    .unwrap();
    let cfg = EmcConfig::new(2, 300, 30, 21).with_step_scale(StepScale::Iterate {
        a_factor: 1.0,
        b_factor: 1.0,
        floor: 1.0,
    });
    let run = |threads| exec::with_threads(threads, || solve(&p, &p.zero_params(), &cfg).unwrap());
    let (x1, t1) = run(1);
    for threads in [2, 3, 5] {
        let (x, t) = run(threads);
        assert_eq!(x.flatten(), x1.flatten());
        for (a, b) in t.records.iter().zip(&t1.records) {
            assert_eq!(a.value.to_bits(), b.value.to_bits());
            assert_eq!(a.substeps, b.substeps);
        }
    }
}

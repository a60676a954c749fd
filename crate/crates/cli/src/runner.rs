//! Runs a configured experiment and writes its result files.
//!
//! Output layout under `output_dir`:
//!
//! | file | content |
//! |------|---------|
//! | `trace.csv` | one row per EM-C sweep and variant |
//! | `policy.csv` | final `c0` and `theta_t`, long format |
//! | `stats.csv` | distribution summaries of EM-C and every baseline, in and out of sample |
//! | `plotdata/objective.csv` | objective against sweep, baselines as flat series |
//! | `plotdata/substeps.csv` | guard values of every sub-step |
//! | `plotdata/policy_<variant>.csv` | policy surfaces on a state grid |
//!
//! Wall times go to stderr only, so repeated runs give byte-identical files.

use std::path::PathBuf;
use std::time::Instant;

use emc_core::models::growth::{build_growth, growth_analytic};
use emc_core::models::logistic_fraction;
use emc_core::models::network::{
    build_network_pricing, deterministic_relaxation, mto_policy, mts_policy, network_initial_params,
    simulate_fixed_price, FixedPricePolicy, NetworkSpec, Rationing,
};
use emc_core::models::rbc::{build_rbc, consumption_of_control, rbc_steady_state, LqPolicy, RbcParams};
use emc_core::models::single::{build_single_pricing, price_of_control, PluginPolicy, SinglePricingParams};
use emc_core::{
    exec, policy_control, policy_utilities, simulate_paths, solve, ControlProblem, CrnBlock, CrnStream,
    IterationTrace, Policy, PolicyParameters, Start,
};

use crate::config::{Experiment, ExperimentConfig, GrowthSection, GridSection};
use crate::grid::{emit_policy_grid, GridAxis, GridColumn, GridSpec};
use crate::output::{num, write_table, Table};
use crate::stats::{summarize, StatsSummary};
use crate::CliError;

/// Per-path samples of named quantities; `total` always comes first.
pub type Quantities = Vec<(String, Vec<f64>)>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sample {
    /// The training seed's final guard stream, `paths` paths.
    In,
    /// The evaluation seed, `eval_paths` paths.
    Out,
}

impl Sample {
    pub fn label(self) -> &'static str {
        match self {
            Sample::In => "in",
            Sample::Out => "out",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatsRow {
    pub variant: String,
    pub policy: String,
    pub quantity: String,
    pub sample: Sample,
    pub seed: u64,
    pub summary: StatsSummary,
}

#[derive(Debug, Clone)]
pub struct VariantReport {
    pub name: String,
    pub params: PolicyParameters,
    pub trace: IterationTrace,
    pub stats: Vec<StatsRow>,
}

impl VariantReport {
    pub fn stat(&self, policy: &str, quantity: &str, sample: Sample) -> Option<&StatsSummary> {
        self.stats
            .iter()
            .find(|r| r.policy == policy && r.quantity == quantity && r.sample == sample)
            .map(|r| &r.summary)
    }
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub experiment: Experiment,
    pub variants: Vec<VariantReport>,
    pub files: Vec<PathBuf>,
}

impl RunReport {
    pub fn variant(&self, name: &str) -> Option<&VariantReport> {
        self.variants.iter().find(|v| v.name == name)
    }
}

enum Baseline {
    Policy(Box<dyn Policy>),
    FixedPrice(NetworkSpec, FixedPricePolicy),
}

type GridBuilder = Box<dyn Fn(&ControlProblem, &PolicyParameters, usize, usize) -> emc_core::Result<Table>>;

struct Variant {
    name: String,
    problem: ControlProblem,
    x0: PolicyParameters,
    baselines: Vec<(String, Baseline)>,
    /// State coordinate holding last period's revenue, with the 1-based
    /// periods to summarize separately.
    period_revenue: Option<(usize, Vec<usize>)>,
    grid: GridBuilder,
}

impl Variant {
    fn evaluate_emc(&self, params: &PolicyParameters, block: CrnBlock, n: usize) -> emc_core::Result<Quantities> {
        let batch = simulate_paths(&self.problem, params, n, block, Start::Initial)?;
        let mut q = vec![("total".to_string(), batch.path_utilities().to_vec())];
        if let Some((idx, periods)) = &self.period_revenue {
            for &p in periods {
                q.push((format!("period_{p}"), (0..n).map(|l| batch.state(l, p)[*idx]).collect()));
            }
        }
        Ok(q)
    }

    fn evaluate_baseline(&self, baseline: &Baseline, block: CrnBlock, n: usize) -> emc_core::Result<Quantities> {
        match baseline {
            Baseline::Policy(p) => Ok(vec![(
                "total".to_string(),
                policy_utilities(&self.problem, p.as_ref(), n, block, Start::Initial)?,
            )]),
            Baseline::FixedPrice(spec, policy) => {
                let r = simulate_fixed_price(spec, policy, n, block)?;
                let mut q = vec![("total".to_string(), r.total.clone())];
                if let Some((_, periods)) = &self.period_revenue {
                    for &p in periods {
                        q.push((format!("period_{p}"), r.period(p - 1)));
                    }
                }
                Ok(q)
            }
        }
    }
}

fn runtime(e: emc_core::EmcError) -> CliError {
    CliError::Runtime(e)
}

fn unsupported_baseline(e: emc_core::EmcError) -> CliError {
    CliError::Config(format!("baseline not available for these parameters: {e}"))
}

fn grid_periods(problem: &ControlProblem, grid: &GridSection) -> Vec<usize> {
    match grid.period {
        Some(t) => vec![t],
        None => (1..problem.horizon()).collect(),
    }
}

fn growth_variants(config: &ExperimentConfig) -> Result<Vec<Variant>, CliError> {
    let section = &config.growth;
    let params = section.params();
    let wants_analytic = config.baselines().iter().any(|b| b == "analytic");
    let analytic = if wants_analytic {
        Some(growth_analytic(&params).map_err(unsupported_baseline)?.0)
    } else {
        None
    };
    let mut out = Vec::new();
    for &name in &section.bases {
        let basis = GrowthSection::basis(name);
        let problem = build_growth(&params, basis).map_err(runtime)?;
        let mut baselines: Vec<(String, Baseline)> = Vec::new();
        if let Some(controls) = analytic.clone() {
            let policy = move |t: usize, _: &[f64], out: &mut [f64]| out[0] = controls[t];
            baselines.push(("analytic".into(), Baseline::Policy(Box::new(policy))));
        }
        let s0 = params.s0;
        let analytic_grid = analytic.clone();
        let grid: GridBuilder = Box::new(move |problem, x, t, points| {
            let spec = GridSpec {
                period: t,
                base_state: vec![s0],
                axes: vec![GridAxis::new("s", 0, 0.1 * s0, 3.0 * s0, points)],
            };
            let control = |t: usize, s: &[f64]| policy_control(problem, t, s, x).map(|c| c[0]).unwrap_or(f64::NAN);
            let mut cols = vec![
                GridColumn::new("control", control),
                GridColumn::new("consumption_fraction", move |t, s| logistic_fraction(control(t, s))),
            ];
            if let Some(c) = analytic_grid.clone() {
                cols.push(GridColumn::new("analytic_control", move |t, _| c[t]));
            }
            emit_policy_grid(problem, &spec, &cols)
        });
        out.push(Variant {
            name: format!("{name:?}").to_lowercase(),
            x0: problem.zero_params(),
            problem,
            baselines,
            period_revenue: None,
            grid,
        });
    }
    Ok(out)
}

fn single_variants(config: &ExperimentConfig) -> Result<Vec<Variant>, CliError> {
    let section = &config.pricing_single;
    let mut out = Vec::new();
    for &cap in &section.capacities {
        let params: SinglePricingParams = section.params(cap);
        let problem = build_single_pricing(&params).map_err(runtime)?;
        let mut baselines: Vec<(String, Baseline)> = Vec::new();
        let plugin = if config.baselines().iter().any(|b| b == "plug-in") {
            Some(PluginPolicy::new(&params).map_err(unsupported_baseline)?)
        } else {
            None
        };
        if let Some(p) = plugin.clone() {
            baselines.push(("plug-in".into(), Baseline::Policy(Box::new(p))));
        }
        let alpha = params.alpha;
        let grid: GridBuilder = Box::new(move |problem, x, t, _| {
            let spec = GridSpec {
                period: t,
                base_state: vec![cap as f64],
                axes: vec![GridAxis::new("R", 0, 0.0, cap as f64, cap as usize + 1)],
            };
            let control = |t: usize, s: &[f64]| policy_control(problem, t, s, x).map(|c| c[0]).unwrap_or(f64::NAN);
            let mut cols = vec![
                GridColumn::new("control", control),
                GridColumn::new("price", move |t, s| price_of_control(control(t, s), alpha)),
            ];
            if let Some(p) = plugin.clone() {
                cols.push(GridColumn::new("plugin_price", move |t, s: &[f64]| {
                    p.price(t, s[0].round() as u32).unwrap_or(f64::NAN)
                }));
            }
            emit_policy_grid(problem, &spec, &cols)
        });
        out.push(Variant {
            name: format!("nc{cap}"),
            x0: problem.zero_params(),
            problem,
            baselines,
            period_revenue: None,
            grid,
        });
    }
    Ok(out)
}

fn multi_variants(config: &ExperimentConfig) -> Result<Vec<Variant>, CliError> {
    let section = &config.pricing_multi;
    let spec = section.spec();
    let problem = build_network_pricing(&spec).map_err(runtime)?;
    let mut baselines: Vec<(String, Baseline)> = Vec::new();
    let wanted = config.baselines();
    let mut fixed: Vec<(String, Vec<f64>)> = Vec::new();
    if !wanted.is_empty() {
        let relax = deterministic_relaxation(&spec).map_err(runtime)?;
        for name in &wanted {
            let policy = if name == "mto" {
                mto_policy(&spec, &relax)
            } else {
                mts_policy(&spec, &relax)
            };
            if let Rationing::MakeToStock(alloc) = &policy.rationing {
                eprintln!("[emc] mts seat blocks {alloc:?}");
            }
            fixed.push((name.clone(), policy.prices.clone()));
            baselines.push((name.clone(), Baseline::FixedPrice(spec.clone(), policy)));
        }
    }
    let nl = spec.n_legs();
    let ni = spec.n_itineraries();
    let grid_spec = spec.clone();
    let grid: GridBuilder = Box::new(move |problem, x, t, points| {
        let mut base = grid_spec.capacities.iter().map(|c| *c as f64).collect::<Vec<_>>();
        base.push(0.0);
        let axes = (0..nl)
            .map(|k| GridAxis::new(&format!("R{}", k + 1), k, 0.0, grid_spec.capacities[k] as f64, points))
            .collect();
        let spec_g = GridSpec {
            period: t,
            base_state: base,
            axes,
        };
        let mut cols = Vec::new();
        for j in 0..ni {
            let sp = &grid_spec;
            cols.push(GridColumn::new(format!("price_{}", j + 1), move |t, s: &[f64]| {
                let c = policy_control(problem, t, s, x).map(|c| c[j]).unwrap_or(f64::NAN);
                sp.price(j, sp.clamp_intensity(j, c))
            }));
        }
        for (name, prices) in &fixed {
            for (j, p) in prices.iter().enumerate() {
                let p = *p;
                cols.push(GridColumn::new(format!("{name}_price_{}", j + 1), move |_, _| p));
            }
        }
        emit_policy_grid(problem, &spec_g, &cols)
    });
    Ok(vec![Variant {
        name: "network".into(),
        x0: network_initial_params(&spec, section.initial_level),
        problem,
        baselines,
        period_revenue: Some((nl, section.report_periods.clone())),
        grid,
    }])
}

fn rbc_variants(config: &ExperimentConfig) -> Result<Vec<Variant>, CliError> {
    let params: RbcParams = config.rbc.params();
    let steady = rbc_steady_state(&params).map_err(runtime)?;
    let problem = build_rbc(&params).map_err(runtime)?;
    let lq = LqPolicy::new(&params, &steady);
    let mut baselines: Vec<(String, Baseline)> = Vec::new();
    let with_lq = config.baselines().iter().any(|b| b == "lq");
    if with_lq {
        baselines.push(("lq".into(), Baseline::Policy(Box::new(lq))));
    }
    let k_star = steady.k_star;
    let grid: GridBuilder = Box::new(move |problem, x, t, points| {
        let spec = GridSpec {
            period: t,
            base_state: vec![k_star, 0.0],
            axes: vec![
                GridAxis::new("k_prev", 0, 0.5 * k_star, 1.5 * k_star, points),
                GridAxis::new("x", 1, -0.3, 0.3, points),
            ],
        };
        let control = |t: usize, s: &[f64]| policy_control(problem, t, s, x).map(|c| c[0]).unwrap_or(f64::NAN);
        let mut cols = vec![
            GridColumn::new("control", control),
            GridColumn::new("consumption", move |t, s: &[f64]| {
                consumption_of_control(&params, s[0], s[1], control(t, s))
            }),
        ];
        if with_lq {
            cols.push(GridColumn::new("lq_consumption", move |_, s: &[f64]| lq.consumption(s[0], s[1])));
        }
        emit_policy_grid(problem, &spec, &cols)
    });
    Ok(vec![Variant {
        name: format!("T{}", params.horizon),
        x0: problem.zero_params(),
        problem,
        baselines,
        period_revenue: None,
        grid,
    }])
}

fn variants(config: &ExperimentConfig) -> Result<Vec<Variant>, CliError> {
    match config.experiment {
        Experiment::Growth => growth_variants(config),
        Experiment::PricingSingle => single_variants(config),
        Experiment::PricingMulti => multi_variants(config),
        Experiment::Rbc => rbc_variants(config),
        Experiment::Custom => Err(CliError::Config("experiment `custom` is library-only".into())),
    }
}

/// Runs the experiment (on `emc.threads` workers when set) and writes all
/// output files.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunReport, CliError> {
    config.validate()?;
    match config.emc.threads {
        Some(p) => exec::with_threads(p, || run_inner(config)),
        None => run_inner(config),
    }
}

fn stats_rows(
    variant: &str,
    policy: &str,
    sample: Sample,
    seed: u64,
    quantities: Quantities,
) -> Result<Vec<StatsRow>, CliError> {
    quantities
        .into_iter()
        .map(|(quantity, values)| {
            Ok(StatsRow {
                variant: variant.into(),
                policy: policy.into(),
                quantity,
                sample,
                seed,
                summary: summarize(&values).map_err(runtime)?,
            })
        })
        .collect()
}

fn run_inner(config: &ExperimentConfig) -> Result<RunReport, CliError> {
    let emc = config.emc_config();
    let mut reports = Vec::new();
    let mut grids = Vec::new();
    for v in variants(config)? {
        let started = Instant::now();
        let (params, trace) = solve(&v.problem, &v.x0, &emc).map_err(runtime)?;
        for r in &trace.records {
            eprintln!(
                "[emc] {} {} k={} value={} stderr={} accepted={:?} ({:.1}s)",
                config.experiment.name(),
                v.name,
                r.k,
                r.value,
                r.stderr,
                r.accepted_by_period(),
                r.wall_time.as_secs_f64()
            );
        }
        let last_k = trace.records.last().map_or(1, |r| r.k) as u32;
        let streams = [
            (Sample::In, emc.seed, CrnStream::new(emc.seed).guard_block(last_k), emc.n_paths),
            (
                Sample::Out,
                config.eval_seed(),
                CrnStream::new(config.eval_seed()).eval_block(),
                config.eval_paths(),
            ),
        ];
        let mut stats = Vec::new();
        for &(sample, seed, block, n) in &streams {
            let q = v.evaluate_emc(&params, block, n).map_err(runtime)?;
            stats.extend(stats_rows(&v.name, "emc", sample, seed, q)?);
            for (name, b) in &v.baselines {
                let q = v.evaluate_baseline(b, block, n).map_err(runtime)?;
                stats.extend(stats_rows(&v.name, name, sample, seed, q)?);
            }
        }
        let mut grid_table: Option<Table> = None;
        for t in grid_periods(&v.problem, &config.grid) {
            let table = (v.grid)(&v.problem, &params, t, config.grid.points).map_err(runtime)?;
            match &mut grid_table {
                None => grid_table = Some(table),
                Some(acc) => acc.rows.extend(table.rows),
            }
        }
        if let Some(t) = grid_table {
            grids.push((v.name.clone(), t));
        }
        eprintln!("[emc] {} {} done in {:.1}s", config.experiment.name(), v.name, started.elapsed().as_secs_f64());
        reports.push(VariantReport {
            name: v.name,
            params,
            trace,
            stats,
        });
    }
    let files = write_outputs(config, &reports, &grids)?;
    Ok(RunReport {
        experiment: config.experiment,
        variants: reports,
        files,
    })
}

fn write_outputs(
    config: &ExperimentConfig,
    reports: &[VariantReport],
    grids: &[(String, Table)],
) -> Result<Vec<PathBuf>, CliError> {
    let dir = &config.output_dir;
    let horizon = reports
        .iter()
        .flat_map(|r| r.trace.records.first())
        .map(|r| r.substeps.len())
        .max()
        .unwrap_or(0);

    let mut header: Vec<String> = ["variant", "k", "start_value", "start_stderr", "value", "stderr", "gain", "param_step"]
        .map(String::from)
        .to_vec();
    header.extend((0..horizon).map(|t| format!("accepted_t{t}")));
    let mut trace = Table::new(header);
    let mut substeps = Table::new([
        "variant",
        "k",
        "period",
        "incumbent_value",
        "candidate_value",
        "accepted",
    ]);
    let mut objective = Table::new(["variant", "series", "k", "value", "stderr"]);
    let mut policy = Table::new(["variant", "period", "index", "value"]);
    let mut stats = Table::new([
        "variant", "policy", "quantity", "sample", "seed", "n", "mean", "stderr", "skewness", "kurtosis", "q01", "q05",
        "q95", "q99", "degenerate",
    ]);

    for rep in reports {
        let v = rep.name.clone();
        if let Some(first) = rep.trace.records.first() {
            objective.push(vec![v.clone(), "emc".into(), "0".into(), num(first.start_value), num(first.start_stderr)]);
        }
        for r in &rep.trace.records {
            let flags = r.accepted_by_period();
            let mut row = vec![
                v.clone(),
                r.k.to_string(),
                num(r.start_value),
                num(r.start_stderr),
                num(r.value),
                num(r.stderr),
                num(r.gain()),
                num(r.param_step),
            ];
            row.extend((0..horizon).map(|t| flags.get(t).map_or(String::new(), |f| u8::from(*f).to_string())));
            trace.push(row);
            objective.push(vec![v.clone(), "emc".into(), r.k.to_string(), num(r.value), num(r.stderr)]);
            for s in &r.substeps {
                substeps.push(vec![
                    v.clone(),
                    r.k.to_string(),
                    s.period.to_string(),
                    num(s.incumbent_value),
                    num(s.candidate_value),
                    u8::from(s.accepted).to_string(),
                ]);
            }
        }
        let k_max = rep.trace.records.len();
        for row in rep.stats.iter().filter(|r| r.policy != "emc" && r.quantity == "total" && r.sample == Sample::Out) {
            for k in 0..=k_max {
                objective.push(vec![
                    v.clone(),
                    row.policy.clone(),
                    k.to_string(),
                    num(row.summary.mean),
                    num(row.summary.stderr),
                ]);
            }
        }
        for t in 0..rep.trace.final_params.thetas.len() + 1 {
            for (i, value) in rep.params.block(t).iter().enumerate() {
                policy.push(vec![v.clone(), t.to_string(), i.to_string(), num(*value)]);
            }
        }
        for r in &rep.stats {
            let s = &r.summary;
            stats.push(vec![
                r.variant.clone(),
                r.policy.clone(),
                r.quantity.clone(),
                r.sample.label().into(),
                r.seed.to_string(),
                s.n.to_string(),
                num(s.mean),
                num(s.stderr),
                num(s.skewness),
                num(s.kurtosis),
                num(s.quantiles[0]),
                num(s.quantiles[1]),
                num(s.quantiles[2]),
                num(s.quantiles[3]),
                u8::from(s.degenerate).to_string(),
            ]);
        }
    }

    let mut files = Vec::new();
    let mut put = |rel: String, table: &Table| -> Result<(), CliError> {
        let path = dir.join(rel);
        write_table(&path, table)?;
        files.push(path);
        Ok(())
    };
    put("trace.csv".into(), &trace)?;
    put("policy.csv".into(), &policy)?;
    put("stats.csv".into(), &stats)?;
    put("plotdata/objective.csv".into(), &objective)?;
    put("plotdata/substeps.csv".into(), &substeps)?;
    for (name, table) in grids {
        put(format!("plotdata/policy_{name}.csv"), table)?;
    }
    Ok(files)
}

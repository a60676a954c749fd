//! Experiment configuration files (TOML).
//!
//! See `docs/config.md` for the schema and `configs/` for one example per
//! experiment.

use std::path::{Path, PathBuf};

use emc_core::models::growth::{GrowthBasis, GrowthParams};
use emc_core::models::network::NetworkSpec;
use emc_core::models::rbc::RbcParams;
use emc_core::models::single::SinglePricingParams;
use emc_core::{EmcConfig, StepScale};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Growth,
    PricingSingle,
    PricingMulti,
    Rbc,
    Custom,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Growth => "growth",
            Experiment::PricingSingle => "pricing-single",
            Experiment::PricingMulti => "pricing-multi",
            Experiment::Rbc => "rbc",
            Experiment::Custom => "custom",
        }
    }

    fn baselines(self) -> &'static [&'static str] {
        match self {
            Experiment::Growth => &["analytic"],
            Experiment::PricingSingle => &["plug-in"],
            Experiment::PricingMulti => &["mto", "mts"],
            Experiment::Rbc => &["lq"],
            Experiment::Custom => &[],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Baseline policies evaluated next to EM-C; all of the experiment's
    /// baselines when absent.
    pub baselines: Option<Vec<String>>,
    pub emc: EmcSection,
    #[serde(default)]
    pub growth: GrowthSection,
    #[serde(default)]
    pub pricing_single: SingleSection,
    #[serde(default)]
    pub pricing_multi: MultiSection,
    #[serde(default)]
    pub rbc: RbcSection,
    #[serde(default)]
    pub grid: GridSection,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmcSection {
    pub iters: usize,
    pub paths: usize,
    pub sa_iters: usize,
    pub seed: u64,
    #[serde(default)]
    pub rel_tol: f64,
    /// Paths for the final evaluation; defaults to `paths`.
    pub eval_paths: Option<usize>,
    /// Seed of the out-of-sample evaluation; defaults to `seed + 1`.
    pub eval_seed: Option<u64>,
    pub threads: Option<usize>,
    #[serde(default)]
    pub step: StepSection,
}

/// SA scales: `a0 = a_factor * max(|y0|, floor)` and likewise for `b0`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StepSection {
    pub a_factor: f64,
    pub b_factor: f64,
    pub floor: f64,
}

impl Default for StepSection {
    fn default() -> Self {
        StepSection {
            a_factor: 1.0,
            b_factor: 1.0,
            floor: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasisName {
    Linear,
    Affine,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GrowthSection {
    pub a: f64,
    pub b: f64,
    pub horizon: usize,
    pub s0: f64,
    pub bases: Vec<BasisName>,
}

impl Default for GrowthSection {
    fn default() -> Self {
        let p = GrowthParams::default();
        GrowthSection {
            a: p.a,
            b: p.b,
            horizon: p.horizon,
            s0: p.s0,
            bases: vec![BasisName::Linear, BasisName::Affine],
        }
    }
}

impl GrowthSection {
    pub fn params(&self) -> GrowthParams {
        GrowthParams {
            a: self.a,
            b: self.b,
            horizon: self.horizon,
            s0: self.s0,
        }
    }

    pub fn basis(name: BasisName) -> GrowthBasis {
        match name {
            BasisName::Linear => GrowthBasis::Linear,
            BasisName::Affine => GrowthBasis::Affine,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SingleSection {
    pub a: f64,
    pub alpha: f64,
    pub season: f64,
    pub periods: usize,
    pub capacities: Vec<u32>,
}

impl Default for SingleSection {
    fn default() -> Self {
        let p = SinglePricingParams::default();
        SingleSection {
            a: p.a,
            alpha: p.alpha,
            season: p.season,
            periods: p.n_periods,
            capacities: vec![20, 10, 5],
        }
    }
}

impl SingleSection {
    pub fn params(&self, capacity: u32) -> SinglePricingParams {
        SinglePricingParams {
            a: self.a,
            alpha: self.alpha,
            season: self.season,
            n_periods: self.periods,
            capacity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MultiSection {
    pub incidence: Vec<Vec<u8>>,
    pub capacities: Vec<u32>,
    pub p0: Vec<f64>,
    pub eps0: Vec<f64>,
    pub lambda0: Vec<f64>,
    pub season: f64,
    pub periods: usize,
    /// Starting intensity for every itinerary (`c0` and the constant terms).
    pub initial_level: f64,
    /// Periods (1-based) whose revenue is summarized separately.
    pub report_periods: Vec<usize>,
}

impl Default for MultiSection {
    fn default() -> Self {
        let s = NetworkSpec::three_node();
        MultiSection {
            incidence: s.incidence,
            capacities: s.capacities,
            p0: s.p0,
            eps0: s.eps0,
            lambda0: s.lambda0,
            season: s.season,
            periods: s.n_periods,
            initial_level: 100.0,
            report_periods: vec![3, 6],
        }
    }
}

impl MultiSection {
    pub fn spec(&self) -> NetworkSpec {
        NetworkSpec {
            incidence: self.incidence.clone(),
            capacities: self.capacities.clone(),
            p0: self.p0.clone(),
            eps0: self.eps0.clone(),
            lambda0: self.lambda0.clone(),
            season: self.season,
            n_periods: self.periods,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RbcSection {
    pub beta: f64,
    pub gamma: f64,
    pub tau: f64,
    pub delta: f64,
    pub rho: f64,
    pub sigma_e: f64,
    pub horizon: usize,
}

impl Default for RbcSection {
    fn default() -> Self {
        let p = RbcParams::default();
        RbcSection {
            beta: p.beta,
            gamma: p.gamma,
            tau: p.tau,
            delta: p.delta,
            rho: p.rho,
            sigma_e: p.sigma_e,
            horizon: p.horizon,
        }
    }
}

impl RbcSection {
    pub fn params(&self) -> RbcParams {
        RbcParams {
            beta: self.beta,
            gamma: self.gamma,
            tau: self.tau,
            delta: self.delta,
            rho: self.rho,
            sigma_e: self.sigma_e,
            horizon: self.horizon,
        }
    }
}

/// Policy-surface grid. `period = None` emits every period from 1 on.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub period: Option<usize>,
    pub points: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection { period: None, points: 21 }
    }
}

/// Command-line overrides, applied after parsing.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub paths: Option<usize>,
    pub sa_iters: Option<usize>,
    pub iters: Option<usize>,
    pub threads: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<(), CliError> {
        if let Some(dir) = &o.output_dir {
            self.output_dir = dir.clone();
        }
        if let Some(seed) = o.seed {
            self.emc.seed = seed;
            self.emc.eval_seed = None;
        }
        if let Some(n) = o.paths {
            self.emc.paths = n;
        }
        if let Some(m) = o.sa_iters {
            self.emc.sa_iters = m;
        }
        if let Some(k) = o.iters {
            self.emc.iters = k;
        }
        if o.threads.is_some() {
            self.emc.threads = o.threads;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.experiment == Experiment::Custom {
            return bad("experiment `custom` has no configuration-file form; build the problem with the emc-core API".into());
        }
        let e = &self.emc;
        if e.iters < 1 || e.paths < 2 || e.sa_iters < 1 {
            return bad("emc.iters and emc.sa_iters must be at least 1 and emc.paths at least 2".into());
        }
        if e.eval_paths.is_some_and(|n| n < 2) {
            return bad("emc.eval_paths must be at least 2".into());
        }
        if self.eval_seed() == e.seed {
            return bad("emc.eval_seed must differ from emc.seed (out-of-sample evaluation)".into());
        }
        if e.threads == Some(0) {
            return bad("emc.threads must be positive".into());
        }
        let s = &e.step;
        if !(s.a_factor > 0.0 && s.b_factor > 0.0 && s.floor > 0.0) {
            return bad("emc.step factors and floor must be positive".into());
        }
        for name in self.baselines() {
            if !self.experiment.baselines().contains(&name.as_str()) {
                return bad(format!(
                    "unknown baseline `{name}` for {}; expected one of {:?}",
                    self.experiment.name(),
                    self.experiment.baselines()
                ));
            }
        }
        if self.grid.points < 2 {
            return bad("grid.points must be at least 2".into());
        }
        let model = match self.experiment {
            Experiment::Growth => {
                if self.growth.bases.is_empty() {
                    return bad("growth.bases must not be empty".into());
                }
                self.growth.params().validate()
            }
            Experiment::PricingSingle => {
                if self.pricing_single.capacities.is_empty() {
                    return bad("pricing_single.capacities must not be empty".into());
                }
                self.pricing_single.params(0).validate()
            }
            Experiment::PricingMulti => {
                let m = &self.pricing_multi;
                if m.report_periods.iter().any(|p| *p < 1 || *p > m.periods) {
                    return bad("pricing_multi.report_periods must lie in 1..=periods".into());
                }
                m.spec().validate()
            }
            Experiment::Rbc => self.rbc.params().validate(),
            Experiment::Custom => Ok(()),
        };
        model.map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn baselines(&self) -> Vec<String> {
        match &self.baselines {
            Some(b) => b.clone(),
            None => self.experiment.baselines().iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn eval_seed(&self) -> u64 {
        self.emc.eval_seed.unwrap_or(self.emc.seed.wrapping_add(1))
    }

    pub fn eval_paths(&self) -> usize {
        self.emc.eval_paths.unwrap_or(self.emc.paths)
    }

    pub fn emc_config(&self) -> EmcConfig {
        let s = &self.emc.step;
        let mut c = EmcConfig::new(self.emc.iters, self.emc.paths, self.emc.sa_iters, self.emc.seed).with_step_scale(
            StepScale::Iterate {
                a_factor: s.a_factor,
                b_factor: s.b_factor,
                floor: s.floor,
            },
        );
        c.rel_tol = self.emc.rel_tol;
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "experiment = \"growth\"\n[emc]\niters = 2\npaths = 100\nsa_iters = 10\nseed = 4\n";

    #[test]
    fn minimal_config_gets_defaults() {
        let c = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.growth, GrowthSection::default());
        assert_eq!(c.eval_seed(), 5);
        assert_eq!(c.eval_paths(), 100);
        assert_eq!(c.baselines(), vec!["analytic".to_string()]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(ExperimentConfig::from_toml("experiment = \"nope\"").is_err());
        assert!(ExperimentConfig::from_toml(&MINIMAL.replace("paths = 100", "paths = 1")).is_err());
        assert!(ExperimentConfig::from_toml(&format!("{MINIMAL}eval_seed = 4\n")).is_err());
        assert!(ExperimentConfig::from_toml(&format!("baselines = [\"lq\"]\n{MINIMAL}")).is_err());
        assert!(ExperimentConfig::from_toml(&format!("{MINIMAL}typo = 1\n")).is_err());
        assert!(ExperimentConfig::from_toml(&MINIMAL.replace("growth", "custom")).is_err());
        let neg = format!("{MINIMAL}[growth]\nb = -1.0\n");
        assert!(ExperimentConfig::from_toml(&neg).is_err());
    }

    #[test]
    fn overrides_win() {
        let mut c = ExperimentConfig::from_toml(MINIMAL).unwrap();
        c.apply(&Overrides {
            seed: Some(10),
            paths: Some(50),
            iters: Some(1),
            threads: Some(2),
            ..Default::default()
        })
        .unwrap();
        assert_eq!((c.emc.seed, c.eval_seed(), c.emc.paths, c.emc.iters), (10, 11, 50, 1));
        assert!(c
            .apply(&Overrides {
                threads: Some(0),
                ..Default::default()
            })
            .is_err());
    }
}

//! The single JSON run configuration shared by all subcommands.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecast::BacktestPlan;
use crate::model::{ModelSpec, Variant};
use crate::period::Quarter;
use crate::priors::PriorSettings;
use crate::sampler::PathStorage;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub model: ModelSection,
    pub prior: PriorSettings,
    pub sampler: SamplerSection,
    pub backtest: Option<BacktestSection>,
    pub simulate: SimulateSection,
    pub paths: PathsSection,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 1,
            model: ModelSection::default(),
            prior: PriorSettings::default(),
            sampler: SamplerSection::default(),
            backtest: None,
            simulate: SimulateSection::default(),
            paths: PathsSection::default(),
        }
    }
}

/// Model and sampler sizes; `n_vars` comes from the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub variant: Variant,
    pub p_obs_lags: usize,
    pub q_state_lags: usize,
    pub l_inmean_lags: usize,
    pub n_particles: usize,
    pub ancestor_factors: usize,
    pub n_draws: usize,
    pub n_burn: usize,
    pub thin: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        let s = ModelSpec::new(1, Variant::Full);
        Self {
            variant: s.variant,
            p_obs_lags: s.p_obs_lags,
            q_state_lags: s.q_state_lags,
            l_inmean_lags: s.l_inmean_lags,
            n_particles: s.n_particles,
            ancestor_factors: s.ancestor_factors,
            n_draws: s.n_draws,
            n_burn: s.n_burn,
            thin: s.thin,
        }
    }
}

impl ModelSection {
    pub fn spec(&self, n_vars: usize) -> ModelSpec {
        ModelSpec {
            n_vars,
            p_obs_lags: self.p_obs_lags,
            q_state_lags: self.q_state_lags,
            l_inmean_lags: self.l_inmean_lags,
            variant: self.variant,
            n_particles: self.n_particles,
            ancestor_factors: self.ancestor_factors,
            n_draws: self.n_draws,
            n_burn: self.n_burn,
            thin: self.thin,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSection {
    pub store_paths: PathStorage,
}

impl Default for SamplerSection {
    fn default() -> Self {
        Self {
            store_paths: PathStorage::Full,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BacktestSection {
    pub first_origin: Quarter,
    pub last_origin: Quarter,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_variants")]
    pub variants: Vec<Variant>,
    #[serde(default = "default_paths_per_draw")]
    pub paths_per_draw: usize,
    #[serde(default)]
    pub cumulate: Vec<String>,
    #[serde(default = "default_workers")]
    pub workers: usize,
}

fn default_horizon() -> usize {
    8
}
fn default_variants() -> Vec<Variant> {
    vec![Variant::Full, Variant::SvOnly]
}
fn default_paths_per_draw() -> usize {
    5
}
fn default_workers() -> usize {
    1
}

impl BacktestSection {
    pub fn plan(&self) -> BacktestPlan {
        BacktestPlan {
            first_origin: self.first_origin,
            last_origin: self.last_origin,
            horizon: self.horizon,
            variants: self.variants.clone(),
            paths_per_draw: self.paths_per_draw,
            cumulate: self.cumulate.clone(),
        }
    }
}

/// Synthetic-data generation settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub n_vars: usize,
    pub periods: usize,
    pub start: Quarter,
    /// Skewness-state mean of the default data-generating process.
    pub skew_mean: f64,
    /// Loading of each variable's mean on its own lagged skewness state.
    pub skew_loading: f64,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            n_vars: 2,
            periods: 200,
            start: Quarter { year: 1960, q: 1 },
            skew_mean: -0.5,
            skew_loading: 0.5,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl Config {
    /// Reads and validates a config; every problem found is reported at once.
    pub fn load(path: &Path) -> Result<Config> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(vec![format!("cannot read config {}: {e}", path.display())]))?;
        let cfg: Config =
            serde_json::from_str(&text).map_err(|e| Error::Config(vec![format!("{}: {e}", path.display())]))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if let Err(Error::Config(p)) = self.model.spec(1).validate() {
            problems.extend(p.into_iter().map(|s| format!("model.{s}")));
        }
        if let Err(Error::Config(p)) = self.prior.validate() {
            problems.extend(p);
        }
        if let Some(b) = &self.backtest {
            if b.workers == 0 {
                problems.push("backtest.workers must be >= 1".into());
            }
            if b.horizon == 0 {
                problems.push("backtest.horizon must be >= 1".into());
            }
            if b.last_origin < b.first_origin {
                problems.push("backtest.last_origin precedes backtest.first_origin".into());
            }
            if b.variants.is_empty() {
                problems.push("backtest.variants must not be empty".into());
            }
            if b.paths_per_draw == 0 {
                problems.push("backtest.paths_per_draw must be >= 1".into());
            }
        }
        if self.simulate.n_vars == 0 {
            problems.push("simulate.n_vars must be >= 1".into());
        }
        if self.simulate.periods == 0 {
            problems.push("simulate.periods must be >= 1".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_uses_defaults() {
        let c: Config = serde_json::from_str("{}").unwrap();
        assert_eq!(c, Config::default());
        c.validate().unwrap();
    }

    #[test]
    fn itemized_violations() {
        let c: Config =
            serde_json::from_str(r#"{"model": {"n_particles": 0, "n_burn": 50, "n_draws": 10}, "prior": {"tau": -1}}"#)
                .unwrap();
        match c.validate() {
            Err(Error::Config(p)) => assert_eq!(p.len(), 3, "{p:?}"),
            other => panic!("{other:?}"),
        }
        assert!(serde_json::from_str::<Config>(r#"{"modle": {}}"#).is_err());
    }
}

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agent::AgentConfig;
use crate::envs::{DistractorConfig, EnvKind, SparseTaxi};
use crate::error::{Error, Result};
use crate::pge::PgeConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Taxi,
    Controllability,
    Sweep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaxiRunConfig {
    pub step_cap: usize,
    /// Environment steps each method may spend on training.
    pub step_budget: u64,
    /// Optional cap on training episodes (0 = none).
    pub max_episodes: usize,
    pub eval_period: usize,
    pub eval_rollouts: usize,
    /// Episodes between goal-space snapshots written to disk (0 = none).
    pub snapshot_period: usize,
    /// Evaluator passes before this episode are excluded from the
    /// destination check.
    pub warmup_episodes: usize,
    /// Spacing of the env-step grid used to summarise curves across seeds.
    pub summary_resolution: u64,
}

impl Default for TaxiRunConfig {
    fn default() -> Self {
        Self {
            step_cap: SparseTaxi::DEFAULT_STEP_CAP,
            step_budget: 80_000,
            max_episodes: 0,
            eval_period: 10,
            eval_rollouts: 5,
            snapshot_period: 100,
            warmup_episodes: 500,
            summary_resolution: 5_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    /// Probe environments; all three when empty.
    pub environments: Vec<EnvKind>,
    pub seeds: Vec<u64>,
    /// Random-policy episodes per run.
    pub episodes: usize,
    pub thresholds: Vec<f64>,
    pub projection_dim: usize,
    /// Refit after every `refit_period` episodes.
    pub refit_period: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            environments: Vec::new(),
            seeds: (0..5).collect(),
            episodes: 50,
            thresholds: vec![0.01, 0.05, 0.1, 0.2, 0.4],
            projection_dim: 32,
            refit_period: 1,
        }
    }
}

impl ProbeConfig {
    pub fn environments(&self) -> Vec<EnvKind> {
        if self.environments.is_empty() {
            EnvKind::PROBES.to_vec()
        } else {
            self.environments.clone()
        }
    }
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub seeds: Vec<u64>,
    pub taxi: TaxiRunConfig,
    pub agent: AgentConfig,
    pub pge: PgeConfig,
    pub probe: ProbeConfig,
    pub distractor: DistractorConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: Experiment::Taxi,
            seeds: (0..20).collect(),
            taxi: TaxiRunConfig::default(),
            agent: AgentConfig::default(),
            pge: PgeConfig::default(),
            probe: ProbeConfig::default(),
            distractor: DistractorConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Load TOML, or JSON when the file name ends in `.json`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: Self = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text)?
        } else {
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.agent.validate()?;
        self.pge.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.taxi.eval_period == 0 || self.taxi.eval_rollouts == 0 || self.taxi.summary_resolution == 0 {
            return Err(Error::Config("eval_period, eval_rollouts and summary_resolution must be positive".into()));
        }
        if self.probe.thresholds.is_empty() || self.probe.refit_period == 0 || self.probe.seeds.is_empty() {
            return Err(Error::Config("probe needs thresholds, seeds and a positive refit_period".into()));
        }
        let p = self.distractor.flip_probability;
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Config(format!("flip_probability must lie in [0, 1], got {p}")));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

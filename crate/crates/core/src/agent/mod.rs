//! Tabular goal-conditioned Q-learning driven by the proto-goal evaluator,
//! and a plain ε-greedy Q-learning baseline.

mod replay;
mod select;
mod tables;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use replay::ReplayBuffer;
pub use select::{hindsight_select, select_goal};
pub use tables::{argmax, greedy, QTable, QTables, StepSize, TieBreak, UpdateKind};

use crate::envs::Environment;
use crate::error::{Error, Result};
use crate::pge::{self, Evaluation, GoalSpace, PgeConfig};
use crate::proto::{ProtoGoalId, Registry, StatsTable, Target, Transition};
use crate::seek_avoid::{BatchValues, GoalValues, LspiConfig, ProjectionMap, SeekAvoidFitter};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Learn about every proto-goal from every transition, online.
    Algorithm1,
    /// Learn about the pursued goal, the task and a hindsight sample of
    /// achieved goals, at the end of each pursuit.
    Algorithm6,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// Read seek/avoid values from the agent's own Q-tables.
    Tabular,
    /// Fit them with LSPI over random projections of the observation.
    Lspi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    pub learning_rate: f64,
    pub visit_warm_start: bool,
    pub discount: f64,
    /// Exploration of the task policy (and of the baseline).
    pub epsilon: f64,
    /// Exploration while pursuing a proto-goal.
    pub pursuit_epsilon: f64,
    pub p_task: f64,
    /// Tie-breaking of greedy actions while training (evaluation always
    /// uses the lowest action id).
    pub tie_break: TieBreak,
    pub novelty_samples: usize,
    pub hindsight_samples: usize,
    /// Give up on a proto-goal after this many steps without attaining it
    /// (0 = pursue until the episode ends).
    pub pursuit_horizon: usize,
    pub horizon_applies_to_task: bool,
    pub mode: Mode,
    pub estimator: Estimator,
    /// Episodes between evaluator passes.
    pub pge_period: usize,
    pub pge_batch_size: usize,
    /// Random projection size; 0 picks `floor(sqrt(pge_batch_size))`.
    pub projection_dim: usize,
    pub replay_capacity: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            visit_warm_start: true,
            discount: 0.99,
            epsilon: 0.1,
            pursuit_epsilon: 0.1,
            p_task: 0.1,
            tie_break: TieBreak::Uniform,
            novelty_samples: 5,
            hindsight_samples: 15,
            pursuit_horizon: 50,
            horizon_applies_to_task: true,
            mode: Mode::Algorithm1,
            estimator: Estimator::Tabular,
            pge_period: 10,
            pge_batch_size: 1024,
            projection_dim: 32,
            replay_capacity: 100_000,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("learning_rate", self.learning_rate),
            ("discount", self.discount),
            ("epsilon", self.epsilon),
            ("pursuit_epsilon", self.pursuit_epsilon),
            ("p_task", self.p_task),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        if self.pge_period == 0 || self.pge_batch_size == 0 || self.novelty_samples == 0 {
            return Err(Error::Config("pge_period, pge_batch_size and novelty_samples must be positive".into()));
        }
        Ok(())
    }

    pub fn step_size(&self) -> StepSize {
        StepSize { alpha: self.learning_rate, visit_warm_start: self.visit_warm_start }
    }
}

/// One on-policy pursuit inside an episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Pursuit {
    pub target: Target,
    pub steps: usize,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub steps: usize,
    pub extrinsic_return: f64,
    pub pursuits: Vec<Pursuit>,
    /// The transitions of the episode, in order.
    pub trajectory: Vec<Transition>,
}

/// Output of the most recent evaluator pass.
#[derive(Debug, Clone)]
pub struct PgeState {
    pub episode: usize,
    pub values: BatchValues,
    pub evaluation: Evaluation,
    pub combination: Option<ProtoGoalId>,
}

/// Seek/avoid values read from the tabular estimates at each batch state.
/// Only actions tried at least once count towards the maximum.
pub fn tabular_batch_values(tables: &QTables, registry: &Registry, batch: &[Transition]) -> BatchValues {
    let goals = registry
        .ids()
        .map(|id| {
            let seek_t = tables.seek(id);
            let avoid_t = tables.avoid(id);
            let seek = batch.iter().map(|t| seek_t.max_tried(t.state).unwrap_or(0.0).clamp(0.0, 1.0)).collect();
            let avoid = batch.iter().map(|t| avoid_t.max_tried(t.state).unwrap_or(0.0).clamp(-1.0, 0.0)).collect();
            let achieved_in_batch = batch.iter().any(|t| t.achieves(registry.goal(id)));
            (id, GoalValues { seek, avoid, achieved_in_batch })
        })
        .collect::<BTreeMap<_, _>>();
    BatchValues { states: batch.iter().map(|t| t.state).collect(), goals }
}

/// Mean extrinsic return and success rate of the greedy task policy over
/// episodes started from `seeds`. An episode succeeds when it collects any
/// positive reward.
pub fn evaluate_greedy(env: &mut dyn Environment, task: &QTable, seeds: &[u64]) -> Result<(f64, f64)> {
    let (mut ret, mut wins) = (0.0, 0usize);
    for &seed in seeds {
        let mut step = env.reset(seed);
        let mut total = 0.0;
        while !step.is_last() {
            step = env.step(task.argmax(step.state))?;
            total += step.reward;
        }
        ret += total;
        wins += usize::from(total > 0.0);
    }
    let n = seeds.len().max(1) as f64;
    Ok((ret / n, wins as f64 / n))
}

fn tabular_size(env: &dyn Environment) -> Result<usize> {
    env.n_states()
        .ok_or_else(|| Error::Config(format!("{} has no enumerable state space", env.name())))
}

/// The proto-goal agent: tabular task, seek and avoid values, goal statistics,
/// a replay buffer for the evaluator and the current goal space.
#[derive(Debug, Clone)]
pub struct ProtoGoalAgent {
    config: AgentConfig,
    pge_config: PgeConfig,
    registry: Registry,
    stats: StatsTable,
    tables: QTables,
    replay: ReplayBuffer,
    space: GoalSpace,
    last: Option<PgeState>,
    rng: ChaCha8Rng,
    seed: u64,
    episodes: usize,
    env_steps: u64,
}

impl ProtoGoalAgent {
    pub fn new(env: &dyn Environment, config: AgentConfig, pge_config: PgeConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        pge_config.validate()?;
        let registry = Registry::new(env.bit_labels());
        let tables = QTables::new(tabular_size(env)?, env.n_actions(), registry.len(), config.discount, config.step_size());
        Ok(Self {
            stats: StatsTable::new(registry.len()),
            replay: ReplayBuffer::new(config.replay_capacity),
            config,
            pge_config,
            registry,
            tables,
            space: GoalSpace::default(),
            last: None,
            rng: ChaCha8Rng::seed_from_u64(seed),
            seed,
            episodes: 0,
            env_steps: 0,
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn pge_config(&self) -> &PgeConfig {
        &self.pge_config
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn stats(&self) -> &StatsTable {
        &self.stats
    }

    pub fn tables(&self) -> &QTables {
        &self.tables
    }

    pub fn goal_space(&self) -> &GoalSpace {
        &self.space
    }

    pub fn last_evaluation(&self) -> Option<&PgeState> {
        self.last.as_ref()
    }

    pub fn episodes(&self) -> usize {
        self.episodes
    }

    pub fn env_steps(&self) -> u64 {
        self.env_steps
    }

    /// Run one environment episode, made of consecutive pursuits, and
    /// refresh the goal space every `pge_period` episodes.
    pub fn run_episode(&mut self, env: &mut dyn Environment) -> Result<EpisodeRecord> {
        let first = env.reset(self.rng.random());
        let mut state = first.state;
        let mut current = self.registry.annotate(&first.proto)?;
        let mut record = EpisodeRecord { steps: 0, extrinsic_return: 0.0, pursuits: Vec::new(), trajectory: Vec::new() };
        let mut finished = false;
        while !finished {
            let target = select_goal(
                state,
                &current,
                &self.space,
                &self.registry,
                &self.tables,
                self.config.p_task,
                self.config.novelty_samples,
                &mut self.rng,
            );
            let epsilon = match target {
                Target::Task => self.config.epsilon,
                Target::Goal(_) => self.config.pursuit_epsilon,
            };
            let start = record.trajectory.len();
            let success = loop {
                let action = self.tables.act_with(state, target, epsilon, self.config.tie_break, &mut self.rng);
                let step = env.step(action)?;
                let proto = self.registry.annotate(&step.proto)?;
                self.stats.record_transition(&proto, step.reward);
                let t = Transition {
                    state,
                    action,
                    extrinsic_reward: step.reward,
                    next_state: step.state,
                    proto: proto.clone(),
                    done: step.done,
                };
                if self.config.mode == Mode::Algorithm1 {
                    self.tables.update_all(&self.registry, &t)?;
                }
                self.replay.push(t.clone());
                record.trajectory.push(t);
                record.extrinsic_return += step.reward;
                state = step.state;
                current = proto;
                let attained = target.goal().is_some_and(|id| self.registry.goal(id).achieved(&current).unwrap_or(false));
                finished = step.is_last();
                let expired = (target.goal().is_some() || self.config.horizon_applies_to_task)
                    && self.config.pursuit_horizon > 0
                    && record.trajectory.len() - start >= self.config.pursuit_horizon;
                if attained || finished || expired {
                    break attained;
                }
            };
            if let Target::Goal(id) = target {
                self.stats.get_mut(id).record_pursuit_outcome(success);
            }
            if self.config.mode == Mode::Algorithm6 {
                self.hindsight_updates(target, start, &record.trajectory)?;
            }
            record.pursuits.push(Pursuit { target, steps: record.trajectory.len() - start, success });
        }
        record.steps = record.trajectory.len();
        self.env_steps += record.steps as u64;
        self.episodes += 1;
        if self.episodes.is_multiple_of(self.config.pge_period) {
            self.refresh(env)?;
        }
        Ok(record)
    }

    fn hindsight_updates(&mut self, target: Target, start: usize, trajectory: &[Transition]) -> Result<()> {
        let segment = &trajectory[start..];
        let achieved: Vec<ProtoGoalId> = self
            .registry
            .ids()
            .filter(|&id| Some(id) != target.goal() && segment.iter().any(|t| t.achieves(self.registry.goal(id))))
            .collect();
        let mut goals = hindsight_select(&achieved, &self.stats, self.config.hindsight_samples, &mut self.rng);
        goals.extend(target.goal());
        for t in segment {
            self.tables.update_goals(&self.registry, t, &goals)?;
        }
        Ok(())
    }

    /// Run the evaluator on a replay sample, propose at most one
    /// combination and install the new goal space.
    pub fn refresh(&mut self, env: &dyn Environment) -> Result<()> {
        if self.replay.is_empty() {
            return Ok(());
        }
        let batch = self.replay.sample(self.config.pge_batch_size, &mut self.rng);
        let values = match self.config.estimator {
            Estimator::Tabular => tabular_batch_values(&self.tables, &self.registry, &batch),
            Estimator::Lspi => {
                let dim = match self.config.projection_dim {
                    0 => ProjectionMap::auto_dim(batch.len()),
                    d => d,
                };
                let fitter = SeekAvoidFitter::random_projection(
                    env.observation_dim(),
                    dim,
                    env.n_actions(),
                    self.seed ^ 0x005e_ed0f_9a11,
                    LspiConfig::default(),
                );
                let goals: Vec<_> = self.registry.ids().map(|id| (id, self.registry.goal(id).clone())).collect();
                let encoder = |s: u64, out: &mut [f64]| env.encode(s, out);
                fitter.fit(&batch, &goals, &encoder)?.batch_values(&batch, &encoder)?
            }
        };
        let evaluation = pge::evaluate(&self.registry, &values, &self.stats, &self.pge_config, &mut self.rng)?;
        let candidates: Vec<ProtoGoalId> = evaluation.space.ids().collect();
        let combination =
            pge::propose_combination(&mut self.registry, &mut self.stats, &candidates, &self.pge_config, &mut self.rng)?;
        self.tables.sync_len(self.registry.len());
        self.space = evaluation.active.clone();
        self.last = Some(PgeState { episode: self.episodes, values, evaluation, combination });
        Ok(())
    }
}

/// ε-greedy Q-learning on the extrinsic reward only.
#[derive(Debug, Clone)]
pub struct QLearningBaseline {
    table: QTable,
    config: AgentConfig,
    rng: ChaCha8Rng,
    episodes: usize,
    env_steps: u64,
}

impl QLearningBaseline {
    pub fn new(env: &dyn Environment, config: AgentConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            table: QTable::new(tabular_size(env)?, env.n_actions()),
            config,
            rng: ChaCha8Rng::seed_from_u64(seed),
            episodes: 0,
            env_steps: 0,
        })
    }

    pub fn table(&self) -> &QTable {
        &self.table
    }

    pub fn episodes(&self) -> usize {
        self.episodes
    }

    pub fn env_steps(&self) -> u64 {
        self.env_steps
    }

    pub fn run_episode(&mut self, env: &mut dyn Environment) -> Result<f64> {
        let mut step = env.reset(self.rng.random());
        let mut total = 0.0;
        let step_size = self.config.step_size();
        while !step.is_last() {
            let s = step.state;
            let a = if self.rng.random_bool(self.config.epsilon) {
                self.rng.random_range(0..self.table.n_actions())
            } else {
                greedy(self.table.row(s), self.config.tie_break, &mut self.rng)
            };
            step = env.step(a)?;
            let boot = if step.done { 0.0 } else { self.config.discount * self.table.max(step.state) };
            self.table.update(s, a, step.reward + boot, step_size);
            total += step.reward;
            self.env_steps += 1;
        }
        self.episodes += 1;
        Ok(total)
    }
}

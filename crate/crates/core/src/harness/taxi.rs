//! SparseTaxi comparison between the proto-goal agent and ε-greedy
//! Q-learning.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::metrics::mean_se;
use super::snapshot::{export_goalspace_snapshot, GoalSpaceSnapshot};
use crate::agent::{evaluate_greedy, ProtoGoalAgent, QLearningBaseline};
use crate::envs::{Environment, SparseTaxi};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ProtoGoal,
    QLearning,
}

impl Method {
    pub const ALL: [Method; 2] = [Method::ProtoGoal, Method::QLearning];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::ProtoGoal => "proto_goal",
            Method::QLearning => "q_learning",
        }
    }
}

/// One evaluation point of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub method: Method,
    pub seed: u64,
    pub episode: usize,
    pub env_steps: u64,
    pub eval_return: f64,
    pub eval_success: f64,
    pub plausible_goals: usize,
    pub registry_size: usize,
}

/// Destination proto-goals found in the plausible set by one evaluator pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DestinationCheck {
    pub episode: usize,
    pub destination_goals: usize,
}

#[derive(Debug, Clone)]
pub struct SeedRun {
    pub method: Method,
    pub seed: u64,
    pub rows: Vec<MetricsRow>,
    pub checks: Vec<DestinationCheck>,
    pub snapshots: Vec<GoalSpaceSnapshot>,
    pub wall_ms: f64,
}

/// Seed-mean evaluation success on a common env-step grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryPoint {
    pub method: Method,
    pub env_steps: u64,
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

#[derive(Debug, Clone)]
pub struct TaxiResult {
    pub runs: Vec<SeedRun>,
    pub step_budget: u64,
    pub resolution: u64,
    pub warmup_episodes: usize,
}

impl TaxiResult {
    /// All rows ordered by method, seed and episode.
    pub fn rows(&self) -> Vec<&MetricsRow> {
        let mut rows: Vec<&MetricsRow> = self.runs.iter().flat_map(|r| &r.rows).collect();
        rows.sort_by_key(|r| (r.method, r.seed, r.episode));
        rows
    }

    /// Success of each seed at each grid point is the latest evaluation not
    /// beyond it; the final grid point (the budget, or the furthest any run
    /// got under an episode cap) takes each run's last evaluation.
    pub fn summary(&self) -> Vec<SummaryPoint> {
        let reached = self.runs.iter().filter_map(|r| r.rows.last()).map(|r| r.env_steps).max().unwrap_or(0);
        let end = self.step_budget.min(reached);
        let mut grid: Vec<u64> = (1..).map(|i| i * self.resolution).take_while(|&g| g < end).collect();
        grid.insert(0, 0);
        if end > 0 {
            grid.push(end);
        }
        let mut out = Vec::new();
        for method in Method::ALL {
            let runs: Vec<&SeedRun> = self.runs.iter().filter(|r| r.method == method).collect();
            if runs.is_empty() {
                continue;
            }
            for &g in &grid {
                let values: Vec<f64> = runs
                    .iter()
                    .map(|r| {
                        let row = if g == end {
                            r.rows.last()
                        } else {
                            r.rows.iter().rev().find(|row| row.env_steps <= g)
                        };
                        row.map_or(0.0, |row| row.eval_success)
                    })
                    .collect();
                let (mean, se) = mean_se(&values);
                out.push(SummaryPoint { method, env_steps: g, mean, se, n: values.len() });
            }
        }
        out
    }

    pub fn final_success(&self, method: Method) -> Option<f64> {
        self.summary().into_iter().rfind(|p| p.method == method).map(|p| p.mean)
    }

    pub fn peak_success(&self, method: Method) -> Option<f64> {
        self.summary().into_iter().filter(|p| p.method == method).map(|p| p.mean).reduce(f64::max)
    }

    /// (passes checked, passes with a destination goal in the plausible set)
    /// after the warmup.
    pub fn destination_violations(&self) -> (usize, usize) {
        let checks = self
            .runs
            .iter()
            .flat_map(|r| &r.checks)
            .filter(|c| c.episode > self.warmup_episodes);
        checks.fold((0, 0), |(n, bad), c| (n + 1, bad + usize::from(c.destination_goals > 0)))
    }
}

/// Start seeds of the evaluation rollouts; shared by both methods.
pub fn eval_seeds(seed: u64, evaluation: usize, rollouts: usize) -> Vec<u64> {
    (0..rollouts as u64)
        .map(|i| seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ ((evaluation as u64) << 16 | i).wrapping_mul(0xbf58_476d_1ce4_e5b9))
        .collect()
}

fn destination_goals(agent: &ProtoGoalAgent) -> usize {
    let Some(state) = agent.last_evaluation() else { return 0 };
    state
        .evaluation
        .space
        .ids()
        .filter(|&id| agent.registry().goal(id).mask().iter().any(|&i| SparseTaxi::is_destination_bit(i)))
        .count()
}

/// Train one method on one seed until its step budget is spent.
pub fn run_seed(method: Method, seed: u64, config: &ExperimentConfig) -> Result<SeedRun> {
    let start = Instant::now();
    let tc = &config.taxi;
    let mut env = SparseTaxi::with_step_cap(tc.step_cap);
    let mut run = SeedRun { method, seed, rows: Vec::new(), checks: Vec::new(), snapshots: Vec::new(), wall_ms: 0.0 };
    let more = |episodes: usize, steps: u64| steps < tc.step_budget && (tc.max_episodes == 0 || episodes < tc.max_episodes);
    let mut evaluations = 0;
    let mut evaluate = |env: &mut SparseTaxi, task: &crate::agent::QTable| -> Result<(f64, f64)> {
        let seeds = eval_seeds(seed, evaluations, tc.eval_rollouts);
        evaluations += 1;
        evaluate_greedy(env, task, &seeds)
    };
    match method {
        Method::ProtoGoal => {
            let mut agent = ProtoGoalAgent::new(&env, config.agent.clone(), config.pge.clone(), seed)?;
            let name = env.name();
            let row = |agent: &ProtoGoalAgent, ret: f64, success: f64| MetricsRow {
                method,
                seed,
                episode: agent.episodes(),
                env_steps: agent.env_steps(),
                eval_return: ret,
                eval_success: success,
                plausible_goals: agent.last_evaluation().map_or(0, |s| s.evaluation.space.len()),
                registry_size: agent.registry().len(),
            };
            let (ret, success) = evaluate(&mut env, agent.tables().task())?;
            run.rows.push(row(&agent, ret, success));
            if tc.snapshot_period > 0 {
                run.snapshots.push(export_goalspace_snapshot(&agent, name, seed, 0));
            }
            while more(agent.episodes(), agent.env_steps()) {
                agent.run_episode(&mut env)?;
                let ep = agent.episodes();
                if agent.last_evaluation().is_some_and(|s| s.episode == ep) {
                    run.checks.push(DestinationCheck { episode: ep, destination_goals: destination_goals(&agent) });
                }
                if ep % tc.eval_period == 0 || !more(ep, agent.env_steps()) {
                    let (ret, success) = evaluate(&mut env, agent.tables().task())?;
                    run.rows.push(row(&agent, ret, success));
                }
                if tc.snapshot_period > 0 && ep % tc.snapshot_period == 0 {
                    run.snapshots.push(export_goalspace_snapshot(&agent, name, seed, ep));
                }
            }
        }
        Method::QLearning => {
            let mut agent = QLearningBaseline::new(&env, config.agent.clone(), seed)?;
            let row = |agent: &QLearningBaseline, ret: f64, success: f64| MetricsRow {
                method,
                seed,
                episode: agent.episodes(),
                env_steps: agent.env_steps(),
                eval_return: ret,
                eval_success: success,
                plausible_goals: 0,
                registry_size: 0,
            };
            let (ret, success) = evaluate(&mut env, agent.table())?;
            run.rows.push(row(&agent, ret, success));
            while more(agent.episodes(), agent.env_steps()) {
                agent.run_episode(&mut env)?;
                let ep = agent.episodes();
                if ep % tc.eval_period == 0 || !more(ep, agent.env_steps()) {
                    let (ret, success) = evaluate(&mut env, agent.table())?;
                    run.rows.push(row(&agent, ret, success));
                }
            }
        }
    }
    run.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(run)
}

/// Every (method, seed) pair, fanned out over the rayon pool and returned
/// in (method, seed) order.
pub fn run_taxi(config: &ExperimentConfig) -> Result<TaxiResult> {
    config.validate()?;
    let jobs: Vec<(Method, u64)> =
        Method::ALL.iter().flat_map(|&m| config.seeds.iter().map(move |&s| (m, s))).collect();
    let mut runs = jobs
        .par_iter()
        .map(|&(m, s)| run_seed(m, s, config))
        .collect::<Result<Vec<_>>>()?;
    runs.sort_by_key(|r| (r.method, r.seed));
    Ok(TaxiResult {
        runs,
        step_budget: config.taxi.step_budget,
        resolution: config.taxi.summary_resolution,
        warmup_episodes: config.taxi.warmup_episodes,
    })
}

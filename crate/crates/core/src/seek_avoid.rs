//! Batch seek/avoid value estimation with least-squares policy iteration.
//!
//! For each proto-goal two attainment problems are solved on a batch of
//! transitions: "seek" (cumulant +1 on attainment) and "avoid" (cumulant −1
//! on attainment), both terminating on attainment. Values are linear in
//! state-action features built from a random projection of the observation
//! (or the observation itself, which with one-hot observations is exactly
//! tabular).

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::proto::{Goal, ProtoGoalId, Transition};

/// Fixed random linear map from observations to `|φ|` features.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMap {
    input_dim: usize,
    output_dim: usize,
    /// Row-major `output_dim x input_dim`.
    matrix: Vec<f64>,
}

impl ProjectionMap {
    /// Gaussian entries scaled by `1/sqrt(output_dim)`, drawn once from `seed`.
    pub fn new(input_dim: usize, output_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (output_dim as f64).sqrt();
        let matrix = (0..input_dim * output_dim)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z * scale
            })
            .collect();
        Self { input_dim, output_dim, matrix }
    }

    /// `|φ| = floor(sqrt(batch_size))`.
    pub fn auto_dim(batch_size: usize) -> usize {
        ((batch_size as f64).sqrt().floor() as usize).max(1)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn project(&self, observation: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.output_dim];
        self.project_into(observation, &mut out)?;
        Ok(out)
    }

    pub fn project_into(&self, observation: &[f64], out: &mut [f64]) -> Result<()> {
        if observation.len() != self.input_dim {
            return Err(Error::DimensionMismatch { expected: self.input_dim, got: observation.len() });
        }
        for (row, o) in self.matrix.chunks_exact(self.input_dim).zip(out.iter_mut()) {
            *o = observation
                .iter()
                .zip(row)
                .filter(|(x, _)| **x != 0.0)
                .map(|(x, m)| x * m)
                .sum();
        }
        Ok(())
    }
}

/// State features fed to LSTDQ.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureMap {
    /// Use the observation encoding directly.
    Identity { dim: usize },
    RandomProjection(ProjectionMap),
}

impl FeatureMap {
    pub fn dim(&self) -> usize {
        match self {
            FeatureMap::Identity { dim } => *dim,
            FeatureMap::RandomProjection(p) => p.output_dim(),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            FeatureMap::Identity { dim } => *dim,
            FeatureMap::RandomProjection(p) => p.input_dim(),
        }
    }

    pub fn features_into(&self, observation: &[f64], out: &mut [f64]) -> Result<()> {
        match self {
            FeatureMap::Identity { dim } => {
                if observation.len() != *dim {
                    return Err(Error::DimensionMismatch { expected: *dim, got: observation.len() });
                }
                out.copy_from_slice(observation);
                Ok(())
            }
            FeatureMap::RandomProjection(p) => p.project_into(observation, out),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Semantics {
    Seek,
    Avoid,
}

/// Seek/avoid reward for `goal` on a logged transition.
pub fn relabel(transition: &Transition, goal: &Goal, semantics: Semantics) -> f64 {
    match (transition.achieves(goal), semantics) {
        (false, _) => 0.0,
        (true, Semantics::Seek) => 1.0,
        (true, Semantics::Avoid) => -1.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LspiConfig {
    pub gamma: f64,
    pub ridge: f64,
    pub iterations: usize,
}

impl Default for LspiConfig {
    fn default() -> Self {
        Self { gamma: 0.95, ridge: 1e-3, iterations: 2 }
    }
}

/// Fitted weights for one proto-goal.
#[derive(Debug, Clone, PartialEq)]
pub struct GoalWeights {
    /// `n_actions` blocks of `dim` weights.
    pub seek: Vec<f64>,
    pub avoid: Vec<f64>,
    pub achieved_in_batch: bool,
}

/// Per-goal seek/avoid linear value functions.
#[derive(Debug, Clone)]
pub struct SeekAvoidModel {
    features: FeatureMap,
    n_actions: usize,
    goals: BTreeMap<ProtoGoalId, GoalWeights>,
}

impl SeekAvoidModel {
    pub fn features(&self) -> &FeatureMap {
        &self.features
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn weights(&self, goal: ProtoGoalId) -> Result<&GoalWeights> {
        self.goals.get(&goal).ok_or(Error::UnknownGoal(goal.0))
    }

    pub fn goals(&self) -> impl Iterator<Item = ProtoGoalId> + '_ {
        self.goals.keys().copied()
    }

    pub fn state_features(&self, observation: &[f64]) -> Result<Vec<f64>> {
        let mut x = vec![0.0; self.features.dim()];
        self.features.features_into(observation, &mut x)?;
        Ok(x)
    }

    fn q_values(&self, weights: &[f64], x: &[f64]) -> Vec<f64> {
        weights.chunks_exact(x.len()).map(|w| dot(w, x)).collect()
    }

    /// Unclamped greedy values `(max_a Q_seek, max_a Q_avoid)`.
    pub fn raw_values(&self, observation: &[f64], goal: ProtoGoalId) -> Result<(f64, f64)> {
        let w = self.weights(goal)?;
        let x = self.state_features(observation)?;
        Ok((max(&self.q_values(&w.seek, &x)), max(&self.q_values(&w.avoid, &x))))
    }

    /// `V_seek(s, g)` clamped to `[0, 1]`.
    pub fn v_seek(&self, observation: &[f64], goal: ProtoGoalId) -> Result<f64> {
        Ok(self.raw_values(observation, goal)?.0.clamp(0.0, 1.0))
    }

    /// `V_avoid(s, g)` clamped to `[-1, 0]`.
    pub fn v_avoid(&self, observation: &[f64], goal: ProtoGoalId) -> Result<f64> {
        Ok(self.raw_values(observation, goal)?.1.clamp(-1.0, 0.0))
    }

    pub fn greedy_action(&self, observation: &[f64], goal: ProtoGoalId, semantics: Semantics) -> Result<usize> {
        let w = self.weights(goal)?;
        let x = self.state_features(observation)?;
        let weights = match semantics {
            Semantics::Seek => &w.seek,
            Semantics::Avoid => &w.avoid,
        };
        Ok(argmax(&self.q_values(weights, &x)))
    }

    /// Clamped seek/avoid values at every state of `batch`.
    pub fn batch_values(&self, batch: &[Transition], encoder: &dyn Fn(u64, &mut [f64])) -> Result<BatchValues> {
        let d = self.features.dim();
        let mut obs = vec![0.0; self.features.input_dim()];
        let mut xs = Vec::with_capacity(batch.len() * d);
        let mut x = vec![0.0; d];
        for t in batch {
            encoder(t.state, &mut obs);
            self.features.features_into(&obs, &mut x)?;
            xs.extend_from_slice(&x);
        }
        let goals = self
            .goals
            .iter()
            .map(|(&id, w)| {
                let mut seek = Vec::with_capacity(batch.len());
                let mut avoid = Vec::with_capacity(batch.len());
                for x in xs.chunks_exact(d) {
                    seek.push(max(&self.q_values(&w.seek, x)).clamp(0.0, 1.0));
                    avoid.push(max(&self.q_values(&w.avoid, x)).clamp(-1.0, 0.0));
                }
                (id, GoalValues { seek, avoid, achieved_in_batch: w.achieved_in_batch })
            })
            .collect();
        Ok(BatchValues { states: batch.iter().map(|t| t.state).collect(), goals })
    }
}

/// Seek/avoid values of one goal at each batch state.
#[derive(Debug, Clone, PartialEq)]
pub struct GoalValues {
    pub seek: Vec<f64>,
    pub avoid: Vec<f64>,
    pub achieved_in_batch: bool,
}

impl GoalValues {
    pub fn mean_seek(&self) -> f64 {
        mean(&self.seek)
    }

    pub fn mean_avoid(&self) -> f64 {
        mean(&self.avoid)
    }

    pub fn max_seek(&self) -> f64 {
        self.seek.iter().copied().fold(0.0, f64::max)
    }

    /// `E[V_seek] − E[−V_avoid]`: how much more often a seeking policy meets
    /// the goal than an avoiding one.
    pub fn controllability_gap(&self) -> f64 {
        self.mean_seek() - (-self.mean_avoid())
    }
}

/// Estimator-agnostic seek/avoid values over the states of a batch; the
/// expectations used for plausibility and timescales are taken over these.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BatchValues {
    pub states: Vec<u64>,
    pub goals: BTreeMap<ProtoGoalId, GoalValues>,
}

impl BatchValues {
    pub fn get(&self, goal: ProtoGoalId) -> Option<&GoalValues> {
        self.goals.get(&goal)
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max(q: &[f64]) -> f64 {
    q.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// First maximiser; ties go to the lowest action id.
fn argmax(q: &[f64]) -> usize {
    let mut best = 0;
    for (a, &v) in q.iter().enumerate().skip(1) {
        if v > q[best] {
            best = a;
        }
    }
    best
}

/// Fits [`SeekAvoidModel`]s with a fixed feature map.
#[derive(Debug, Clone)]
pub struct SeekAvoidFitter {
    pub features: FeatureMap,
    pub n_actions: usize,
    pub config: LspiConfig,
}

/// Batch features shared by every goal's fit.
struct PreparedBatch {
    d: usize,
    n_actions: usize,
    x: Vec<f64>,
    x_next: Vec<f64>,
    actions: Vec<usize>,
    done: Vec<bool>,
    /// Per action, `Σ x xᵀ` over transitions taking that action.
    gram: Vec<Vec<f64>>,
}

impl SeekAvoidFitter {
    pub fn random_projection(obs_dim: usize, n_features: usize, n_actions: usize, seed: u64, config: LspiConfig) -> Self {
        Self {
            features: FeatureMap::RandomProjection(ProjectionMap::new(obs_dim, n_features, seed)),
            n_actions,
            config,
        }
    }

    pub fn identity(obs_dim: usize, n_actions: usize, config: LspiConfig) -> Self {
        Self { features: FeatureMap::Identity { dim: obs_dim }, n_actions, config }
    }

    fn prepare(&self, batch: &[Transition], encoder: &dyn Fn(u64, &mut [f64])) -> Result<PreparedBatch> {
        let d = self.features.dim();
        let mut obs = vec![0.0; self.features.input_dim()];
        let mut x = vec![0.0; batch.len() * d];
        let mut x_next = vec![0.0; batch.len() * d];
        for (t, tr) in batch.iter().enumerate() {
            if tr.action >= self.n_actions {
                return Err(Error::InvalidAction { action: tr.action, n_actions: self.n_actions });
            }
            encoder(tr.state, &mut obs);
            self.features.features_into(&obs, &mut x[t * d..(t + 1) * d])?;
            encoder(tr.next_state, &mut obs);
            self.features.features_into(&obs, &mut x_next[t * d..(t + 1) * d])?;
        }
        let mut gram = vec![vec![0.0; d * d]; self.n_actions];
        for (t, tr) in batch.iter().enumerate() {
            let xt = &x[t * d..(t + 1) * d];
            add_outer(&mut gram[tr.action], xt, xt, 1.0);
        }
        Ok(PreparedBatch {
            d,
            n_actions: self.n_actions,
            x,
            x_next,
            actions: batch.iter().map(|t| t.action).collect(),
            done: batch.iter().map(|t| t.done).collect(),
            gram,
        })
    }

    /// Two (by default) LSPI iterations per goal and semantics.
    ///
    /// The first iteration evaluates the greedy policy of all-zero weights
    /// (always the lowest action id), which is shared by seek and avoid.
    pub fn fit(
        &self,
        batch: &[Transition],
        goals: &[(ProtoGoalId, Goal)],
        encoder: &dyn Fn(u64, &mut [f64]),
    ) -> Result<SeekAvoidModel> {
        let prepared = self.prepare(batch, encoder)?;
        let k = prepared.d * self.n_actions;
        let mut out = BTreeMap::new();
        for (id, goal) in goals {
            let achieved: Vec<bool> = batch.iter().map(|t| t.achieves(goal)).collect();
            let achieved_in_batch = achieved.iter().any(|&c| c);
            let weights = if achieved_in_batch {
                self.fit_goal(&prepared, &achieved)
            } else {
                GoalWeights { seek: vec![0.0; k], avoid: vec![0.0; k], achieved_in_batch: false }
            };
            out.insert(*id, weights);
        }
        Ok(SeekAvoidModel { features: self.features.clone(), n_actions: self.n_actions, goals: out })
    }

    fn fit_goal(&self, p: &PreparedBatch, achieved: &[bool]) -> GoalWeights {
        let k = p.d * p.n_actions;
        let mut seek = vec![0.0; k];
        let mut avoid = vec![0.0; k];
        let mut seek_b = vec![0.0; k];
        for (t, &c) in achieved.iter().enumerate() {
            if c {
                let a = p.actions[t];
                for (b, x) in seek_b[a * p.d..(a + 1) * p.d].iter_mut().zip(&p.x[t * p.d..(t + 1) * p.d]) {
                    *b += x;
                }
            }
        }
        let avoid_b: Vec<f64> = seek_b.iter().map(|b| -b).collect();
        for iteration in 0..self.config.iterations {
            if iteration == 0 {
                // identical policies: one system, two right-hand sides
                let policy = vec![0usize; achieved.len()];
                let a = self.lstdq_matrix(p, achieved, &policy);
                seek = self.solve(&a, &seek_b);
                avoid = seek.iter().map(|w| -w).collect();
            } else {
                let seek_policy = self.next_actions(p, achieved, &seek);
                let avoid_policy = self.next_actions(p, achieved, &avoid);
                let a = self.lstdq_matrix(p, achieved, &seek_policy);
                let new_seek = self.solve(&a, &seek_b);
                let a = if avoid_policy == seek_policy { a } else { self.lstdq_matrix(p, achieved, &avoid_policy) };
                avoid = self.solve(&a, &avoid_b);
                seek = new_seek;
            }
        }
        GoalWeights { seek, avoid, achieved_in_batch: true }
    }

    /// Greedy action at each successor state that bootstraps.
    fn next_actions(&self, p: &PreparedBatch, achieved: &[bool], w: &[f64]) -> Vec<usize> {
        (0..achieved.len())
            .map(|t| {
                if achieved[t] || p.done[t] {
                    return 0;
                }
                let xn = &p.x_next[t * p.d..(t + 1) * p.d];
                let q: Vec<f64> = w.chunks_exact(p.d).map(|wa| dot(wa, xn)).collect();
                argmax(&q)
            })
            .collect()
    }

    /// `Σ φ(s,a) (φ(s,a) − γ_g φ(s', π(s')))ᵀ`, with the bootstrap masked on
    /// attainment and on true terminals.
    fn lstdq_matrix(&self, p: &PreparedBatch, achieved: &[bool], policy: &[usize]) -> Vec<f64> {
        let (d, na) = (p.d, p.n_actions);
        let k = d * na;
        let mut blocks = vec![vec![0.0; d * d]; na * na];
        for t in 0..achieved.len() {
            if achieved[t] || p.done[t] {
                continue;
            }
            let block = &mut blocks[p.actions[t] * na + policy[t]];
            add_outer(block, &p.x[t * d..(t + 1) * d], &p.x_next[t * d..(t + 1) * d], 1.0);
        }
        let gamma = self.config.gamma;
        let mut a = vec![0.0; k * k];
        for ai in 0..na {
            for bi in 0..na {
                let block = &blocks[ai * na + bi];
                for r in 0..d {
                    let row = &mut a[(ai * d + r) * k + bi * d..(ai * d + r) * k + bi * d + d];
                    for (dst, src) in row.iter_mut().zip(&block[r * d..(r + 1) * d]) {
                        *dst -= gamma * src;
                    }
                    if ai == bi {
                        for (dst, src) in row.iter_mut().zip(&p.gram[ai][r * d..(r + 1) * d]) {
                            *dst += src;
                        }
                    }
                }
            }
        }
        a
    }

    /// Solve `A w = b` exactly when `A` is well conditioned, otherwise with
    /// ridge `λ I` added.
    fn solve(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        let k = b.len();
        let matrix = DMatrix::from_row_slice(k, k, a);
        let rhs = DVector::from_column_slice(b);
        let lu = matrix.clone().lu();
        let diag = lu.u().diagonal();
        let (lo, hi) = diag
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v.abs()), hi.max(v.abs())));
        if hi > 0.0 && lo / hi > 1e-9 {
            if let Some(w) = lu.solve(&rhs) {
                if w.iter().all(|v| v.is_finite()) {
                    return w.as_slice().to_vec();
                }
            }
        }
        let regularised = matrix + DMatrix::identity(k, k) * self.config.ridge;
        regularised
            .lu()
            .solve(&rhs)
            .map(|w| w.as_slice().to_vec())
            .unwrap_or_else(|| vec![0.0; k])
    }
}

fn add_outer(dst: &mut [f64], x: &[f64], y: &[f64], scale: f64) {
    let d = y.len();
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        let s = xi * scale;
        for (dst, &yj) in dst[i * d..(i + 1) * d].iter_mut().zip(y) {
            *dst += s * yj;
        }
    }
}

//! Proto-goal vectors, attainment goals and the append-only proto-goal registry.
//!
//! A proto-goal is a binary predicate over transitions. The environment emits
//! one bit per base proto-goal on every step; recombined proto-goals are
//! appended to the [`Registry`] later and their bit is the logical AND of the
//! base bits in their mask.

use std::collections::{HashMap, VecDeque};
use std::fmt;

use bitvec::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default goal timescale, shared by every goal unless overridden.
pub const DEFAULT_TIMESCALE: f64 = 0.99;

/// Number of on-policy pursuit outcomes kept per goal.
pub const SUCCESS_HISTORY_LEN: usize = 10;

/// Stable index of a registered proto-goal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProtoGoalId(pub usize);

impl fmt::Display for ProtoGoalId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Which registered proto-goals fired on a transition.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct ProtoGoalVector {
    bits: BitVec<u64, Lsb0>,
}

impl ProtoGoalVector {
    pub fn zeros(len: usize) -> Self {
        Self { bits: bitvec![u64, Lsb0; 0; len] }
    }

    pub fn from_bools<I: IntoIterator<Item = bool>>(bits: I) -> Self {
        Self { bits: bits.into_iter().collect() }
    }

    pub fn from_indices(len: usize, set: impl IntoIterator<Item = usize>) -> Self {
        let mut v = Self::zeros(len);
        for i in set {
            v.bits.set(i, true);
        }
        v
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn get(&self, index: usize) -> Result<bool> {
        self.bits
            .get(index)
            .map(|b| *b)
            .ok_or(Error::RegistryMismatch { index, len: self.len() })
    }

    pub fn set(&mut self, index: usize, value: bool) {
        self.bits.set(index, value);
    }

    pub fn push(&mut self, value: bool) {
        self.bits.push(value);
    }

    pub fn count_ones(&self) -> usize {
        self.bits.count_ones()
    }

    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter_ones()
    }

    /// Decode at a (possibly larger) registry size. Proto-goals registered
    /// after this vector was logged read as zero.
    pub fn padded_to(&self, len: usize) -> Self {
        let mut bits = self.bits.clone();
        if bits.len() < len {
            bits.resize(len, false);
        }
        Self { bits }
    }
}

/// An attainment goal: a non-empty AND-mask over base proto-goal indices,
/// paired with a timescale discount.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Goal {
    mask: Vec<usize>,
    timescale_gamma: f64,
}

impl Goal {
    pub fn new(mask: impl IntoIterator<Item = usize>) -> Result<Self> {
        Self::with_timescale(mask, DEFAULT_TIMESCALE)
    }

    pub fn with_timescale(mask: impl IntoIterator<Item = usize>, gamma: f64) -> Result<Self> {
        let mut mask: Vec<usize> = mask.into_iter().collect();
        mask.sort_unstable();
        mask.dedup();
        if mask.is_empty() {
            return Err(Error::EmptyMask);
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::InvalidTimescale(gamma));
        }
        Ok(Self { mask, timescale_gamma: gamma })
    }

    pub fn single(index: usize) -> Self {
        Self { mask: vec![index], timescale_gamma: DEFAULT_TIMESCALE }
    }

    pub fn mask(&self) -> &[usize] {
        &self.mask
    }

    pub fn timescale_gamma(&self) -> f64 {
        self.timescale_gamma
    }

    pub fn is_one_hot(&self) -> bool {
        self.mask.len() == 1
    }

    /// True when every bit in the mask is set.
    pub fn achieved(&self, proto: &ProtoGoalVector) -> Result<bool> {
        let mut all = true;
        for &i in &self.mask {
            all &= proto.get(i)?;
        }
        Ok(all)
    }

    /// Goal cumulant `c_g`: 1 on attainment, else 0.
    pub fn cumulant(&self, proto: &ProtoGoalVector) -> Result<f64> {
        Ok(if self.achieved(proto)? { 1.0 } else { 0.0 })
    }

    /// Goal continuation `γ_g = γ (1 − c_g)`: zero on attainment.
    pub fn continuation(&self, proto: &ProtoGoalVector) -> Result<f64> {
        Ok(self.timescale_gamma * (1.0 - self.cumulant(proto)?))
    }

    /// Logical AND of two goals: the union of their masks, at the default timescale.
    pub fn combine_and(&self, other: &Goal) -> Result<Goal> {
        if self.mask == other.mask {
            return Err(Error::SelfCombination(self.mask.clone()));
        }
        Goal::new(self.mask.iter().chain(other.mask.iter()).copied())
    }
}

/// What the agent is conditioned on: a registered proto-goal, or the task
/// reward (the all-zero goal input).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Target {
    Task,
    Goal(ProtoGoalId),
}

impl Target {
    pub fn goal(self) -> Option<ProtoGoalId> {
        match self {
            Target::Task => None,
            Target::Goal(id) => Some(id),
        }
    }
}

/// Append-only registry of proto-goals. Entries `0..base_len` are the
/// environment's base bits; later entries are AND-combinations.
#[derive(Debug, Clone)]
pub struct Registry {
    base_len: usize,
    goals: Vec<Goal>,
    labels: Vec<String>,
    index: HashMap<Vec<usize>, ProtoGoalId>,
}

impl Registry {
    pub fn new(base_labels: Vec<String>) -> Self {
        let base_len = base_labels.len();
        let goals: Vec<Goal> = (0..base_len).map(Goal::single).collect();
        let index = goals
            .iter()
            .enumerate()
            .map(|(i, g)| (g.mask.clone(), ProtoGoalId(i)))
            .collect();
        Self { base_len, goals, labels: base_labels, index }
    }

    pub fn with_base_len(base_len: usize) -> Self {
        Self::new((0..base_len).map(|i| format!("b{i}")).collect())
    }

    pub fn len(&self) -> usize {
        self.goals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.goals.is_empty()
    }

    pub fn base_len(&self) -> usize {
        self.base_len
    }

    pub fn ids(&self) -> impl Iterator<Item = ProtoGoalId> {
        (0..self.goals.len()).map(ProtoGoalId)
    }

    pub fn goal(&self, id: ProtoGoalId) -> &Goal {
        &self.goals[id.0]
    }

    pub fn label(&self, id: ProtoGoalId) -> &str {
        &self.labels[id.0]
    }

    pub fn lookup(&self, goal: &Goal) -> Option<ProtoGoalId> {
        self.canonical_mask(goal).ok().and_then(|m| self.index.get(&m).copied())
    }

    fn canonical_mask(&self, goal: &Goal) -> Result<Vec<usize>> {
        let mut mask = Vec::with_capacity(goal.mask.len());
        for &i in &goal.mask {
            let entry = self
                .goals
                .get(i)
                .ok_or(Error::RegistryMismatch { index: i, len: self.len() })?;
            mask.extend_from_slice(&entry.mask);
        }
        mask.sort_unstable();
        mask.dedup();
        Ok(mask)
    }

    /// Register a goal as a proto-goal. Returns its index and whether it was
    /// newly added; an already-registered mask returns the existing index.
    pub fn register(&mut self, goal: &Goal) -> Result<(ProtoGoalId, bool)> {
        let mask = self.canonical_mask(goal)?;
        if let Some(&id) = self.index.get(&mask) {
            return Ok((id, false));
        }
        let id = ProtoGoalId(self.goals.len());
        let label = mask
            .iter()
            .map(|&i| self.labels[i].as_str())
            .collect::<Vec<_>>()
            .join(" & ");
        self.goals.push(Goal { mask: mask.clone(), timescale_gamma: goal.timescale_gamma });
        self.labels.push(label);
        self.index.insert(mask, id);
        Ok((id, true))
    }

    /// Extend an environment's base vector with the current combination bits.
    pub fn annotate(&self, base: &ProtoGoalVector) -> Result<ProtoGoalVector> {
        if base.len() != self.base_len {
            return Err(Error::RegistryMismatch { index: self.base_len, len: base.len() });
        }
        let mut out = base.clone();
        for goal in &self.goals[self.base_len..] {
            out.push(goal.achieved(base)?);
        }
        Ok(out)
    }
}

/// One logged environment transition `(s, a, r, s', b)`.
///
/// `proto` annotates the arrival at `next_state`; `done` marks a true
/// terminal (no bootstrapping), not a step-cap truncation.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: u64,
    pub action: usize,
    pub extrinsic_reward: f64,
    pub next_state: u64,
    pub proto: ProtoGoalVector,
    pub done: bool,
}

impl Transition {
    /// Whether `goal` is attained on this transition; bits registered after
    /// logging read as zero.
    pub fn achieves(&self, goal: &Goal) -> bool {
        goal.mask.iter().all(|&i| self.proto.bits.get(i).map(|b| *b).unwrap_or(false))
    }

    pub fn achieves_id(&self, id: ProtoGoalId) -> bool {
        self.proto.bits.get(id.0).map(|b| *b).unwrap_or(false)
    }
}

/// Lifetime statistics for one proto-goal.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GoalStats {
    count: u64,
    mean_extrinsic_reward: f64,
    success_history: VecDeque<bool>,
}

impl GoalStats {
    pub fn count(&self) -> u64 {
        self.count
    }

    /// Running mean of extrinsic reward over attainments; `None` before the
    /// first attainment.
    pub fn mean_extrinsic_reward(&self) -> Option<f64> {
        (self.count > 0).then_some(self.mean_extrinsic_reward)
    }

    /// `R(g)`, reading zero before the first attainment.
    pub fn reward_relevance(&self) -> f64 {
        self.mean_extrinsic_reward
    }

    pub fn record_achievement(&mut self, extrinsic_reward: f64) {
        self.count += 1;
        self.mean_extrinsic_reward +=
            (extrinsic_reward - self.mean_extrinsic_reward) / self.count as f64;
    }

    pub fn record_pursuit_outcome(&mut self, success: bool) {
        if self.success_history.len() == SUCCESS_HISTORY_LEN {
            self.success_history.pop_front();
        }
        self.success_history.push_back(success);
    }

    pub fn success_history(&self) -> impl Iterator<Item = bool> + '_ {
        self.success_history.iter().copied()
    }

    pub fn success_ratio(&self) -> Option<f64> {
        if self.success_history.is_empty() {
            return None;
        }
        let wins = self.success_history.iter().filter(|&&s| s).count();
        Some(wins as f64 / self.success_history.len() as f64)
    }

    /// Mastery: at least `min_count` attainments and a recent success ratio
    /// strictly above `kappa`.
    pub fn is_mastered(&self, min_count: u64, kappa: f64) -> bool {
        self.count >= min_count && self.success_ratio().is_some_and(|s| s > kappa)
    }
}

/// Per-proto-goal statistics, indexed like the registry.
#[derive(Debug, Clone, Default)]
pub struct StatsTable {
    stats: Vec<GoalStats>,
}

impl StatsTable {
    pub fn new(len: usize) -> Self {
        Self { stats: vec![GoalStats::default(); len] }
    }

    /// Grow to the registry size; new entries start from zero.
    pub fn sync_len(&mut self, len: usize) {
        if self.stats.len() < len {
            self.stats.resize(len, GoalStats::default());
        }
    }

    pub fn len(&self) -> usize {
        self.stats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stats.is_empty()
    }

    pub fn get(&self, id: ProtoGoalId) -> &GoalStats {
        &self.stats[id.0]
    }

    pub fn get_mut(&mut self, id: ProtoGoalId) -> &mut GoalStats {
        &mut self.stats[id.0]
    }

    /// Count every proto-goal set in `proto` as attained once.
    pub fn record_transition(&mut self, proto: &ProtoGoalVector, extrinsic_reward: f64) {
        self.sync_len(proto.len());
        for i in proto.ones() {
            self.stats[i].record_achievement(extrinsic_reward);
        }
    }

    pub fn observed(&self) -> impl Iterator<Item = ProtoGoalId> + '_ {
        self.stats
            .iter()
            .enumerate()
            .filter(|(_, s)| s.count > 0)
            .map(|(i, _)| ProtoGoalId(i))
    }
}

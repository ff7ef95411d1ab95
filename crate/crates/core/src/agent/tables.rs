//! Zero-initialised tabular action values for the task and every proto-goal.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::proto::{Goal, ProtoGoalId, Registry, Target, Transition};

/// Which value function a transition is used to update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateKind {
    Task,
    Seek(ProtoGoalId),
    Avoid(ProtoGoalId),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSize {
    pub alpha: f64,
    /// Use `max(alpha, 1/n(s,a))`, so that the first visit to a pair copies
    /// its target and later visits fall back to the constant rate.
    pub visit_warm_start: bool,
}

impl StepSize {
    fn rate(&self, visits: u32) -> f64 {
        if self.visit_warm_start {
            self.alpha.max(1.0 / visits as f64)
        } else {
            self.alpha
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    n_actions: usize,
    values: Vec<f64>,
    visits: Vec<u32>,
}

impl QTable {
    pub fn new(n_states: usize, n_actions: usize) -> Self {
        Self { n_actions, values: vec![0.0; n_states * n_actions], visits: vec![0; n_states * n_actions] }
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn row(&self, state: u64) -> &[f64] {
        let i = state as usize * self.n_actions;
        &self.values[i..i + self.n_actions]
    }

    pub fn get(&self, state: u64, action: usize) -> f64 {
        self.values[state as usize * self.n_actions + action]
    }

    pub fn visits(&self, state: u64, action: usize) -> u32 {
        self.visits[state as usize * self.n_actions + action]
    }

    pub fn max(&self, state: u64) -> f64 {
        self.row(state).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Maximum over the actions that have been updated at least once.
    pub fn max_tried(&self, state: u64) -> Option<f64> {
        let i = state as usize * self.n_actions;
        (i..i + self.n_actions)
            .filter(|&j| self.visits[j] > 0)
            .map(|j| self.values[j])
            .reduce(f64::max)
    }

    /// Greedy action; ties go to the lowest action id.
    pub fn argmax(&self, state: u64) -> usize {
        argmax(self.row(state))
    }

    pub fn update(&mut self, state: u64, action: usize, target: f64, step: StepSize) {
        let i = state as usize * self.n_actions + action;
        self.visits[i] = self.visits[i].saturating_add(1);
        let rate = step.rate(self.visits[i]);
        self.values[i] += rate * (target - self.values[i]);
    }

    /// Set a single entry. Intended for tests and oracles.
    pub fn set(&mut self, state: u64, action: usize, value: f64) {
        self.values[state as usize * self.n_actions + action] = value;
    }
}

/// How greedy action selection resolves equal values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    LowestId,
    Uniform,
}

/// Greedy action under `tie_break`.
pub fn greedy<R: Rng + ?Sized>(values: &[f64], tie_break: TieBreak, rng: &mut R) -> usize {
    let best = argmax(values);
    if tie_break == TieBreak::LowestId {
        return best;
    }
    let top = values[best];
    let n = values.iter().filter(|&&v| v == top).count();
    if n == 1 {
        return best;
    }
    let k = rng.random_range(0..n);
    values.iter().enumerate().filter(|(_, &v)| v == top).nth(k).map_or(best, |(a, _)| a)
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (a, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = a;
        }
    }
    best
}

/// Task table plus per-goal seek and avoid tables.
#[derive(Debug, Clone)]
pub struct QTables {
    n_states: usize,
    n_actions: usize,
    pub discount: f64,
    pub step: StepSize,
    task: QTable,
    seek: Vec<QTable>,
    avoid: Vec<QTable>,
}

impl QTables {
    pub fn new(n_states: usize, n_actions: usize, n_goals: usize, discount: f64, step: StepSize) -> Self {
        let mut t = Self {
            n_states,
            n_actions,
            discount,
            step,
            task: QTable::new(n_states, n_actions),
            seek: Vec::new(),
            avoid: Vec::new(),
        };
        t.sync_len(n_goals);
        t
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_goals(&self) -> usize {
        self.seek.len()
    }

    /// Allocate zero tables for newly registered goals.
    pub fn sync_len(&mut self, n_goals: usize) {
        while self.seek.len() < n_goals {
            self.seek.push(QTable::new(self.n_states, self.n_actions));
            self.avoid.push(QTable::new(self.n_states, self.n_actions));
        }
    }

    pub fn task(&self) -> &QTable {
        &self.task
    }

    pub fn task_mut(&mut self) -> &mut QTable {
        &mut self.task
    }

    pub fn seek(&self, id: ProtoGoalId) -> &QTable {
        &self.seek[id.0]
    }

    pub fn seek_mut(&mut self, id: ProtoGoalId) -> &mut QTable {
        &mut self.seek[id.0]
    }

    pub fn avoid(&self, id: ProtoGoalId) -> &QTable {
        &self.avoid[id.0]
    }

    pub fn avoid_mut(&mut self, id: ProtoGoalId) -> &mut QTable {
        &mut self.avoid[id.0]
    }

    /// `V(s, g) = max_a Q_seek^g(s, a)`.
    pub fn goal_value(&self, state: u64, id: ProtoGoalId) -> f64 {
        self.seek[id.0].max(state)
    }

    fn check(&self, t: &Transition) -> Result<()> {
        for s in [t.state, t.next_state] {
            if s as usize >= self.n_states {
                return Err(Error::DimensionMismatch { expected: self.n_states, got: s as usize + 1 });
            }
        }
        if t.action >= self.n_actions {
            return Err(Error::InvalidAction { action: t.action, n_actions: self.n_actions });
        }
        Ok(())
    }

    /// One Q-learning step. The task table uses the extrinsic reward and the
    /// agent discount; goal tables use the cumulant (negated for avoid) and
    /// bootstrap with the goal's continuation. True terminals never bootstrap.
    pub fn q_update(&mut self, registry: &Registry, t: &Transition, kind: UpdateKind) -> Result<()> {
        self.check(t)?;
        match kind {
            UpdateKind::Task => {
                let boot = if t.done { 0.0 } else { self.discount * self.task.max(t.next_state) };
                let step = self.step;
                self.task.update(t.state, t.action, t.extrinsic_reward + boot, step);
            }
            UpdateKind::Seek(id) | UpdateKind::Avoid(id) => {
                if id.0 >= self.seek.len() {
                    return Err(Error::UnknownGoal(id.0));
                }
                let goal = registry.goal(id);
                let sign = if matches!(kind, UpdateKind::Seek(_)) { 1.0 } else { -1.0 };
                self.goal_update(goal, id, t, sign);
            }
        }
        Ok(())
    }

    fn goal_update(&mut self, goal: &Goal, id: ProtoGoalId, t: &Transition, sign: f64) {
        let c = if t.achieves(goal) { 1.0 } else { 0.0 };
        let cont = if t.done { 0.0 } else { goal.timescale_gamma() * (1.0 - c) };
        let step = self.step;
        let table = if sign > 0.0 { &mut self.seek[id.0] } else { &mut self.avoid[id.0] };
        let boot = if cont > 0.0 { cont * table.max(t.next_state) } else { 0.0 };
        table.update(t.state, t.action, sign * c + boot, step);
    }

    /// Task update plus seek and avoid updates for every registered goal.
    pub fn update_all(&mut self, registry: &Registry, t: &Transition) -> Result<()> {
        self.q_update(registry, t, UpdateKind::Task)?;
        for id in registry.ids() {
            let goal = registry.goal(id);
            self.goal_update(goal, id, t, 1.0);
            self.goal_update(goal, id, t, -1.0);
        }
        Ok(())
    }

    /// Task update plus seek and avoid updates for the listed goals only.
    pub fn update_goals(&mut self, registry: &Registry, t: &Transition, goals: &[ProtoGoalId]) -> Result<()> {
        self.q_update(registry, t, UpdateKind::Task)?;
        for &id in goals {
            self.q_update(registry, t, UpdateKind::Seek(id))?;
            self.q_update(registry, t, UpdateKind::Avoid(id))?;
        }
        Ok(())
    }

    /// ε-greedy action with respect to the seek table of the target goal (or
    /// the task table); greedy ties go to the lowest action id.
    pub fn act<R: Rng + ?Sized>(&self, state: u64, target: Target, epsilon: f64, rng: &mut R) -> usize {
        self.act_with(state, target, epsilon, TieBreak::LowestId, rng)
    }

    pub fn act_with<R: Rng + ?Sized>(
        &self,
        state: u64,
        target: Target,
        epsilon: f64,
        tie_break: TieBreak,
        rng: &mut R,
    ) -> usize {
        if epsilon > 0.0 && rng.random_bool(epsilon.min(1.0)) {
            return rng.random_range(0..self.n_actions);
        }
        let table = match target {
            Target::Task => &self.task,
            Target::Goal(id) => &self.seek[id.0],
        };
        greedy(table.row(state), tie_break, rng)
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::proto::ProtoGoalVector;

    const UNIT: StepSize = StepSize { alpha: 1.0, visit_warm_start: false };

    fn transition(s: u64, a: usize, s2: u64, bits: &[usize], n: usize) -> Transition {
        Transition {
            state: s,
            action: a,
            extrinsic_reward: 0.0,
            next_state: s2,
            proto: ProtoGoalVector::from_indices(n, bits.iter().copied()),
            done: false,
        }
    }

    #[test]
    fn attainment_sets_seek_to_one() {
        let reg = Registry::with_base_len(2);
        let mut q = QTables::new(2, 2, 2, 0.99, UNIT);
        q.q_update(&reg, &transition(0, 1, 1, &[0], 2), UpdateKind::Seek(ProtoGoalId(0))).unwrap();
        assert_eq!(q.seek(ProtoGoalId(0)).get(0, 1), 1.0);
        q.q_update(&reg, &transition(0, 1, 1, &[0], 2), UpdateKind::Avoid(ProtoGoalId(0))).unwrap();
        assert_eq!(q.avoid(ProtoGoalId(0)).get(0, 1), -1.0);
    }

    #[test]
    fn non_attainment_on_zero_tables_is_a_noop() {
        let reg = Registry::with_base_len(2);
        let mut q = QTables::new(2, 2, 2, 0.99, UNIT);
        q.q_update(&reg, &transition(0, 0, 1, &[], 2), UpdateKind::Seek(ProtoGoalId(1))).unwrap();
        assert!(q.seek(ProtoGoalId(1)).row(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn update_all_touches_only_achieved_goals() {
        let reg = Registry::with_base_len(2);
        let mut q = QTables::new(2, 2, 2, 0.99, UNIT);
        q.update_all(&reg, &transition(0, 0, 1, &[], 2)).unwrap();
        assert_eq!(q.seek(ProtoGoalId(0)).get(0, 0), 0.0);
        assert_eq!(q.seek(ProtoGoalId(1)).get(0, 0), 0.0);
        q.update_all(&reg, &transition(0, 0, 1, &[1], 2)).unwrap();
        assert_eq!(q.seek(ProtoGoalId(0)).get(0, 0), 0.0);
        assert_eq!(q.seek(ProtoGoalId(1)).get(0, 0), 1.0);
        assert_eq!(q.avoid(ProtoGoalId(1)).get(0, 0), -1.0);
    }

    #[test]
    fn warm_start_rate() {
        let step = StepSize { alpha: 0.1, visit_warm_start: true };
        let mut t = QTable::new(1, 1);
        t.update(0, 0, 1.0, step);
        assert_eq!(t.get(0, 0), 1.0);
        t.update(0, 0, 0.0, step);
        assert_eq!(t.get(0, 0), 0.5);
        for _ in 0..20 {
            t.update(0, 0, 0.0, step);
        }
        assert!(t.get(0, 0) > 0.0);
        assert_eq!(t.visits(0, 0), 22);
        assert_eq!(t.max_tried(0), Some(t.get(0, 0)));
        assert_eq!(QTable::new(1, 3).max_tried(0), None);
    }

    #[test]
    fn greedy_ties_and_errors() {
        let reg = Registry::with_base_len(1);
        let mut q = QTables::new(3, 4, 1, 0.99, UNIT);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(q.act(0, Target::Task, 0.0, &mut rng), 0);
        q.task_mut().set(0, 2, 0.5);
        q.task_mut().set(0, 3, 0.5);
        assert_eq!(q.act(0, Target::Task, 0.0, &mut rng), 2);
        assert!(q.q_update(&reg, &transition(5, 0, 0, &[], 1), UpdateKind::Task).is_err());
        assert!(matches!(
            q.q_update(&reg, &transition(0, 0, 1, &[], 1), UpdateKind::Seek(ProtoGoalId(3))),
            Err(Error::UnknownGoal(3))
        ));
    }

    #[test]
    fn terminal_task_update_does_not_bootstrap() {
        let reg = Registry::with_base_len(1);
        let mut q = QTables::new(2, 1, 1, 0.5, UNIT);
        q.task_mut().set(1, 0, 10.0);
        let mut t = transition(0, 0, 1, &[], 1);
        t.extrinsic_reward = 1.0;
        q.q_update(&reg, &t, UpdateKind::Task).unwrap();
        assert_eq!(q.task().get(0, 0), 6.0);
        t.done = true;
        q.q_update(&reg, &t, UpdateKind::Task).unwrap();
        assert_eq!(q.task().get(0, 0), 1.0);
    }
}

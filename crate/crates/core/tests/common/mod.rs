//! Independent oracles and property checks shared by the integration tests
//! and the acceptance run.

#![allow(dead_code)]

use std::collections::BTreeMap;

use protogoal::agent::{select_goal, QTables, StepSize};
use protogoal::pge::{self, GoalSpace, PgeConfig};
use protogoal::seek_avoid::{BatchValues, GoalValues, LspiConfig, SeekAvoidFitter};
use protogoal::{Goal, ProtoGoalId, ProtoGoalVector, Registry, StatsTable, Target, Transition};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A finite MDP given as a full batch of logged samples. The goal bit is set
/// on arrival in any state of `goal_states`.
#[derive(Debug, Clone)]
pub struct SampleMdp {
    pub n_states: usize,
    pub n_actions: usize,
    pub goal_states: Vec<usize>,
    /// `(s, a, s', done)`
    pub samples: Vec<(usize, usize, usize, bool)>,
}

impl SampleMdp {
    /// Two states A=0 and B=1; action 1 moves A to B, action 0 stays. B is
    /// absorbing. Goal: be at B.
    pub fn chain() -> Self {
        Self {
            n_states: 2,
            n_actions: 2,
            goal_states: vec![1],
            samples: vec![(0, 0, 0, false), (0, 1, 1, false), (1, 0, 1, false), (1, 1, 1, false)],
        }
    }

    /// Every `(s, a)` sampled `reps` times with uniformly random successors;
    /// about one sample in ten ends the episode.
    pub fn random(n_states: usize, n_actions: usize, reps: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut goal_states: Vec<usize> = (0..n_states).filter(|_| rng.random_bool(0.3)).collect();
        if goal_states.is_empty() {
            goal_states.push(rng.random_range(0..n_states));
        }
        let mut samples = Vec::new();
        for s in 0..n_states {
            for a in 0..n_actions {
                for _ in 0..reps {
                    samples.push((s, a, rng.random_range(0..n_states), rng.random_bool(0.1)));
                }
            }
        }
        Self { n_states, n_actions, goal_states, samples }
    }

    pub fn achieves(&self, next: usize) -> bool {
        self.goal_states.contains(&next)
    }

    pub fn transitions(&self) -> Vec<Transition> {
        self.samples
            .iter()
            .map(|&(s, a, n, done)| Transition {
                state: s as u64,
                action: a,
                extrinsic_reward: 0.0,
                next_state: n as u64,
                proto: ProtoGoalVector::from_bools([self.achieves(n)]),
                done,
            })
            .collect()
    }

    pub fn one_hot(&self, scale: f64) -> impl Fn(u64, &mut [f64]) + '_ {
        move |s: u64, out: &mut [f64]| {
            out.fill(0.0);
            out[s as usize] = scale;
        }
    }

    /// Exact evaluation of a deterministic policy on the empirical model by
    /// fixed-point iteration. `sign` is +1 for seek and -1 for avoid.
    pub fn evaluate(&self, policy: &[usize], sign: f64, gamma: f64) -> Vec<Vec<f64>> {
        let mut q = vec![vec![0.0; self.n_actions]; self.n_states];
        for _ in 0..5000 {
            let mut sum = vec![vec![0.0; self.n_actions]; self.n_states];
            let mut count = vec![vec![0usize; self.n_actions]; self.n_states];
            for &(s, a, n, done) in &self.samples {
                let c = self.achieves(n);
                let boot = if c || done { 0.0 } else { gamma * q[n][policy[n]] };
                sum[s][a] += if c { sign } else { 0.0 } + boot;
                count[s][a] += 1;
            }
            let next: Vec<Vec<f64>> = sum
                .iter()
                .zip(&count)
                .map(|(row, cnt)| row.iter().zip(cnt).map(|(v, &c)| if c == 0 { 0.0 } else { v / c as f64 }).collect())
                .collect();
            let delta = q
                .iter()
                .flatten()
                .zip(next.iter().flatten())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            q = next;
            if delta < 1e-15 {
                break;
            }
        }
        q
    }

    /// Two policy-iteration steps from the lowest-action policy. Returns the
    /// final Q and the smallest gap between the best and second-best action
    /// of the intermediate Q, which must be clear of zero for greedy
    /// improvement to be well defined.
    pub fn two_step_pi(&self, sign: f64, gamma: f64) -> (Vec<Vec<f64>>, f64) {
        let q0 = self.evaluate(&vec![0; self.n_states], sign, gamma);
        let mut margin = f64::INFINITY;
        let policy: Vec<usize> = q0
            .iter()
            .map(|row| {
                let best = argmax(row);
                for (a, &v) in row.iter().enumerate() {
                    if a != best {
                        margin = margin.min(row[best] - v);
                    }
                }
                best
            })
            .collect();
        (self.evaluate(&policy, sign, gamma), margin)
    }
}

pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

pub fn one_goal() -> Vec<(ProtoGoalId, Goal)> {
    vec![(ProtoGoalId(0), Goal::single(0))]
}

/// Largest absolute difference between fitted one-hot LSPI weights and the
/// two-step policy-iteration oracle, for seek and avoid.
pub fn lspi_vs_oracle(mdp: &SampleMdp, gamma: f64) -> f64 {
    let fitter = SeekAvoidFitter::identity(mdp.n_states, mdp.n_actions, LspiConfig { gamma, ..LspiConfig::default() });
    let model = fitter.fit(&mdp.transitions(), &one_goal(), &mdp.one_hot(1.0)).expect("fit");
    let w = model.weights(ProtoGoalId(0)).expect("weights");
    let mut worst: f64 = 0.0;
    for (sign, weights) in [(1.0, &w.seek), (-1.0, &w.avoid)] {
        let (q, _) = mdp.two_step_pi(sign, gamma);
        for s in 0..mdp.n_states {
            for a in 0..mdp.n_actions {
                worst = worst.max((weights[a * mdp.n_states + s] - q[s][a]).abs());
            }
        }
    }
    worst
}

/// Random MDPs of 2 to 6 states whose intermediate greedy step has no
/// near-ties, so the oracle's policy is unambiguous.
pub fn well_posed_mdps(count: usize) -> Vec<SampleMdp> {
    let mut out = Vec::new();
    let mut seed = 0;
    while out.len() < count {
        let n_states = 2 + (seed as usize % 5);
        let n_actions = 2 + (seed as usize % 2);
        let mdp = SampleMdp::random(n_states, n_actions, 3, seed);
        seed += 1;
        if [1.0, -1.0].iter().all(|&sign| mdp.two_step_pi(sign, 0.95).1 > 1e-6) {
            out.push(mdp);
        }
    }
    out
}

// Property checks. Each returns an error message describing the violation.

pub type Check = Result<(), String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Check {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Cumulant and continuation are never both non-zero, and continuation is
/// `γ (1 − c)`.
pub fn check_cumulant_continuation(mask: &[usize], bits: &[bool], gamma: f64) -> Check {
    let goal = Goal::with_timescale(mask.iter().copied(), gamma).map_err(|e| e.to_string())?;
    let proto = ProtoGoalVector::from_bools(bits.iter().copied());
    let c = goal.cumulant(&proto).map_err(|e| e.to_string())?;
    let cont = goal.continuation(&proto).map_err(|e| e.to_string())?;
    let all = mask.iter().all(|&i| bits[i]);
    ensure(c == if all { 1.0 } else { 0.0 }, || format!("cumulant {c} for mask {mask:?} on {bits:?}"))?;
    ensure(c * cont == 0.0, || format!("cumulant {c} and continuation {cont} both non-zero"))?;
    ensure((cont - gamma * (1.0 - c)).abs() < 1e-15, || format!("continuation {cont} != γ(1-c)"))
}

pub fn stats_from(counts: &[u64], rewards: &[f64]) -> StatsTable {
    let mut stats = StatsTable::new(counts.len());
    for (i, (&n, &r)) in counts.iter().zip(rewards).enumerate() {
        for _ in 0..n {
            stats.get_mut(ProtoGoalId(i)).record_achievement(r);
        }
    }
    stats
}

pub fn values_from(seek: &[Vec<f64>], avoid: &[Vec<f64>], achieved: &[bool]) -> BatchValues {
    BatchValues {
        states: (0..seek.first().map_or(0, Vec::len) as u64).collect(),
        goals: (0..seek.len())
            .map(|i| {
                (
                    ProtoGoalId(i),
                    GoalValues { seek: seek[i].clone(), avoid: avoid[i].clone(), achieved_in_batch: achieved[i] },
                )
            })
            .collect::<BTreeMap<_, _>>(),
    }
}

/// Pruning keeps a subset chain `active ⊆ space ⊆ observed`, every member
/// of the space passes the criteria it can be judged on, and `P_G` sums to
/// one on both spaces.
pub fn check_pruning_chain(
    counts: &[u64],
    rewards: &[f64],
    seek: &[Vec<f64>],
    avoid: &[Vec<f64>],
    achieved: &[bool],
    seed: u64,
) -> Check {
    let n = counts.len();
    let registry = Registry::with_base_len(n);
    let stats = stats_from(counts, rewards);
    let values = values_from(seek, avoid, achieved);
    let cfg = PgeConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ev = pge::evaluate(&registry, &values, &stats, &cfg, &mut rng).map_err(|e| e.to_string())?;
    for e in ev.space.entries() {
        let a = &ev.assessments[e.id.0];
        ensure(stats.get(e.id).count() >= 1, || format!("unobserved goal {} in space", e.id))?;
        ensure(!a.achieved_in_batch || (a.reachable && a.controllable), || format!("goal {} fails a criterion", e.id))?;
    }
    for id in ev.active.ids() {
        ensure(ev.space.contains(id), || format!("active goal {id} outside the plausible space"))?;
    }
    for space in [&ev.space, &ev.active] {
        if !space.is_empty() {
            let total: f64 = space.entries().iter().map(|e| e.probability).sum();
            ensure((total - 1.0).abs() < 1e-9, || format!("P_G sums to {total}"))?;
        }
        let buckets = space.n_buckets();
        ensure(buckets <= cfg.buckets, || format!("{buckets} buckets"))?;
        if buckets > 0 {
            let sizes: Vec<usize> = (0..buckets).map(|b| space.bucket(b).count()).collect();
            let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
            ensure(hi - lo <= 1, || format!("bucket sizes {sizes:?}"))?;
        }
    }
    let expected: Vec<ProtoGoalId> = (0..n)
        .map(ProtoGoalId)
        .filter(|&id| {
            let a = &ev.assessments[id.0];
            counts[id.0] >= 1 && (!achieved[id.0] || (a.reachable && a.controllable))
        })
        .collect();
    let got: Vec<ProtoGoalId> = ev.space.ids().collect();
    ensure(got == expected, || format!("plausible set {got:?}, expected {expected:?}"))
}

/// Combinations need two mastered candidates (N ≥ 10, success ratio
/// strictly above κ) and are never registered twice.
pub fn check_recombination(histories: &[(u64, Vec<bool>)], seed: u64) -> Check {
    let n = histories.len();
    let mut registry = Registry::with_base_len(n);
    let mut stats = StatsTable::new(n);
    for (i, (count, outcomes)) in histories.iter().enumerate() {
        let s = stats.get_mut(ProtoGoalId(i));
        for _ in 0..*count {
            s.record_achievement(0.0);
        }
        for &o in outcomes {
            s.record_pursuit_outcome(o);
        }
    }
    let cfg = PgeConfig::default();
    let mastered: Vec<ProtoGoalId> = (0..n)
        .map(ProtoGoalId)
        .filter(|&id| {
            let (count, outcomes) = &histories[id.0];
            let recent = &outcomes[outcomes.len().saturating_sub(10)..];
            let ratio = recent.iter().filter(|&&o| o).count() as f64 / recent.len().max(1) as f64;
            *count >= 10 && !recent.is_empty() && ratio > 0.6
        })
        .collect();
    let candidates: Vec<ProtoGoalId> = (0..n).map(ProtoGoalId).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = Vec::new();
    for _ in 0..20 {
        let before = registry.len();
        let new = pge::propose_combination(&mut registry, &mut stats, &candidates, &cfg, &mut rng)
            .map_err(|e| e.to_string())?;
        match new {
            Some(id) => {
                ensure(mastered.len() >= 2, || format!("combination with {} mastered goals", mastered.len()))?;
                ensure(registry.len() == before + 1, || "registry grew by more than one".into())?;
                let mask = registry.goal(id).mask().to_vec();
                ensure(mask.iter().all(|&b| mastered.contains(&ProtoGoalId(b))), || format!("unmastered part in {mask:?}"))?;
                ensure(!seen.contains(&mask), || format!("mask {mask:?} registered twice"))?;
                ensure(stats.get(id).count() == 0, || "combination inherited statistics".into())?;
                seen.push(mask);
            }
            None => ensure(registry.len() == before, || "registry changed without a new goal".into())?,
        }
    }
    if mastered.len() < 2 {
        ensure(seen.is_empty(), || "combination registered without two mastered goals".into())?;
    }
    Ok(())
}

/// Relative frequency of the better of two equally novel goals under
/// `m`-sample selection; the oracle is `1 − (1/2)^m`.
pub fn best_goal_frequency(m: usize, trials: usize, seed: u64) -> f64 {
    let registry = Registry::with_base_len(2);
    let stats = stats_from(&[4, 4], &[0.0, 0.0]);
    let space = GoalSpace::build(&[ProtoGoalId(0), ProtoGoalId(1)], &stats, &|_| 0.5, 1, 1e-6);
    let mut tables = QTables::new(1, 2, 2, 0.99, StepSize { alpha: 0.1, visit_warm_start: false });
    tables.seek_mut(ProtoGoalId(1)).set(0, 0, 0.7);
    tables.seek_mut(ProtoGoalId(0)).set(0, 0, 0.2);
    let current = ProtoGoalVector::zeros(2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hits = (0..trials)
        .filter(|_| select_goal(0, &current, &space, &registry, &tables, 0.0, m, &mut rng) == Target::Goal(ProtoGoalId(1)))
        .count();
    hits as f64 / trials as f64
}

/// `|p̂ − p| ≤ 3σ` for a binomial proportion.
pub fn within_3_sigma(observed: f64, p: f64, n: usize) -> bool {
    (observed - p).abs() <= 3.0 * (p * (1.0 - p) / n as f64).sqrt()
}

/// Pearson χ² statistic of `counts` against a uniform distribution.
pub fn chi_square_uniform(counts: &[usize]) -> f64 {
    let total: usize = counts.iter().sum();
    let expected = total as f64 / counts.len() as f64;
    counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum()
}

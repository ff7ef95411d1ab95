//! The proto-goal evaluator: prunes the registry to plausible goals, weights
//! them by desirability, stratifies them by timescale and proposes
//! AND-combinations of mastered goals.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::proto::{ProtoGoalId, Registry, StatsTable};
use crate::seek_avoid::BatchValues;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PgeConfig {
    /// Minimum `E[V_seek] − E[−V_avoid]` for a goal to count as controllable.
    /// Called τ₁ in the hyperparameter table and τ₂ in the controllability
    /// inequality; the value is 0.1 either way.
    pub controllability_threshold: f64,
    /// `max_s V_seek(s, g)` must exceed this for a goal to be reachable.
    pub reachability_threshold: f64,
    /// Size `K` of the goal multiset sampled from `P_G`.
    pub sample_size: usize,
    /// Mastery requires a recent success ratio strictly above `κ`.
    pub mastery_threshold: f64,
    pub mastery_min_count: u64,
    /// Number of timescale buckets `k`.
    pub buckets: usize,
    pub utility_floor: f64,
}

impl Default for PgeConfig {
    fn default() -> Self {
        Self {
            controllability_threshold: 0.1,
            reachability_threshold: 0.5,
            sample_size: 100,
            mastery_threshold: 0.6,
            mastery_min_count: 10,
            buckets: 5,
            utility_floor: 1e-6,
        }
    }
}

impl PgeConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must lie in (0, 1), got {v}")))
            }
        };
        unit("controllability_threshold", self.controllability_threshold)?;
        unit("reachability_threshold", self.reachability_threshold)?;
        unit("mastery_threshold", self.mastery_threshold)?;
        if self.sample_size == 0 || self.buckets == 0 {
            return Err(Error::Config("sample_size and buckets must be at least 1".into()));
        }
        Ok(())
    }
}

/// Why a proto-goal is (not) in the goal space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Plausible,
    /// Observed but absent from the estimation batch; kept optimistically.
    Optimistic,
    Unobserved,
    Unreachable,
    Uncontrollable,
}

impl Verdict {
    pub fn is_plausible(self) -> bool {
        matches!(self, Verdict::Plausible | Verdict::Optimistic)
    }
}

/// Per-criterion plausibility of one proto-goal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assessment {
    pub id: ProtoGoalId,
    pub observed: bool,
    pub achieved_in_batch: bool,
    pub reachable: bool,
    pub controllable: bool,
    pub max_seek: f64,
    pub controllability_gap: f64,
    pub verdict: Verdict,
}

/// Evaluate the observed / reachable / controllable criteria for every
/// registered proto-goal.
pub fn assess(registry: &Registry, values: &BatchValues, stats: &StatsTable, config: &PgeConfig) -> Vec<Assessment> {
    registry
        .ids()
        .map(|id| {
            let observed = id.0 < stats.len() && stats.get(id).count() >= 1;
            let v = values.get(id);
            let achieved_in_batch = v.is_some_and(|v| v.achieved_in_batch);
            let max_seek = v.map_or(0.0, |v| v.max_seek());
            let gap = v.map_or(0.0, |v| v.controllability_gap());
            let reachable = max_seek > config.reachability_threshold;
            let controllable = gap >= config.controllability_threshold;
            let verdict = if !observed {
                Verdict::Unobserved
            } else if !achieved_in_batch {
                Verdict::Optimistic
            } else if !controllable {
                Verdict::Uncontrollable
            } else if !reachable {
                Verdict::Unreachable
            } else {
                Verdict::Plausible
            };
            Assessment {
                id,
                observed,
                achieved_in_batch,
                reachable,
                controllable,
                max_seek,
                controllability_gap: gap,
                verdict,
            }
        })
        .collect()
}

/// Goals that are observed, reachable and controllable (or observed but
/// missing from the batch).
pub fn plausible_goals(registry: &Registry, values: &BatchValues, stats: &StatsTable, config: &PgeConfig) -> Vec<ProtoGoalId> {
    assess(registry, values, stats, config)
        .into_iter()
        .filter(|a| a.verdict.is_plausible())
        .map(|a| a.id)
        .collect()
}

/// Count-based novelty `1/sqrt(N)`.
pub fn novelty(count: u64) -> f64 {
    1.0 / (count.max(1) as f64).sqrt()
}

/// `h(g) = E_s[V_seek(s, g)]` over the batch states.
pub fn timescale(values: &BatchValues, goal: ProtoGoalId) -> f64 {
    values.get(goal).map_or(0.0, |v| v.mean_seek())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalEntry {
    pub id: ProtoGoalId,
    pub novelty: f64,
    pub utility: f64,
    pub probability: f64,
    pub timescale: f64,
    pub bucket: usize,
}

/// Plausible goals with their desirability distribution and timescale buckets.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GoalSpace {
    entries: Vec<GoalEntry>,
    n_buckets: usize,
}

impl GoalSpace {
    /// Desirability `u(g) = R(g) + 1/sqrt(N(g))` (floored), normalised into
    /// `P_G`, then stratified into `buckets` groups by `h(g)`.
    pub fn build(goals: &[ProtoGoalId], stats: &StatsTable, timescales: &dyn Fn(ProtoGoalId) -> f64, buckets: usize, utility_floor: f64) -> Self {
        let mut entries: Vec<GoalEntry> = goals
            .iter()
            .map(|&id| {
                let s = stats.get(id);
                let nov = novelty(s.count());
                GoalEntry {
                    id,
                    novelty: nov,
                    utility: (s.reward_relevance() + nov).max(utility_floor),
                    probability: 0.0,
                    timescale: timescales(id),
                    bucket: 0,
                }
            })
            .collect();
        entries.sort_by_key(|e| e.id);
        let total: f64 = entries.iter().map(|e| e.utility).sum();
        for e in &mut entries {
            e.probability = e.utility / total;
        }
        let n_buckets = stratify(&mut entries, buckets);
        Self { entries, n_buckets }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[GoalEntry] {
        &self.entries
    }

    pub fn entry(&self, id: ProtoGoalId) -> Option<&GoalEntry> {
        self.entries.binary_search_by_key(&id, |e| e.id).ok().map(|i| &self.entries[i])
    }

    pub fn contains(&self, id: ProtoGoalId) -> bool {
        self.entry(id).is_some()
    }

    pub fn ids(&self) -> impl Iterator<Item = ProtoGoalId> + '_ {
        self.entries.iter().map(|e| e.id)
    }

    pub fn n_buckets(&self) -> usize {
        self.n_buckets
    }

    pub fn bucket(&self, b: usize) -> impl Iterator<Item = &GoalEntry> {
        self.entries.iter().filter(move |e| e.bucket == b)
    }

    /// The sub-space spanned by the distinct goals of a sampled multiset,
    /// with `P_G` renormalised and buckets recomputed.
    pub fn restrict(&self, sample: &[ProtoGoalId], buckets: usize) -> GoalSpace {
        let mut entries: Vec<GoalEntry> = self.entries.iter().filter(|e| sample.contains(&e.id)).cloned().collect();
        let total: f64 = entries.iter().map(|e| e.utility).sum();
        for e in &mut entries {
            e.probability = e.utility / total;
        }
        let n_buckets = stratify(&mut entries, buckets);
        GoalSpace { entries, n_buckets }
    }
}

/// Sort by `(h, id)` and split into `min(k, n)` contiguous groups whose
/// sizes differ by at most one. Returns the number of buckets used.
pub fn stratify(entries: &mut [GoalEntry], k: usize) -> usize {
    let n = entries.len();
    if n == 0 {
        return 0;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        entries[a]
            .timescale
            .total_cmp(&entries[b].timescale)
            .then(entries[a].id.cmp(&entries[b].id))
    });
    let buckets = k.min(n);
    let (base, extra) = (n / buckets, n % buckets);
    let mut pos = 0;
    for b in 0..buckets {
        let size = base + usize::from(b < extra);
        for &i in &order[pos..pos + size] {
            entries[i].bucket = b;
        }
        pos += size;
    }
    buckets
}

/// `K` draws with replacement from `P_G`.
pub fn sample_goal_set<R: Rng + ?Sized>(space: &GoalSpace, k: usize, rng: &mut R) -> Result<Vec<ProtoGoalId>> {
    if space.is_empty() {
        return Err(Error::EmptyGoalSpace);
    }
    let dist = WeightedIndex::new(space.entries.iter().map(|e| e.probability))
        .map_err(|e| Error::Config(format!("degenerate goal distribution: {e}")))?;
    Ok((0..k).map(|_| space.entries[dist.sample(rng)].id).collect())
}

/// If at least two `candidates` are mastered, sample two of them without
/// replacement proportionally to their success ratio and register their
/// AND. Returns the new proto-goal, or `None` when nothing was added.
pub fn propose_combination<R: Rng + ?Sized>(
    registry: &mut Registry,
    stats: &mut StatsTable,
    candidates: &[ProtoGoalId],
    config: &PgeConfig,
    rng: &mut R,
) -> Result<Option<ProtoGoalId>> {
    let mastered: Vec<(ProtoGoalId, f64)> = candidates
        .iter()
        .filter_map(|&id| {
            let s = stats.get(id);
            s.is_mastered(config.mastery_min_count, config.mastery_threshold)
                .then(|| (id, s.success_ratio().unwrap_or(0.0)))
        })
        .collect();
    if mastered.len() < 2 {
        return Ok(None);
    }
    let pick = |pool: &[(ProtoGoalId, f64)], rng: &mut R| -> Result<usize> {
        let dist = WeightedIndex::new(pool.iter().map(|(_, s)| *s))
            .map_err(|e| Error::Config(format!("degenerate mastery distribution: {e}")))?;
        Ok(dist.sample(rng))
    };
    let mut pool = mastered;
    let first = pool.swap_remove(pick(&pool, rng)?);
    let second = pool[pick(&pool, rng)?];
    let combined = registry.goal(first.0).combine_and(registry.goal(second.0))?;
    let (id, added) = registry.register(&combined)?;
    if !added {
        return Ok(None);
    }
    stats.sync_len(registry.len());
    Ok(Some(id))
}

/// Result of one evaluator pass.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub assessments: Vec<Assessment>,
    /// All plausible goals.
    pub space: GoalSpace,
    /// The goals handed to the actor: the distinct members of a `K`-sample
    /// from `P_G`.
    pub active: GoalSpace,
}

/// Run plausibility pruning, desirability weighting, `K`-sampling and
/// stratification in one pass.
pub fn evaluate<R: Rng + ?Sized>(
    registry: &Registry,
    values: &BatchValues,
    stats: &StatsTable,
    config: &PgeConfig,
    rng: &mut R,
) -> Result<Evaluation> {
    let assessments = assess(registry, values, stats, config);
    let plausible: Vec<ProtoGoalId> = assessments.iter().filter(|a| a.verdict.is_plausible()).map(|a| a.id).collect();
    let space = GoalSpace::build(&plausible, stats, &|id| timescale(values, id), config.buckets, config.utility_floor);
    let active = if space.is_empty() {
        GoalSpace::default()
    } else {
        let sample = sample_goal_set(&space, config.sample_size, rng)?;
        space.restrict(&sample, config.buckets)
    };
    Ok(Evaluation { assessments, space, active })
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::seek_avoid::GoalValues;

    fn stats_with(counts_rewards: &[(u64, f64)]) -> StatsTable {
        let mut t = StatsTable::new(counts_rewards.len());
        for (i, &(n, r)) in counts_rewards.iter().enumerate() {
            for _ in 0..n {
                t.get_mut(ProtoGoalId(i)).record_achievement(r);
            }
        }
        t
    }

    fn values(entries: &[(usize, Vec<f64>, Vec<f64>, bool)]) -> BatchValues {
        BatchValues {
            states: vec![],
            goals: entries
                .iter()
                .map(|(i, s, a, ach)| {
                    (ProtoGoalId(*i), GoalValues { seek: s.clone(), avoid: a.clone(), achieved_in_batch: *ach })
                })
                .collect::<BTreeMap<_, _>>(),
        }
    }

    #[test]
    fn utilities_and_probabilities() {
        let stats = stats_with(&[(1, 0.0), (4, 0.5), (4, 0.5)]);
        let ids: Vec<_> = (0..3).map(ProtoGoalId).collect();
        let space = GoalSpace::build(&ids, &stats, &|_| 0.0, 5, 1e-6);
        for e in space.entries() {
            assert!((e.utility - 1.0).abs() < 1e-12);
            assert!((e.probability - 1.0 / 3.0).abs() < 1e-12);
        }
        // u = {1, 3}
        let mut stats = stats_with(&[(1, 0.0), (1, 2.0)]);
        stats.sync_len(2);
        let space = GoalSpace::build(&[ProtoGoalId(0), ProtoGoalId(1)], &stats, &|_| 0.0, 5, 1e-6);
        let p: Vec<f64> = space.entries().iter().map(|e| e.probability).collect();
        assert!((p[0] - 0.25).abs() < 1e-12 && (p[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn negative_utility_is_floored() {
        let stats = stats_with(&[(1, -5.0), (1, 0.0)]);
        let space = GoalSpace::build(&[ProtoGoalId(0), ProtoGoalId(1)], &stats, &|_| 0.0, 5, 1e-6);
        assert_eq!(space.entries()[0].utility, 1e-6);
        assert!(space.entries().iter().all(|e| e.probability >= 0.0));
    }

    #[test]
    fn plausibility_criteria() {
        // 0: plausible, 1: never observed, 2: uncontrollable, 3: unreachable,
        // 4: observed but absent from the batch
        let stats = stats_with(&[(3, 0.0), (0, 0.0), (3, 0.0), (3, 0.0), (2, 0.0)]);
        let reg = Registry::with_base_len(5);
        let vals = values(&[
            (0, vec![0.9, 0.1], vec![0.0, 0.0], true),
            (1, vec![0.9, 0.1], vec![0.0, 0.0], false),
            (2, vec![1.0, 1.0], vec![-1.0, -0.95], true),
            (3, vec![0.4, 0.3], vec![0.0, 0.0], true),
            (4, vec![0.0, 0.0], vec![0.0, 0.0], false),
        ]);
        let cfg = PgeConfig::default();
        let verdicts: Vec<_> = assess(&reg, &vals, &stats, &cfg).iter().map(|a| a.verdict).collect();
        assert_eq!(
            verdicts,
            vec![Verdict::Plausible, Verdict::Unobserved, Verdict::Uncontrollable, Verdict::Unreachable, Verdict::Optimistic]
        );
        assert_eq!(plausible_goals(&reg, &vals, &stats, &cfg), vec![ProtoGoalId(0), ProtoGoalId(4)]);
    }

    #[test]
    fn stratify_sizes() {
        let mk = |n: usize, h: &dyn Fn(usize) -> f64| -> Vec<GoalEntry> {
            (0..n)
                .map(|i| GoalEntry { id: ProtoGoalId(i), novelty: 1.0, utility: 1.0, probability: 0.0, timescale: h(i), bucket: 99 })
                .collect()
        };
        let mut e = mk(10, &|i| (10 - i) as f64);
        assert_eq!(stratify(&mut e, 5), 5);
        for b in 0..5 {
            assert_eq!(e.iter().filter(|x| x.bucket == b).count(), 2);
        }
        // lowest timescales land in bucket 0
        assert_eq!(e[9].bucket, 0);
        assert_eq!(e[0].bucket, 4);

        let mut e = mk(3, &|_| 0.5);
        assert_eq!(stratify(&mut e, 5), 3);
        assert_eq!(e.iter().map(|x| x.bucket).collect::<Vec<_>>(), vec![0, 1, 2]);

        let mut e = mk(7, &|_| 0.0);
        stratify(&mut e, 5);
        assert_eq!(e.iter().map(|x| x.bucket).collect::<Vec<_>>(), vec![0, 0, 1, 1, 2, 3, 4]);
    }

    #[test]
    fn single_goal_space_samples_itself() {
        let stats = stats_with(&[(2, 0.0)]);
        let space = GoalSpace::build(&[ProtoGoalId(0)], &stats, &|_| 0.0, 5, 1e-6);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(sample_goal_set(&space, 100, &mut rng).unwrap(), vec![ProtoGoalId(0); 100]);
        assert!(matches!(sample_goal_set(&GoalSpace::default(), 100, &mut rng), Err(Error::EmptyGoalSpace)));
    }

    fn mastered(stats: &mut StatsTable, id: usize, successes: usize) {
        let s = stats.get_mut(ProtoGoalId(id));
        for _ in 0..10 {
            s.record_achievement(0.0);
        }
        for i in 0..10 {
            s.record_pursuit_outcome(i < successes);
        }
    }

    #[test]
    fn one_mastered_goal_is_not_combined() {
        let mut reg = Registry::with_base_len(3);
        let mut stats = StatsTable::new(3);
        mastered(&mut stats, 0, 10);
        mastered(&mut stats, 1, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ids: Vec<_> = reg.ids().collect();
        assert_eq!(propose_combination(&mut reg, &mut stats, &ids, &PgeConfig::default(), &mut rng).unwrap(), None);
        assert_eq!(reg.len(), 3);
    }

    #[test]
    fn mastered_pair_is_registered_once() {
        let mut reg = Registry::with_base_len(3);
        let mut stats = StatsTable::new(3);
        mastered(&mut stats, 0, 10);
        mastered(&mut stats, 2, 10);
        let ids: Vec<_> = reg.ids().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cfg = PgeConfig::default();
        let id = propose_combination(&mut reg, &mut stats, &ids, &cfg, &mut rng).unwrap().unwrap();
        assert_eq!(reg.goal(id).mask(), &[0, 2]);
        assert_eq!(stats.len(), 4);
        assert_eq!(stats.get(id).count(), 0);
        for _ in 0..20 {
            assert_eq!(propose_combination(&mut reg, &mut stats, &ids, &cfg, &mut rng).unwrap(), None);
        }
        assert_eq!(reg.len(), 4);
    }

    #[test]
    fn goal_at_kappa_is_never_combined() {
        let mut reg = Registry::with_base_len(3);
        let mut stats = StatsTable::new(3);
        mastered(&mut stats, 0, 9);
        mastered(&mut stats, 1, 9);
        mastered(&mut stats, 2, 6);
        let ids: Vec<_> = reg.ids().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let id = propose_combination(&mut reg, &mut stats, &ids, &PgeConfig::default(), &mut rng).unwrap().unwrap();
        assert_eq!(reg.goal(id).mask(), &[0, 1]);
    }

    #[test]
    fn evaluate_on_empty_registry_stats() {
        let reg = Registry::with_base_len(4);
        let stats = StatsTable::new(4);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ev = evaluate(&reg, &BatchValues::default(), &stats, &PgeConfig::default(), &mut rng).unwrap();
        assert!(ev.space.is_empty() && ev.active.is_empty());
        assert!(ev.assessments.iter().all(|a| a.verdict == Verdict::Unobserved));
    }
}

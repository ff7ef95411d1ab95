//! Goal selection for on-policy pursuit and for hindsight relabelling.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index::sample_weighted;
use rand::Rng;

use super::tables::QTables;
use crate::pge::GoalSpace;
use crate::proto::{ProtoGoalId, ProtoGoalVector, Registry, StatsTable, Target};

/// Pick what to pursue from `state`.
///
/// With probability `p_task` (or when nothing is eligible) the task goal.
/// Otherwise a timescale bucket is drawn uniformly, `m` goals are drawn from
/// it with replacement proportionally to novelty, and the one with the
/// highest `max_a Q_seek(state, a)` wins (ties to the lowest id). Goals
/// already achieved in `current` are not eligible.
#[allow(clippy::too_many_arguments)]
pub fn select_goal<R: Rng + ?Sized>(
    state: u64,
    current: &ProtoGoalVector,
    space: &GoalSpace,
    registry: &Registry,
    tables: &QTables,
    p_task: f64,
    m: usize,
    rng: &mut R,
) -> Target {
    if space.is_empty() || (p_task > 0.0 && rng.random_bool(p_task.min(1.0))) {
        return Target::Task;
    }
    let eligible = |id: ProtoGoalId| !registry.goal(id).achieved(current).unwrap_or(false);
    let buckets: Vec<usize> =
        (0..space.n_buckets()).filter(|&b| space.bucket(b).any(|e| eligible(e.id))).collect();
    if buckets.is_empty() {
        return Target::Task;
    }
    let b = buckets[rng.random_range(0..buckets.len())];
    let members: Vec<_> = space.bucket(b).filter(|e| eligible(e.id)).collect();
    let Ok(dist) = WeightedIndex::new(members.iter().map(|e| e.novelty)) else {
        return Target::Task;
    };
    let mut best: Option<(f64, ProtoGoalId)> = None;
    for _ in 0..m.max(1) {
        let id = members[dist.sample(rng)].id;
        let v = tables.goal_value(state, id);
        best = match best {
            Some((bv, bid)) if bv > v || (bv == v && bid <= id) => Some((bv, bid)),
            _ => Some((v, id)),
        };
    }
    best.map_or(Target::Task, |(_, id)| Target::Goal(id))
}

/// Up to `m_her` distinct goals from `achieved`, sampled without
/// replacement proportionally to `1/sqrt(N(g))`.
pub fn hindsight_select<R: Rng + ?Sized>(
    achieved: &[ProtoGoalId],
    stats: &StatsTable,
    m_her: usize,
    rng: &mut R,
) -> Vec<ProtoGoalId> {
    if achieved.len() <= m_her {
        return achieved.to_vec();
    }
    let weight = |i: usize| crate::pge::novelty(stats.get(achieved[i]).count());
    match sample_weighted(rng, achieved.len(), weight, m_her) {
        Ok(idx) => idx.into_iter().map(|i| achieved[i]).collect(),
        Err(_) => achieved[..m_her].to_vec(),
    }
}

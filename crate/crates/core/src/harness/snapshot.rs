//! JSON snapshots of the evaluator's view of the proto-goal registry.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::sig9;
use crate::agent::ProtoGoalAgent;
use crate::envs::{SparseTaxi, TAXI_PROTO_BITS};
use crate::error::{Error, Result};
use crate::pge::{self, Assessment, Verdict};
use crate::proto::ProtoGoalId;
use crate::seek_avoid::BatchValues;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalSnapshot {
    pub id: usize,
    pub mask: Vec<usize>,
    pub label: String,
    pub count: u64,
    pub mean_reward: Option<f64>,
    pub success_ratio: Option<f64>,
    pub observed: bool,
    pub achieved_in_batch: bool,
    pub reachable: bool,
    pub controllable: bool,
    pub plausible: bool,
    pub reason: Verdict,
    pub max_seek: f64,
    pub controllability_gap: f64,
    /// `h(g)`, bucket and `P_G(g)` for plausible goals.
    pub timescale: Option<f64>,
    pub bucket: Option<usize>,
    pub probability: Option<f64>,
    /// Whether the goal is in the set currently handed to the actor.
    pub active: bool,
}

/// Explored/plausible classification of the Taxi grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaxiOccupancy {
    pub explored_cells: Vec<bool>,
    pub plausible_cells: Vec<bool>,
    pub explored_passenger: Vec<bool>,
    pub plausible_passenger: Vec<bool>,
    pub destination_plausible: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalSpaceSnapshot {
    pub environment: String,
    pub seed: u64,
    pub episode: usize,
    /// Episode of the evaluator pass the flags come from.
    pub evaluated_at: Option<usize>,
    pub registry_size: usize,
    pub plausible_count: usize,
    pub goals: Vec<GoalSnapshot>,
    pub taxi: Option<TaxiOccupancy>,
}

fn unassessed(id: ProtoGoalId) -> Assessment {
    Assessment {
        id,
        observed: false,
        achieved_in_batch: false,
        reachable: false,
        controllable: false,
        max_seek: 0.0,
        controllability_gap: 0.0,
        verdict: Verdict::Unobserved,
    }
}

/// Capture the agent's registry, statistics and latest evaluator verdicts.
pub fn export_goalspace_snapshot(agent: &ProtoGoalAgent, environment: &str, seed: u64, episode: usize) -> GoalSpaceSnapshot {
    let registry = agent.registry();
    let stats = agent.stats();
    let last = agent.last_evaluation();
    let assessments = match last {
        Some(state) => state.evaluation.assessments.clone(),
        None => pge::assess(registry, &BatchValues::default(), stats, agent.pge_config()),
    };
    let goals: Vec<GoalSnapshot> = registry
        .ids()
        .map(|id| {
            let a = assessments.get(id.0).cloned().unwrap_or_else(|| unassessed(id));
            let entry = last.and_then(|s| s.evaluation.space.entry(id));
            let st = stats.get(id);
            GoalSnapshot {
                id: id.0,
                mask: registry.goal(id).mask().to_vec(),
                label: registry.label(id).to_string(),
                count: st.count(),
                mean_reward: st.mean_extrinsic_reward().map(sig9),
                success_ratio: st.success_ratio().map(sig9),
                observed: a.observed,
                achieved_in_batch: a.achieved_in_batch,
                reachable: a.reachable,
                controllable: a.controllable,
                plausible: a.verdict.is_plausible(),
                reason: a.verdict,
                max_seek: sig9(a.max_seek),
                controllability_gap: sig9(a.controllability_gap),
                timescale: entry.map(|e| sig9(e.timescale)),
                bucket: entry.map(|e| e.bucket),
                probability: entry.map(|e| sig9(e.probability)),
                active: agent.goal_space().contains(id),
            }
        })
        .collect();
    let taxi = (registry.base_len() == TAXI_PROTO_BITS && environment == "sparse_taxi").then(|| {
        let base = |pred: fn(usize) -> bool, f: &dyn Fn(&GoalSnapshot) -> bool| -> Vec<bool> {
            goals.iter().filter(|g| g.mask.len() == 1 && pred(g.mask[0])).map(f).collect()
        };
        TaxiOccupancy {
            explored_cells: base(SparseTaxi::is_taxi_bit, &|g| g.count > 0),
            plausible_cells: base(SparseTaxi::is_taxi_bit, &|g| g.plausible),
            explored_passenger: base(SparseTaxi::is_passenger_bit, &|g| g.count > 0),
            plausible_passenger: base(SparseTaxi::is_passenger_bit, &|g| g.plausible),
            destination_plausible: base(SparseTaxi::is_destination_bit, &|g| g.plausible),
        }
    });
    GoalSpaceSnapshot {
        environment: environment.to_string(),
        seed,
        episode,
        evaluated_at: last.map(|s| s.episode),
        registry_size: registry.len(),
        plausible_count: goals.iter().filter(|g| g.plausible).count(),
        goals,
        taxi,
    }
}

pub fn write_snapshot(path: &Path, snapshot: &GoalSpaceSnapshot) -> Result<()> {
    let text = serde_json::to_string_pretty(snapshot)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_snapshot(path: &Path) -> Result<GoalSpaceSnapshot> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Plain-text rendering: `#` unexplored, `.` explored, `o` explored and
/// plausible.
pub fn render(snapshot: &GoalSpaceSnapshot) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{} seed {} episode {}: {} plausible of {} registered",
        snapshot.environment, snapshot.seed, snapshot.episode, snapshot.plausible_count, snapshot.registry_size
    );
    let cell = |explored: bool, plausible: bool| match (explored, plausible) {
        (_, true) => 'o',
        (true, false) => '.',
        (false, false) => '#',
    };
    if let Some(t) = &snapshot.taxi {
        let _ = writeln!(out, "taxi");
        for r in 0..5 {
            let row: Vec<String> =
                (0..5).map(|c| cell(t.explored_cells[r * 5 + c], t.plausible_cells[r * 5 + c]).to_string()).collect();
            let _ = writeln!(out, "  {}", row.join(" "));
        }
        let names = ["R", "G", "Y", "B", "taxi"];
        let pass: Vec<String> = names
            .iter()
            .enumerate()
            .map(|(i, n)| format!("{n}:{}", cell(t.explored_passenger[i], t.plausible_passenger[i])))
            .collect();
        let _ = writeln!(out, "passenger  {}", pass.join(" "));
        let dest: Vec<String> = names[..4]
            .iter()
            .zip(&t.destination_plausible)
            .map(|(n, &p)| format!("{n}:{}", if p { 'o' } else { 'x' }))
            .collect();
        let _ = writeln!(out, "destination {}", dest.join(" "));
    } else {
        for g in snapshot.goals.iter().filter(|g| g.plausible) {
            let _ = writeln!(out, "  {} {}", g.id, g.label);
        }
    }
    out
}

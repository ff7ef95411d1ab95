//! Environments with proto-goal annotation.
//!
//! Every environment annotates the arrival state of each transition with a
//! fixed-length base proto-goal vector, and encodes states as numeric
//! observation vectors for the seek/avoid estimator.

mod distractor;
mod taxi;
mod timer;

use serde::{Deserialize, Serialize};

pub use distractor::{DistractorConfig, DistractorGrid};
pub use taxi::{TaxiState, SparseTaxi, DEPOTS, TAXI_PROTO_BITS};
pub use timer::TimerGrid;

use crate::error::Result;
use crate::proto::ProtoGoalVector;

/// Result of `reset` or `step`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvStep {
    pub state: u64,
    pub reward: f64,
    pub proto: ProtoGoalVector,
    /// True terminal: the environment will not continue from `state`.
    pub done: bool,
    /// Episode cut off at the step cap; `state` is not terminal.
    pub truncated: bool,
}

impl EnvStep {
    pub fn is_last(&self) -> bool {
        self.done || self.truncated
    }
}

/// Per-base-proto-goal ground truth: is it controllable by the agent?
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControllabilityLabels(pub Vec<bool>);

impl ControllabilityLabels {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, index: usize) -> bool {
        self.0[index]
    }
}

pub trait Environment: Send {
    fn name(&self) -> &'static str;

    fn n_actions(&self) -> usize;

    /// Length of the base proto-goal vector.
    fn n_proto_bits(&self) -> usize;

    /// Human-readable name of each base proto-goal bit.
    fn bit_labels(&self) -> Vec<String>;

    fn reset(&mut self, seed: u64) -> EnvStep;

    fn step(&mut self, action: usize) -> Result<EnvStep>;

    /// Dimension of the numeric observation encoding.
    fn observation_dim(&self) -> usize;

    /// Write the observation encoding of `state` into `out`.
    fn encode(&self, state: u64, out: &mut [f64]);

    /// Number of states when the state space is small enough to tabulate.
    fn n_states(&self) -> Option<usize> {
        None
    }

    fn ground_truth_labels(&self) -> Option<ControllabilityLabels> {
        None
    }
}

/// Environment selector used by experiment configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    SparseTaxi,
    TimerGrid,
    DistractorGrid,
}

impl EnvKind {
    pub const PROBES: [EnvKind; 3] = [EnvKind::SparseTaxi, EnvKind::TimerGrid, EnvKind::DistractorGrid];

    pub fn build(self, distractor: &DistractorConfig, taxi_step_cap: usize) -> Box<dyn Environment> {
        match self {
            EnvKind::SparseTaxi => Box::new(SparseTaxi::with_step_cap(taxi_step_cap)),
            EnvKind::TimerGrid => Box::new(TimerGrid::new()),
            EnvKind::DistractorGrid => Box::new(DistractorGrid::new(distractor.clone())),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EnvKind::SparseTaxi => "sparse_taxi",
            EnvKind::TimerGrid => "timer_grid",
            EnvKind::DistractorGrid => "distractor_grid",
        }
    }
}

impl std::str::FromStr for EnvKind {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sparse_taxi" | "taxi" => Ok(EnvKind::SparseTaxi),
            "timer_grid" | "timer" => Ok(EnvKind::TimerGrid),
            "distractor_grid" | "distractor" => Ok(EnvKind::DistractorGrid),
            other => Err(crate::error::Error::Config(format!("unknown environment `{other}`"))),
        }
    }
}

/// Move on a `rows x cols` grid; 0=N, 1=S, 2=E, 3=W. Moves off the grid stay put.
pub(crate) fn grid_move(row: usize, col: usize, action: usize, rows: usize, cols: usize) -> (usize, usize) {
    match action {
        0 => (row.saturating_sub(1), col),
        1 => ((row + 1).min(rows - 1), col),
        2 => (row, (col + 1).min(cols - 1)),
        3 => (row, col.saturating_sub(1)),
        _ => (row, col),
    }
}

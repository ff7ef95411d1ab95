//! 4x4 gridworld with an uncontrollable step timer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{grid_move, ControllabilityLabels, EnvStep, Environment};
use crate::error::{Error, Result};
use crate::proto::ProtoGoalVector;

const SIZE: usize = 4;
const CELLS: usize = SIZE * SIZE;

/// Timer runs 1..=100; the episode ends when it reaches the maximum.
pub const MAX_STEPS: usize = 100;

#[derive(Debug, Clone)]
pub struct TimerGrid {
    cell: usize,
    timer: usize,
    finished: bool,
}

impl Default for TimerGrid {
    fn default() -> Self {
        Self::new()
    }
}

impl TimerGrid {
    pub fn new() -> Self {
        Self { cell: 0, timer: 0, finished: true }
    }

    fn state_id(cell: usize, timer: usize) -> u64 {
        (timer * CELLS + cell) as u64
    }

    fn decode(state: u64) -> (usize, usize) {
        let s = state as usize;
        (s % CELLS, s / CELLS)
    }

    fn proto_indices(cell: usize, timer: usize) -> Vec<usize> {
        let mut set = vec![cell];
        if timer >= 1 {
            set.push(CELLS + timer - 1);
        }
        set
    }

    fn emit(&self, done: bool) -> EnvStep {
        EnvStep {
            state: Self::state_id(self.cell, self.timer),
            reward: 0.0,
            proto: ProtoGoalVector::from_indices(CELLS + MAX_STEPS, Self::proto_indices(self.cell, self.timer)),
            done,
            truncated: false,
        }
    }

    /// Index of the bit that fires when the timer reads `t` (1-based).
    pub fn timer_bit(t: usize) -> usize {
        CELLS + t - 1
    }
}

impl Environment for TimerGrid {
    fn name(&self) -> &'static str {
        "timer_grid"
    }

    fn n_actions(&self) -> usize {
        4
    }

    fn n_proto_bits(&self) -> usize {
        CELLS + MAX_STEPS
    }

    fn bit_labels(&self) -> Vec<String> {
        (0..CELLS)
            .map(|c| format!("player@({},{})", c / SIZE, c % SIZE))
            .chain((1..=MAX_STEPS).map(|t| format!("timer={t}")))
            .collect()
    }

    fn reset(&mut self, seed: u64) -> EnvStep {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.cell = rng.random_range(0..CELLS);
        self.timer = 0;
        self.finished = false;
        self.emit(false)
    }

    fn step(&mut self, action: usize) -> Result<EnvStep> {
        if self.finished {
            return Err(Error::StepAfterDone);
        }
        if action >= 4 {
            return Err(Error::InvalidAction { action, n_actions: 4 });
        }
        let (r, c) = grid_move(self.cell / SIZE, self.cell % SIZE, action, SIZE, SIZE);
        self.cell = r * SIZE + c;
        self.timer += 1;
        let done = self.timer >= MAX_STEPS;
        self.finished = done;
        Ok(self.emit(done))
    }

    fn observation_dim(&self) -> usize {
        CELLS + MAX_STEPS
    }

    fn encode(&self, state: u64, out: &mut [f64]) {
        out.fill(0.0);
        let (cell, timer) = Self::decode(state);
        for i in Self::proto_indices(cell, timer) {
            out[i] = 1.0;
        }
    }

    fn n_states(&self) -> Option<usize> {
        Some(CELLS * (MAX_STEPS + 1))
    }

    fn ground_truth_labels(&self) -> Option<ControllabilityLabels> {
        Some(ControllabilityLabels((0..CELLS + MAX_STEPS).map(|i| i < CELLS).collect()))
    }
}

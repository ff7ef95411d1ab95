//! SparseTaxi: the classic 5x5 Taxi domain with all shaping removed.
//!
//! Reward is +1 only for dropping the passenger at their destination. Any
//! executed dropoff ends the episode; illegal pickups and dropoffs are no-ops.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{grid_move, ControllabilityLabels, EnvStep, Environment};
use crate::error::{Error, Result};
use crate::proto::ProtoGoalVector;

const SIZE: usize = 5;
const MAP: [&str; 7] = [
    "+---------+",
    "|R: | : :G|",
    "| : | : : |",
    "| : : : : |",
    "| | : | : |",
    "|Y| : |B: |",
    "+---------+",
];

/// Depot cells R, G, Y, B as (row, col).
pub const DEPOTS: [(usize, usize); 4] = [(0, 0), (0, 4), (4, 0), (4, 3)];
const DEPOT_NAMES: [&str; 4] = ["R", "G", "Y", "B"];

/// Passenger location index meaning "inside the taxi".
pub const IN_TAXI: usize = 4;

/// 25 taxi cells + 5 passenger locations + 4 destinations.
pub const TAXI_PROTO_BITS: usize = 34;
const PASSENGER_OFFSET: usize = 25;
const DESTINATION_OFFSET: usize = 30;

const PICKUP: usize = 4;
const DROPOFF: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TaxiState {
    pub taxi_row: usize,
    pub taxi_col: usize,
    /// Depot index 0..4, or [`IN_TAXI`].
    pub passenger: usize,
    pub destination: usize,
}

impl TaxiState {
    pub const COUNT: usize = 500;

    pub fn id(&self) -> u64 {
        (((self.taxi_row * SIZE + self.taxi_col) * 5 + self.passenger) * 4 + self.destination) as u64
    }

    pub fn from_id(id: u64) -> Self {
        let id = id as usize;
        let destination = id % 4;
        let passenger = (id / 4) % 5;
        let cell = id / 20;
        Self { taxi_row: cell / SIZE, taxi_col: cell % SIZE, passenger, destination }
    }

    pub fn taxi_cell(&self) -> usize {
        self.taxi_row * SIZE + self.taxi_col
    }

    /// Indices of the three set bits of the base proto-goal vector.
    pub fn proto_indices(&self) -> [usize; 3] {
        [self.taxi_cell(), PASSENGER_OFFSET + self.passenger, DESTINATION_OFFSET + self.destination]
    }

    pub fn proto(&self) -> ProtoGoalVector {
        ProtoGoalVector::from_indices(TAXI_PROTO_BITS, self.proto_indices())
    }
}

/// Walls east of each cell, parsed from the canonical map.
fn east_walls() -> [[bool; SIZE]; SIZE] {
    let mut walls = [[false; SIZE]; SIZE];
    for (r, row) in walls.iter_mut().enumerate() {
        let line = MAP[r + 1].as_bytes();
        for (c, wall) in row.iter_mut().enumerate().take(SIZE - 1) {
            *wall = line[2 * c + 2] == b'|';
        }
    }
    walls
}

#[derive(Debug, Clone)]
pub struct SparseTaxi {
    state: TaxiState,
    walls: [[bool; SIZE]; SIZE],
    steps: usize,
    step_cap: usize,
    finished: bool,
}

impl Default for SparseTaxi {
    fn default() -> Self {
        Self::new()
    }
}

impl SparseTaxi {
    pub const DEFAULT_STEP_CAP: usize = 200;

    pub fn new() -> Self {
        Self::with_step_cap(Self::DEFAULT_STEP_CAP)
    }

    pub fn with_step_cap(step_cap: usize) -> Self {
        Self {
            state: TaxiState { taxi_row: 0, taxi_col: 0, passenger: 0, destination: 1 },
            walls: east_walls(),
            steps: 0,
            step_cap,
            finished: true,
        }
    }

    pub fn state(&self) -> TaxiState {
        self.state
    }

    /// Start an episode from a chosen state.
    pub fn reset_to(&mut self, state: TaxiState) -> EnvStep {
        self.state = state;
        self.steps = 0;
        self.finished = false;
        EnvStep { state: state.id(), reward: 0.0, proto: state.proto(), done: false, truncated: false }
    }

    /// Deterministic transition function: (next state, reward, terminal).
    pub fn transition(&self, s: TaxiState, action: usize) -> (TaxiState, f64, bool) {
        let mut next = s;
        match action {
            0..=3 => {
                let blocked = match action {
                    2 => self.walls[s.taxi_row][s.taxi_col],
                    3 => s.taxi_col > 0 && self.walls[s.taxi_row][s.taxi_col - 1],
                    _ => false,
                };
                if !blocked {
                    let (r, c) = grid_move(s.taxi_row, s.taxi_col, action, SIZE, SIZE);
                    next.taxi_row = r;
                    next.taxi_col = c;
                }
                (next, 0.0, false)
            }
            PICKUP => {
                if s.passenger < IN_TAXI && DEPOTS[s.passenger] == (s.taxi_row, s.taxi_col) {
                    next.passenger = IN_TAXI;
                }
                (next, 0.0, false)
            }
            DROPOFF => {
                let depot = DEPOTS.iter().position(|&d| d == (s.taxi_row, s.taxi_col));
                match depot {
                    Some(j) if s.passenger == IN_TAXI => {
                        next.passenger = j;
                        let reward = if j == s.destination { 1.0 } else { 0.0 };
                        (next, reward, true)
                    }
                    _ => (next, 0.0, false),
                }
            }
            _ => unreachable!("action validated by caller"),
        }
    }

    pub fn bit_label(index: usize) -> String {
        if index < PASSENGER_OFFSET {
            format!("taxi@({},{})", index / SIZE, index % SIZE)
        } else if index < DESTINATION_OFFSET {
            match index - PASSENGER_OFFSET {
                IN_TAXI => "passenger@taxi".to_string(),
                d => format!("passenger@{}", DEPOT_NAMES[d]),
            }
        } else {
            format!("destination@{}", DEPOT_NAMES[index - DESTINATION_OFFSET])
        }
    }

    pub fn is_taxi_bit(index: usize) -> bool {
        index < PASSENGER_OFFSET
    }

    pub fn is_passenger_bit(index: usize) -> bool {
        (PASSENGER_OFFSET..DESTINATION_OFFSET).contains(&index)
    }

    pub fn is_destination_bit(index: usize) -> bool {
        (DESTINATION_OFFSET..TAXI_PROTO_BITS).contains(&index)
    }
}

impl Environment for SparseTaxi {
    fn name(&self) -> &'static str {
        "sparse_taxi"
    }

    fn n_actions(&self) -> usize {
        6
    }

    fn n_proto_bits(&self) -> usize {
        TAXI_PROTO_BITS
    }

    fn bit_labels(&self) -> Vec<String> {
        (0..TAXI_PROTO_BITS).map(Self::bit_label).collect()
    }

    fn reset(&mut self, seed: u64) -> EnvStep {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cell = rng.random_range(0..SIZE * SIZE);
        let passenger = rng.random_range(0..4);
        let mut destination = rng.random_range(0..3);
        if destination >= passenger {
            destination += 1;
        }
        self.reset_to(TaxiState { taxi_row: cell / SIZE, taxi_col: cell % SIZE, passenger, destination })
    }

    fn step(&mut self, action: usize) -> Result<EnvStep> {
        if self.finished {
            return Err(Error::StepAfterDone);
        }
        if action >= 6 {
            return Err(Error::InvalidAction { action, n_actions: 6 });
        }
        let (next, reward, done) = self.transition(self.state, action);
        self.state = next;
        self.steps += 1;
        let truncated = !done && self.steps >= self.step_cap;
        self.finished = done || truncated;
        Ok(EnvStep { state: next.id(), reward, proto: next.proto(), done, truncated })
    }

    fn observation_dim(&self) -> usize {
        TAXI_PROTO_BITS
    }

    fn encode(&self, state: u64, out: &mut [f64]) {
        out.fill(0.0);
        for i in TaxiState::from_id(state).proto_indices() {
            out[i] = 1.0;
        }
    }

    fn n_states(&self) -> Option<usize> {
        Some(TaxiState::COUNT)
    }

    fn ground_truth_labels(&self) -> Option<ControllabilityLabels> {
        Some(ControllabilityLabels((0..TAXI_PROTO_BITS).map(|i| !Self::is_destination_bit(i)).collect()))
    }
}

#[cfg(test)]
mod tests {
    use std::collections::{HashSet, VecDeque};

    use super::*;

    #[test]
    fn state_id_roundtrip() {
        for id in 0..TaxiState::COUNT as u64 {
            assert_eq!(TaxiState::from_id(id).id(), id);
        }
    }

    #[test]
    fn reset_is_deterministic_and_three_hot() {
        let mut env = SparseTaxi::new();
        let a = env.reset(17);
        let b = env.reset(17);
        assert_eq!(a, b);
        for seed in 0..200 {
            let s = env.reset(seed);
            assert_eq!(s.proto.len(), 34);
            assert_eq!(s.proto.count_ones(), 3);
            let st = TaxiState::from_id(s.state);
            assert_ne!(st.passenger, st.destination);
            assert!(st.passenger < IN_TAXI);
        }
    }

    #[test]
    fn destination_marginal_is_uniform() {
        // chi-square with 3 dof; 99.9% quantile is 16.27
        let mut env = SparseTaxi::new();
        let mut counts = [0usize; 4];
        let n = 10_000;
        for seed in 0..n as u64 {
            counts[TaxiState::from_id(env.reset(seed).state).destination] += 1;
        }
        let expected = n as f64 / 4.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        assert!(chi2 < 16.27, "chi2 = {chi2}, counts = {counts:?}");
        // every depot within 3 sigma of the binomial mean
        let sigma = (n as f64 * 0.25 * 0.75).sqrt();
        for c in counts {
            assert!((c as f64 - expected).abs() < 3.0 * sigma);
        }
    }

    #[test]
    fn walls_block_movement() {
        let env = SparseTaxi::new();
        let s = TaxiState { taxi_row: 0, taxi_col: 1, passenger: 0, destination: 1 };
        assert_eq!(env.transition(s, 2).0, s);
        let s = TaxiState { taxi_row: 4, taxi_col: 1, passenger: 0, destination: 1 };
        assert_eq!(env.transition(s, 3).0, s);
        let s = TaxiState { taxi_row: 2, taxi_col: 1, passenger: 0, destination: 1 };
        assert_eq!(env.transition(s, 2).0.taxi_col, 2);
        let s = TaxiState { taxi_row: 0, taxi_col: 0, passenger: 0, destination: 1 };
        assert_eq!(env.transition(s, 0).0, s);
    }

    #[test]
    fn correct_dropoff_rewards_and_terminates() {
        let mut env = SparseTaxi::new();
        let (r, c) = DEPOTS[2];
        env.reset_to(TaxiState { taxi_row: r, taxi_col: c, passenger: IN_TAXI, destination: 2 });
        let step = env.step(5).unwrap();
        assert_eq!(step.reward, 1.0);
        assert!(step.done);
        assert!(matches!(env.step(0), Err(Error::StepAfterDone)));
    }

    #[test]
    fn wrong_dropoff_terminates_without_reward() {
        let mut env = SparseTaxi::new();
        let (r, c) = DEPOTS[1];
        env.reset_to(TaxiState { taxi_row: r, taxi_col: c, passenger: IN_TAXI, destination: 2 });
        let step = env.step(5).unwrap();
        assert_eq!((step.reward, step.done), (0.0, true));
        assert_eq!(TaxiState::from_id(step.state).passenger, 1);
    }

    #[test]
    fn illegal_pickup_and_dropoff_are_noops() {
        let mut env = SparseTaxi::new();
        let start = TaxiState { taxi_row: 2, taxi_col: 2, passenger: 0, destination: 3 };
        env.reset_to(start);
        for action in [4, 5] {
            let step = env.step(action).unwrap();
            assert_eq!(step.state, start.id());
            assert_eq!(step.reward, 0.0);
            assert!(!step.done);
        }
    }

    #[test]
    fn step_cap_truncates() {
        let mut env = SparseTaxi::with_step_cap(3);
        env.reset(0);
        assert!(!env.step(0).unwrap().is_last());
        assert!(!env.step(0).unwrap().is_last());
        let last = env.step(0).unwrap();
        assert!(last.truncated && !last.done);
        assert!(env.step(0).is_err());
    }

    #[test]
    fn invalid_action_rejected() {
        let mut env = SparseTaxi::new();
        env.reset(0);
        assert!(matches!(env.step(6), Err(Error::InvalidAction { .. })));
    }

    #[test]
    fn every_start_can_reach_reward() {
        let env = SparseTaxi::new();
        for id in 0..TaxiState::COUNT as u64 {
            let start = TaxiState::from_id(id);
            if start.passenger == start.destination {
                continue;
            }
            let mut seen = HashSet::from([start]);
            let mut queue = VecDeque::from([start]);
            let mut solved = false;
            while let Some(s) = queue.pop_front() {
                for a in 0..6 {
                    let (n, r, done) = env.transition(s, a);
                    if r > 0.0 {
                        solved = true;
                    }
                    if !done && seen.insert(n) {
                        queue.push_back(n);
                    }
                }
            }
            assert!(solved, "no rewarding path from {start:?}");
        }
    }

    #[test]
    fn destination_is_never_changed_by_a_transition() {
        let env = SparseTaxi::new();
        for id in 0..TaxiState::COUNT as u64 {
            let s = TaxiState::from_id(id);
            for a in 0..6 {
                assert_eq!(env.transition(s, a).0.destination, s.destination);
            }
        }
    }

    #[test]
    fn labels() {
        let env = SparseTaxi::new();
        let labels = env.ground_truth_labels().unwrap();
        assert_eq!(labels.0.iter().filter(|&&c| c).count(), 30);
        assert!(!labels.get(DESTINATION_OFFSET));
        assert!(labels.get(PASSENGER_OFFSET + IN_TAXI));
        assert_eq!(SparseTaxi::bit_label(29), "passenger@taxi");
        assert_eq!(SparseTaxi::bit_label(33), "destination@B");
        assert_eq!(SparseTaxi::bit_label(7), "taxi@(1,2)");
    }
}

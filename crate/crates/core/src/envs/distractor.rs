//! Gridworld with one controllable player plane and two planes of random
//! "noisy TV" pixels.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{grid_move, ControllabilityLabels, EnvStep, Environment};
use crate::error::{Error, Result};
use crate::proto::ProtoGoalVector;

const SIZE: usize = 4;
const CELLS: usize = SIZE * SIZE;
const NOISE_PLANES: usize = 2;
const NOISE_BITS: usize = NOISE_PLANES * CELLS;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistractorConfig {
    /// Per-cell, per-step probability that a noise pixel flips.
    pub flip_probability: f64,
    pub episode_length: usize,
}

impl Default for DistractorConfig {
    fn default() -> Self {
        Self { flip_probability: 0.5, episode_length: 100 }
    }
}

#[derive(Debug, Clone)]
pub struct DistractorGrid {
    config: DistractorConfig,
    cell: usize,
    noise: u32,
    steps: usize,
    finished: bool,
    rng: ChaCha8Rng,
}

impl DistractorGrid {
    pub fn new(config: DistractorConfig) -> Self {
        Self { config, cell: 0, noise: 0, steps: 0, finished: true, rng: ChaCha8Rng::seed_from_u64(0) }
    }

    fn state_id(&self) -> u64 {
        ((self.noise as u64) << 4) | self.cell as u64
    }

    fn decode(state: u64) -> (usize, u32) {
        ((state & 0xF) as usize, (state >> 4) as u32)
    }

    fn indices(cell: usize, noise: u32) -> impl Iterator<Item = usize> {
        std::iter::once(cell).chain((0..NOISE_BITS).filter(move |i| noise >> i & 1 == 1).map(|i| CELLS + i))
    }

    fn emit(&self) -> EnvStep {
        EnvStep {
            state: self.state_id(),
            reward: 0.0,
            proto: ProtoGoalVector::from_indices(CELLS + NOISE_BITS, Self::indices(self.cell, self.noise)),
            done: false,
            truncated: self.finished,
        }
    }

    pub fn noise_bit(plane: usize, cell: usize) -> usize {
        CELLS + plane * CELLS + cell
    }
}

impl Environment for DistractorGrid {
    fn name(&self) -> &'static str {
        "distractor_grid"
    }

    fn n_actions(&self) -> usize {
        4
    }

    fn n_proto_bits(&self) -> usize {
        CELLS + NOISE_BITS
    }

    fn bit_labels(&self) -> Vec<String> {
        (0..CELLS)
            .map(|c| format!("player@({},{})", c / SIZE, c % SIZE))
            .chain((0..NOISE_BITS).map(|i| {
                let c = i % CELLS;
                format!("noise{}@({},{})", i / CELLS, c / SIZE, c % SIZE)
            }))
            .collect()
    }

    fn reset(&mut self, seed: u64) -> EnvStep {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.cell = self.rng.random_range(0..CELLS);
        self.noise = self.rng.random::<u32>();
        self.steps = 0;
        self.finished = false;
        self.emit()
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
        for i in 0..NOISE_BITS {
            if self.rng.random_bool(self.config.flip_probability) {
                self.noise ^= 1 << i;
            }
        }
        self.steps += 1;
        self.finished = self.steps >= self.config.episode_length;
        Ok(self.emit())
    }

    fn observation_dim(&self) -> usize {
        CELLS + NOISE_BITS
    }

    fn encode(&self, state: u64, out: &mut [f64]) {
        out.fill(0.0);
        let (cell, noise) = Self::decode(state);
        for i in Self::indices(cell, noise) {
            out[i] = 1.0;
        }
    }

    fn ground_truth_labels(&self) -> Option<ControllabilityLabels> {
        Some(ControllabilityLabels((0..CELLS + NOISE_BITS).map(|i| i < CELLS).collect()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_flip_rate_matches_config() {
        let mut env = DistractorGrid::new(DistractorConfig { flip_probability: 0.3, episode_length: 1000 });
        let mut prev = env.reset(5).proto;
        let (mut flips, mut trials) = (0usize, 0usize);
        let mut steps = 0;
        while steps < 100_000 {
            let s = env.step(steps % 4).unwrap();
            for i in CELLS..CELLS + NOISE_BITS {
                trials += 1;
                if s.proto.get(i).unwrap() != prev.get(i).unwrap() {
                    flips += 1;
                }
            }
            prev = s.proto.clone();
            steps += 1;
            if s.is_last() {
                prev = env.reset(steps as u64).proto;
            }
        }
        let p = 0.3;
        let mean = trials as f64 * p;
        let sigma = (trials as f64 * p * (1.0 - p)).sqrt();
        assert!((flips as f64 - mean).abs() < 3.0 * sigma, "flips {flips} vs {mean}");
    }

    #[test]
    fn deterministic_given_seed_and_actions() {
        let run = || {
            let mut env = DistractorGrid::new(DistractorConfig::default());
            let mut out = vec![env.reset(9)];
            for t in 0..50 {
                out.push(env.step(t % 4).unwrap());
            }
            out
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn episode_length_truncates() {
        let mut env = DistractorGrid::new(DistractorConfig::default());
        env.reset(0);
        for t in 1..=100 {
            let s = env.step(0).unwrap();
            assert!(!s.done);
            assert_eq!(s.truncated, t == 100);
        }
        assert!(env.step(0).is_err());
    }

    #[test]
    fn labels_and_encoding() {
        let mut env = DistractorGrid::new(DistractorConfig::default());
        let labels = env.ground_truth_labels().unwrap();
        assert_eq!(labels.len(), 48);
        assert!(labels.get(3));
        assert!(!labels.get(DistractorGrid::noise_bit(1, 3)));
        let s = env.reset(2);
        let mut obs = vec![0.0; 48];
        env.encode(s.state, &mut obs);
        let ones: Vec<_> = obs.iter().enumerate().filter(|(_, &x)| x == 1.0).map(|(i, _)| i).collect();
        assert_eq!(ones, s.proto.ones().collect::<Vec<_>>());
    }
}

//! Controllability classification from random-policy data.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::metrics::{confusion, mean_se, spearman};
use crate::envs::{ControllabilityLabels, EnvKind};
use crate::error::{Error, Result};
use crate::proto::{Goal, ProtoGoalId, Transition};
use crate::seek_avoid::{BatchValues, LspiConfig, SeekAvoidFitter};

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeRow {
    pub environment: EnvKind,
    pub seed: u64,
    pub episodes_seen: usize,
    pub transitions: usize,
    pub threshold: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSummary {
    pub environment: EnvKind,
    pub threshold: f64,
    /// Seed-mean F1 after the full data budget.
    pub final_f1: f64,
    pub final_f1_se: f64,
    /// Rank correlation between episodes seen and seed-mean F1.
    pub spearman: f64,
    pub best: bool,
}

#[derive(Debug, Clone)]
pub struct ProbeResult {
    pub rows: Vec<ProbeRow>,
    pub summaries: Vec<ProbeSummary>,
    pub wall_ms: Vec<(EnvKind, u64, f64)>,
}

impl ProbeResult {
    pub fn best(&self, environment: EnvKind) -> Option<&ProbeSummary> {
        self.summaries.iter().find(|s| s.environment == environment && s.best)
    }
}

/// Controllable when the seek/avoid gap reaches `threshold`; bits never
/// achieved in the batch are optimistically controllable.
pub fn classify(values: &BatchValues, n_bits: usize, threshold: f64) -> ControllabilityLabels {
    ControllabilityLabels(
        (0..n_bits)
            .map(|i| match values.get(ProtoGoalId(i)) {
                Some(v) if v.achieved_in_batch => v.controllability_gap() >= threshold,
                _ => true,
            })
            .collect(),
    )
}

/// Random policy on one probe; refit on every transition so far after each
/// `refit_period` episodes and score every threshold.
pub fn run_probe_seed(kind: EnvKind, seed: u64, config: &ExperimentConfig) -> Result<Vec<ProbeRow>> {
    let pc = &config.probe;
    let mut env = kind.build(&config.distractor, config.taxi.step_cap);
    let truth = env.ground_truth_labels().ok_or_else(|| Error::NotAProbe(env.name().to_string()))?;
    let n_bits = env.n_proto_bits();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fitter = SeekAvoidFitter::random_projection(
        env.observation_dim(),
        pc.projection_dim,
        env.n_actions(),
        seed ^ 0x0b5e_55ed,
        LspiConfig::default(),
    );
    let goals: Vec<(ProtoGoalId, Goal)> = (0..n_bits).map(|i| (ProtoGoalId(i), Goal::single(i))).collect();
    let mut data: Vec<Transition> = Vec::new();
    let mut rows = Vec::new();
    for episode in 1..=pc.episodes {
        let mut step = env.reset(rng.random());
        while !step.is_last() {
            let state = step.state;
            let action = rng.random_range(0..env.n_actions());
            step = env.step(action)?;
            data.push(Transition {
                state,
                action,
                extrinsic_reward: step.reward,
                next_state: step.state,
                proto: step.proto.clone(),
                done: step.done,
            });
        }
        if episode % pc.refit_period != 0 && episode != pc.episodes {
            continue;
        }
        let encoder = |s: u64, out: &mut [f64]| env.encode(s, out);
        let model = fitter.fit(&data, &goals, &encoder)?;
        let values = model.batch_values(&data, &encoder)?;
        for &threshold in &pc.thresholds {
            let c = confusion(&classify(&values, n_bits, threshold), &truth)?;
            rows.push(ProbeRow {
                environment: kind,
                seed,
                episodes_seen: episode,
                transitions: data.len(),
                threshold,
                f1: c.f1(),
                precision: c.precision(),
                recall: c.recall(),
            });
        }
    }
    Ok(rows)
}

/// Per environment and threshold: seed-mean final F1 and its trend. The
/// best threshold has the highest final F1, then the highest correlation.
pub fn summarise(rows: &[ProbeRow], thresholds: &[f64]) -> Vec<ProbeSummary> {
    let mut out = Vec::new();
    let mut envs: Vec<EnvKind> = rows.iter().map(|r| r.environment).collect();
    envs.dedup();
    for env in envs {
        let mut group = Vec::new();
        for &threshold in thresholds {
            let sel: Vec<&ProbeRow> = rows.iter().filter(|r| r.environment == env && r.threshold == threshold).collect();
            let mut episodes: Vec<usize> = sel.iter().map(|r| r.episodes_seen).collect();
            episodes.sort_unstable();
            episodes.dedup();
            let series: Vec<f64> = episodes
                .iter()
                .map(|&e| {
                    let v: Vec<f64> = sel.iter().filter(|r| r.episodes_seen == e).map(|r| r.f1).collect();
                    mean_se(&v).0
                })
                .collect();
            let finals: Vec<f64> =
                sel.iter().filter(|r| Some(&r.episodes_seen) == episodes.last()).map(|r| r.f1).collect();
            let (final_f1, final_f1_se) = mean_se(&finals);
            let x: Vec<f64> = episodes.iter().map(|&e| e as f64).collect();
            group.push(ProbeSummary { environment: env, threshold, final_f1, final_f1_se, spearman: spearman(&x, &series), best: false });
        }
        if let Some(best) = (0..group.len()).reduce(|b, i| {
            let (gb, gi) = (&group[b], &group[i]);
            if gi.final_f1 > gb.final_f1 || (gi.final_f1 == gb.final_f1 && gi.spearman > gb.spearman) {
                i
            } else {
                b
            }
        }) {
            group[best].best = true;
        }
        out.extend(group);
    }
    out
}

pub fn run_controllability(config: &ExperimentConfig) -> Result<ProbeResult> {
    config.validate()?;
    let jobs: Vec<(EnvKind, u64)> = config
        .probe
        .environments()
        .into_iter()
        .flat_map(|k| config.probe.seeds.iter().map(move |&s| (k, s)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(k, s)| {
            let start = std::time::Instant::now();
            run_probe_seed(k, s, config).map(|rows| (rows, (k, s, start.elapsed().as_secs_f64() * 1e3)))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    let mut wall_ms = Vec::new();
    for (r, w) in results {
        rows.extend(r);
        wall_ms.push(w);
    }
    let summaries = summarise(&rows, &config.probe.thresholds);
    Ok(ProbeResult { rows, summaries, wall_ms })
}

//! CSV and JSON writers for experiment results.
//!
//! Files other than `timing.csv` are byte-identical across reruns with the
//! same config and seeds.

use std::fs;
use std::path::Path;

use serde::Serialize;

use super::config::ExperimentConfig;
use super::metrics::fmt_f64;
use super::probes::ProbeResult;
use super::snapshot::write_snapshot;
use super::taxi::TaxiResult;
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize)]
struct Manifest<'a> {
    schema_version: u32,
    experiment: &'a str,
    files: Vec<String>,
    seeds: &'a [u64],
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn finish(mut w: csv::Writer<fs::File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_taxi(result: &TaxiResult, config: &ExperimentConfig, out: &Path) -> Result<()> {
    create_dir(out)?;
    let mut files = Vec::new();

    let path = out.join("curves.csv");
    let mut w = csv_writer(&path)?;
    w.write_record([
        "method", "seed", "episode", "env_steps", "eval_return", "eval_success", "plausible_goals", "registry_size",
    ])?;
    for r in result.rows() {
        w.write_record([
            r.method.as_str().to_string(),
            r.seed.to_string(),
            r.episode.to_string(),
            r.env_steps.to_string(),
            fmt_f64(r.eval_return),
            fmt_f64(r.eval_success),
            r.plausible_goals.to_string(),
            r.registry_size.to_string(),
        ])?;
    }
    finish(w, &path)?;
    files.push("curves.csv".to_string());

    let path = out.join("curve_summary.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["method", "env_steps", "mean_success", "se_success", "n"])?;
    for p in result.summary() {
        w.write_record([
            p.method.as_str().to_string(),
            p.env_steps.to_string(),
            fmt_f64(p.mean),
            fmt_f64(p.se),
            p.n.to_string(),
        ])?;
    }
    finish(w, &path)?;
    files.push("curve_summary.csv".to_string());

    let path = out.join("timing.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["method", "seed", "episodes", "env_steps", "wall_ms"])?;
    for run in &result.runs {
        let last = run.rows.last();
        w.write_record([
            run.method.as_str().to_string(),
            run.seed.to_string(),
            last.map_or(0, |r| r.episode).to_string(),
            last.map_or(0, |r| r.env_steps).to_string(),
            format!("{:.1}", run.wall_ms),
        ])?;
    }
    finish(w, &path)?;
    files.push("timing.csv".to_string());

    for run in &result.runs {
        if run.snapshots.is_empty() {
            continue;
        }
        let dir = out.join(format!("seed_{}", run.seed));
        create_dir(&dir)?;
        for s in &run.snapshots {
            let name = format!("goalspace_{}.json", s.episode);
            write_snapshot(&dir.join(&name), s)?;
            files.push(format!("seed_{}/{name}", run.seed));
        }
    }

    write_json(&out.join("config.json"), config)?;
    files.push("config.json".to_string());
    write_json(
        &out.join("manifest.json"),
        &Manifest { schema_version: SCHEMA_VERSION, experiment: "taxi", files, seeds: &config.seeds },
    )
}

pub fn write_probes(result: &ProbeResult, config: &ExperimentConfig, out: &Path) -> Result<()> {
    create_dir(out)?;
    let mut files = Vec::new();

    let path = out.join("f1.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["environment", "seed", "episodes_seen", "transitions", "threshold", "f1", "precision", "recall"])?;
    for r in &result.rows {
        w.write_record([
            r.environment.as_str().to_string(),
            r.seed.to_string(),
            r.episodes_seen.to_string(),
            r.transitions.to_string(),
            fmt_f64(r.threshold),
            fmt_f64(r.f1),
            fmt_f64(r.precision),
            fmt_f64(r.recall),
        ])?;
    }
    finish(w, &path)?;
    files.push("f1.csv".to_string());

    let path = out.join("f1_summary.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["environment", "threshold", "final_f1", "final_f1_se", "spearman", "best"])?;
    for s in &result.summaries {
        w.write_record([
            s.environment.as_str().to_string(),
            fmt_f64(s.threshold),
            fmt_f64(s.final_f1),
            fmt_f64(s.final_f1_se),
            fmt_f64(s.spearman),
            s.best.to_string(),
        ])?;
    }
    finish(w, &path)?;
    files.push("f1_summary.csv".to_string());

    let path = out.join("timing.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["environment", "seed", "wall_ms"])?;
    for (env, seed, ms) in &result.wall_ms {
        w.write_record([env.as_str().to_string(), seed.to_string(), format!("{ms:.1}")])?;
    }
    finish(w, &path)?;
    files.push("timing.csv".to_string());

    write_json(&out.join("config.json"), config)?;
    files.push("config.json".to_string());
    write_json(
        &out.join("manifest.json"),
        &Manifest { schema_version: SCHEMA_VERSION, experiment: "controllability", files, seeds: &config.probe.seeds },
    )
}

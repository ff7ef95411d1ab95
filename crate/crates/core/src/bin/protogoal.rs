use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use protogoal::envs::EnvKind;
use protogoal::harness::{self, output, snapshot, Experiment, ExperimentConfig, Method};
use protogoal::Result;

#[derive(Parser)]
#[command(name = "protogoal", version, about = "Proto-goal exploration experiments")]
struct Cli {
    /// TOML or JSON experiment config; defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Run a single seed instead of the configured list.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true, default_value = "results")]
    out: PathBuf,

    /// Episode cap: Taxi training episodes, or probe data episodes.
    #[arg(long, global = true)]
    episodes: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Proto-goal agent vs Q-learning on SparseTaxi.
    Taxi,
    /// Controllability F1 on the probe environments.
    Controllability {
        /// Restrict to one environment (sparse_taxi, timer_grid, distractor_grid).
        #[arg(long)]
        env: Option<EnvKind>,
    },
    /// Every experiment, each in its own subdirectory.
    Sweep,
    /// Print a goal-space snapshot as a grid.
    SnapshotDump { path: PathBuf },
}

fn load(cli: &Cli) -> Result<ExperimentConfig> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seeds = vec![seed];
        config.probe.seeds = vec![seed];
    }
    if let Some(n) = cli.episodes {
        config.taxi.max_episodes = n;
        config.probe.episodes = n;
    }
    config.validate()?;
    Ok(config)
}

fn taxi(config: &ExperimentConfig, out: &std::path::Path) -> Result<()> {
    let result = harness::run_taxi(config)?;
    output::write_taxi(&result, config, out)?;
    for method in Method::ALL {
        if let Some(s) = result.final_success(method) {
            println!("{}: final success {:.3} (peak {:.3})", method.as_str(), s, result.peak_success(method).unwrap_or(s));
        }
    }
    let (checked, bad) = result.destination_violations();
    println!("destination goals plausible after warmup: {bad} of {checked} passes");
    Ok(())
}

fn controllability(config: &ExperimentConfig, out: &std::path::Path) -> Result<()> {
    let result = harness::run_controllability(config)?;
    output::write_probes(&result, config, out)?;
    for s in result.summaries.iter().filter(|s| s.best) {
        println!(
            "{}: threshold {} F1 {:.3} spearman {:.3}",
            s.environment.as_str(),
            s.threshold,
            s.final_f1,
            s.spearman
        );
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::SnapshotDump { path } => {
            print!("{}", snapshot::render(&snapshot::read_snapshot(path)?));
            Ok(())
        }
        Command::Taxi => taxi(&load(cli)?, &cli.out),
        Command::Controllability { env } => {
            let mut config = load(cli)?;
            if let Some(env) = env {
                config.probe.environments = vec![*env];
            }
            controllability(&config, &cli.out)
        }
        Command::Sweep => {
            let mut config = load(cli)?;
            config.experiment = Experiment::Sweep;
            taxi(&config, &cli.out.join("taxi"))?;
            controllability(&config, &cli.out.join("controllability"))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = serde_json::json!({ "error": e.to_string() });
            eprintln!("{line}");
            ExitCode::FAILURE
        }
    }
}

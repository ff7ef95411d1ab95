//! Experiment harness: Taxi comparison, controllability probes and their
//! CSV/JSON outputs.

pub mod config;
pub mod metrics;
pub mod output;
pub mod probes;
pub mod snapshot;
pub mod taxi;

pub use config::{Experiment, ExperimentConfig, ProbeConfig, TaxiRunConfig};
pub use probes::{run_controllability, ProbeResult, ProbeRow, ProbeSummary};
pub use snapshot::{export_goalspace_snapshot, GoalSpaceSnapshot};
pub use taxi::{run_taxi, Method, MetricsRow, SummaryPoint, TaxiResult};

//! Proto-goal driven exploration: a proto-goal evaluator on top of tabular
//! goal-conditioned Q-learning, with least-squares seek/avoid value
//! estimation for controllability.

pub mod agent;
pub mod envs;
pub mod harness;
pub mod error;
pub mod pge;
pub mod proto;
pub mod seek_avoid;

pub use error::{Error, Result};
pub use proto::{Goal, GoalStats, ProtoGoalId, ProtoGoalVector, Registry, StatsTable, Target, Transition};

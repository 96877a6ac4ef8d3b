//! Latency cost model for fork-join sub-transactions.
//!
//! [`estimate_latency`] evaluates the closed-form recursion,
//! [`simulate_forkjoin`] replays the same tree as timed events, and
//! [`calibrate`] and [`decompose`] turn profiles recorded by the engine into
//! parameters and per-transaction latency breakdowns.

mod breakdown;
mod calibrate;
mod model;
mod sim;

pub use breakdown::{decompose, LatencyBreakdown};
pub use calibrate::{calibrate, Calibration};
pub use model::{estimate_latency, predict_breakdown, ContainerRef, CostParams, ForkJoinNode, Link, Nanos, Prediction};
pub use sim::simulate_forkjoin;

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum CostError {
    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),
    #[error("incomplete trace: {0}")]
    IncompleteTrace(String),
}

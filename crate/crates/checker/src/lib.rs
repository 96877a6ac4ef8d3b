//! Conflict-serializability checking for transaction histories.
//!
//! Histories come in two flavours. Reactor-model histories record which
//! sub-transaction on which reactor performed each read or write; classic
//! histories are flat sequences of reads and writes on globally named items.
//! [`project`] maps the former onto the latter by qualifying every item with
//! its reactor name.

mod generator;
mod graph;
mod history;
mod oracle;
mod project;
mod suite;

pub use generator::{GenConfig, HistoryGenerator};
pub use graph::{build_sg, is_serializable, Edge, SerializationGraph};
pub use history::{History, Item, Model, OpKind, SubTxnId, TraceOp, TxnId};
pub use oracle::{brute_force_serializable, BRUTE_FORCE_LIMIT};
pub use project::project;
pub use suite::{theorem1_suite, theorem1_suite_with, Counterexample, SuiteReport};

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum CheckError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("malformed history: {0}")]
    Malformed(String),
    #[error("history has {0} committed transactions, more than the brute-force limit")]
    TooLarge(usize),
    #[error("i/o error: {0}")]
    Io(String),
}

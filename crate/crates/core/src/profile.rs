//! Timestamps collected while a transaction runs, for latency breakdowns
//! and cost-model calibration. All times are nanoseconds on a process-wide
//! monotonic clock.

use std::sync::OnceLock;
use std::time::Instant;

use serde::{Deserialize, Serialize};

static BASE: OnceLock<Instant> = OnceLock::new();

pub fn now_ns() -> u64 {
    BASE.get_or_init(Instant::now).elapsed().as_nanos() as u64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CallMode {
    /// Call to the reactor currently executing.
    Inline,
    /// Other reactor in the same container, run synchronously.
    Local,
    /// Reactor in another container, dispatched to its executor.
    Remote,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CallProfile {
    pub mode: CallMode,
    pub call_start: u64,
    /// When the request had been handed to the destination (for local and
    /// inline calls, when the child returned).
    pub send_done: u64,
    /// When the caller obtained the child's result, by `get` or by the
    /// implicit join.
    pub resume: u64,
    /// When the caller started waiting for the result (for local and
    /// inline calls, when the child returned).
    pub get_start: u64,
    /// Whether the result was obtained by an explicit `get` immediately
    /// after the call, with no other work in between.
    pub awaited_immediately: bool,
    pub child: Option<Box<SubTxnProfile>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub name: String,
    pub start: u64,
    pub end: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubTxnProfile {
    pub reactor: String,
    pub container: usize,
    pub procedure: String,
    pub start: u64,
    /// After the procedure body returned, before the implicit join.
    pub body_end: u64,
    /// After the implicit join.
    pub end: u64,
    pub calls: Vec<CallProfile>,
    pub sections: Vec<Section>,
}

impl SubTxnProfile {
    pub fn new(reactor: &str, container: usize, procedure: &str, start: u64) -> Self {
        SubTxnProfile {
            reactor: reactor.to_string(),
            container,
            procedure: procedure.to_string(),
            start,
            body_end: start,
            end: start,
            calls: Vec::new(),
            sections: Vec::new(),
        }
    }

    /// Visits this profile and every nested one, depth first.
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a SubTxnProfile)) {
        f(self);
        for c in &self.calls {
            if let Some(child) = &c.child {
                child.walk(f);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TxnProfile {
    pub txn: u64,
    pub committed: bool,
    /// Time the client spent generating the transaction's inputs.
    pub input_gen_ns: u64,
    pub submit: u64,
    pub root_start: u64,
    /// Root body and implicit join finished.
    pub exec_end: u64,
    pub commit_end: u64,
    /// The client observed the outcome.
    pub client_done: u64,
    pub containers_touched: usize,
    pub root: SubTxnProfile,
}

impl TxnProfile {
    /// Wall-clock latency as seen by the client, including input generation.
    pub fn latency_ns(&self) -> u64 {
        self.client_done.saturating_sub(self.submit) + self.input_gen_ns
    }
}

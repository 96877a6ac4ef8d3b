use reactordb_core::{CallMode, SubTxnProfile, TxnProfile};
use serde::{Deserialize, Serialize};

use crate::model::Nanos;
use crate::CostError;

/// Measured latency of one root transaction split into cost components.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatencyBreakdown {
    pub sync_execution: Nanos,
    pub c_s_total: Nanos,
    pub c_r_total: Nanos,
    pub async_execution: Nanos,
    pub commit_plus_inputgen: Nanos,
}

impl LatencyBreakdown {
    pub fn total(&self) -> Nanos {
        self.sync_execution + self.c_s_total + self.c_r_total + self.async_execution + self.commit_plus_inputgen
    }

    /// The part the latency equation predicts.
    pub fn execution(&self) -> Nanos {
        self.total() - self.commit_plus_inputgen
    }

    pub fn add(&mut self, o: &LatencyBreakdown) {
        self.sync_execution += o.sync_execution;
        self.c_s_total += o.c_s_total;
        self.c_r_total += o.c_r_total;
        self.async_execution += o.async_execution;
        self.commit_plus_inputgen += o.commit_plus_inputgen;
    }
}

fn span(from: u64, to: u64, what: &str, node: &SubTxnProfile) -> Result<Nanos, CostError> {
    to.checked_sub(from).ok_or_else(|| {
        CostError::IncompleteTrace(format!("{what} of {}.{} ends before it starts", node.reactor, node.procedure))
    })
}

/// Splits a profiled root transaction into buckets.
///
/// Within a sub-transaction, everything before its first asynchronous call
/// is sequential: its own processing counts as sync execution, and each
/// synchronous call contributes its send and receive times plus, expanded,
/// the callee's own buckets. Everything from the first asynchronous call to
/// the end of the sub-transaction counts as async execution. Time outside
/// the root sub-transaction, including input generation, is the commit and
/// input-generation bucket. The buckets always add up to the latency.
pub fn decompose(profile: &TxnProfile) -> Result<LatencyBreakdown, CostError> {
    let mut b = LatencyBreakdown::default();
    node(&profile.root, &mut b)?;
    let root = span(profile.root.start, profile.root.end, "root", &profile.root)?;
    let latency = profile.latency_ns();
    b.commit_plus_inputgen = latency
        .checked_sub(root)
        .ok_or_else(|| CostError::IncompleteTrace("root runs longer than the transaction".into()))?;
    Ok(b)
}

fn node(p: &SubTxnProfile, b: &mut LatencyBreakdown) -> Result<(), CostError> {
    let total = span(p.start, p.end, "sub-transaction", p)?;
    let fork = p
        .calls
        .iter()
        .find(|c| c.mode == CallMode::Remote && !c.awaited_immediately)
        .map(|c| c.call_start)
        .unwrap_or(p.end);
    let sequential = span(p.start, fork, "sequential part", p)?;
    let mut in_calls = 0;
    for c in p.calls.iter().take_while(|c| c.call_start < fork) {
        let child = c
            .child
            .as_deref()
            .ok_or_else(|| CostError::IncompleteTrace(format!("call from {} has no callee profile", p.reactor)))?;
        let whole = span(c.call_start, c.resume, "call", p)?;
        in_calls += whole;
        let inner = span(child.start, child.end, "callee", child)?;
        if c.mode == CallMode::Remote {
            b.c_s_total += span(c.call_start, child.start, "send", p)?;
            b.c_r_total += span(child.end, c.resume, "receive", p)?;
        } else {
            b.sync_execution += whole.checked_sub(inner).ok_or_else(|| {
                CostError::IncompleteTrace(format!("callee {} outlasts its call", child.reactor))
            })?;
        }
        node(child, b)?;
    }
    b.sync_execution += sequential
        .checked_sub(in_calls)
        .ok_or_else(|| CostError::IncompleteTrace(format!("calls of {} overlap", p.reactor)))?;
    b.async_execution += total - sequential;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use reactordb_core::CallProfile;

    fn sub(reactor: &str, container: usize, start: u64, end: u64) -> SubTxnProfile {
        SubTxnProfile {
            body_end: end,
            end,
            ..SubTxnProfile::new(reactor, container, "p", start)
        }
    }

    fn call(mode: CallMode, start: u64, resume: u64, immediate: bool, child: SubTxnProfile) -> CallProfile {
        CallProfile {
            mode,
            call_start: start,
            send_done: start,
            resume,
            get_start: start,
            awaited_immediately: immediate,
            child: Some(Box::new(child)),
        }
    }

    fn txn(root: SubTxnProfile, submit: u64, done: u64) -> TxnProfile {
        TxnProfile {
            txn: 1,
            committed: true,
            input_gen_ns: 5,
            submit,
            root_start: root.start,
            exec_end: root.end,
            commit_end: done,
            client_done: done,
            containers_touched: 2,
            root,
        }
    }

    #[test]
    fn synchronous_remote_call() {
        let mut root = sub("a", 0, 10, 100);
        root.calls.push(call(CallMode::Remote, 20, 80, true, sub("b", 1, 30, 70)));
        let b = decompose(&txn(root, 0, 120)).unwrap();
        assert_eq!(
            b,
            LatencyBreakdown {
                sync_execution: 30 + 40,
                c_s_total: 10,
                c_r_total: 10,
                async_execution: 0,
                commit_plus_inputgen: 125 - 90,
            }
        );
        assert_eq!(b.total(), 125);
    }

    #[test]
    fn work_after_the_fork_is_async() {
        let mut root = sub("a", 0, 0, 100);
        root.calls.push(call(CallMode::Remote, 10, 90, false, sub("b", 1, 20, 60)));
        root.calls.push(call(CallMode::Inline, 15, 40, true, sub("a", 0, 16, 39)));
        let b = decompose(&txn(root, 0, 100)).unwrap();
        assert_eq!((b.sync_execution, b.c_s_total, b.c_r_total, b.async_execution), (10, 0, 0, 90));
    }

    #[test]
    fn local_call_overhead_is_processing() {
        let mut root = sub("a", 0, 0, 50);
        root.calls.push(call(CallMode::Local, 10, 40, true, sub("c", 0, 12, 38)));
        let b = decompose(&txn(root, 0, 50)).unwrap();
        assert_eq!(b.sync_execution, 50);
        assert_eq!(b.c_s_total + b.c_r_total, 0);
    }

    #[test]
    fn missing_callee_is_incomplete() {
        let mut root = sub("a", 0, 0, 50);
        let mut c = call(CallMode::Remote, 10, 40, true, sub("b", 1, 12, 38));
        c.child = None;
        root.calls.push(c);
        assert!(matches!(decompose(&txn(root, 0, 50)), Err(CostError::IncompleteTrace(_))));
    }

    #[test]
    fn unresolved_call_is_incomplete() {
        let mut root = sub("a", 0, 0, 50);
        root.calls.push(call(CallMode::Remote, 10, 0, true, sub("b", 1, 12, 38)));
        assert!(matches!(decompose(&txn(root, 0, 50)), Err(CostError::IncompleteTrace(_))));
    }
}

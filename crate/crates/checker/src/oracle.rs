use std::collections::HashMap;

use crate::history::{History, OpKind, TxnId};
use crate::CheckError;

pub const BRUTE_FORCE_LIMIT: usize = 6;

/// Tries every serial order of the committed transactions and reports
/// whether one of them orders each conflicting pair of operations the same
/// way the history does.
///
/// Works directly on operations and does not build a graph, so it serves as
/// an independent check of [`crate::is_serializable`].
pub fn brute_force_serializable(h: &History) -> Result<bool, CheckError> {
    h.validate()?;
    let committed = h.committed();
    if committed.len() > BRUTE_FORCE_LIMIT {
        return Err(CheckError::TooLarge(committed.len()));
    }
    let mut txns: Vec<TxnId> = committed.iter().copied().collect();
    txns.sort_unstable();
    let index: HashMap<TxnId, usize> = txns.iter().enumerate().map(|(i, &t)| (t, i)).collect();

    let ops: Vec<_> = h
        .ops
        .iter()
        .filter(|op| op.kind.is_access() && committed.contains(&op.txn))
        .collect();
    // must_precede[a][b]: some op of a conflicts with and precedes an op of b
    let n = txns.len();
    let mut must_precede = vec![vec![false; n]; n];
    for (i, a) in ops.iter().enumerate() {
        for b in &ops[i + 1..] {
            if a.txn == b.txn {
                continue;
            }
            let same_item = a.reactor == b.reactor && a.item == b.item;
            let has_write = a.kind == OpKind::Write || b.kind == OpKind::Write;
            if same_item && has_write {
                must_precede[index[&a.txn]][index[&b.txn]] = true;
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    Ok(permutations_any(&mut order, 0, &|perm| {
        let mut pos = vec![0; n];
        for (p, &t) in perm.iter().enumerate() {
            pos[t] = p;
        }
        (0..n).all(|a| (0..n).all(|b| !must_precede[a][b] || pos[a] < pos[b]))
    }))
}

fn permutations_any(v: &mut Vec<usize>, k: usize, pred: &dyn Fn(&[usize]) -> bool) -> bool {
    if k == v.len() {
        return pred(v);
    }
    for i in k..v.len() {
        v.swap(k, i);
        if permutations_any(v, k + 1, pred) {
            v.swap(k, i);
            return true;
        }
        v.swap(k, i);
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::history::{Item, TraceOp};

    #[test]
    fn empty_history_is_serializable() {
        assert!(brute_force_serializable(&History::reactor(vec![])).unwrap());
    }

    #[test]
    fn seven_committed_is_too_large() {
        let ops = (0..7).map(|t| TraceOp::terminal(t + 1, t, true)).collect();
        assert_eq!(
            brute_force_serializable(&History::reactor(ops)),
            Err(CheckError::TooLarge(7))
        );
    }

    #[test]
    fn crossing_conflicts_have_no_serial_order() {
        let x = || Item::new("t", "x");
        let y = || Item::new("t", "y");
        let h = History::reactor(vec![
            TraceOp::access(1, OpKind::Write, 1, 0, "1", x()),
            TraceOp::access(2, OpKind::Write, 2, 0, "2", y()),
            TraceOp::access(3, OpKind::Read, 1, 1, "2", y()),
            TraceOp::access(4, OpKind::Write, 2, 1, "1", x()),
            TraceOp::terminal(5, 1, true),
            TraceOp::terminal(6, 2, true),
        ]);
        assert!(!brute_force_serializable(&h).unwrap());
    }
}

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use crate::history::{History, Item, Model, OpKind, SubTxnId, TraceOp, TxnId};
use crate::CheckError;

/// One witnessing conflict for an edge `from -> to`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Edge {
    pub from: TxnId,
    pub to: TxnId,
    pub reactor: Option<String>,
    pub item: Item,
    pub from_seq: u64,
    pub to_seq: u64,
}

/// Serialization graph over committed transactions.
///
/// Conflicts on one item are recorded between consecutive conflicting
/// accesses (last writer to each later reader, readers and last writer to the
/// next writer). Longer-range conflicts on the same item are implied by paths
/// through the intermediate accesses, so reachability and acyclicity are those
/// of the full conflict graph.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SerializationGraph {
    pub nodes: BTreeSet<TxnId>,
    pub edges: BTreeMap<(TxnId, TxnId), Edge>,
}

impl SerializationGraph {
    fn add_edge(&mut self, edge: Edge) {
        if edge.from != edge.to {
            self.edges.entry((edge.from, edge.to)).or_insert(edge);
        }
    }

    pub fn has_edge(&self, from: TxnId, to: TxnId) -> bool {
        self.edges.contains_key(&(from, to))
    }

    /// Returns the transactions on some cycle, or `None` when acyclic.
    pub fn find_cycle(&self) -> Option<Vec<TxnId>> {
        let mut adj: HashMap<TxnId, Vec<TxnId>> = HashMap::new();
        for &(a, b) in self.edges.keys() {
            adj.entry(a).or_default().push(b);
        }
        // 0 = unvisited, 1 = on stack, 2 = done
        let mut color: HashMap<TxnId, u8> = HashMap::new();
        for &start in &self.nodes {
            if color.get(&start).copied().unwrap_or(0) != 0 {
                continue;
            }
            let mut stack: Vec<(TxnId, usize)> = vec![(start, 0)];
            color.insert(start, 1);
            while let Some(&mut (node, ref mut next)) = stack.last_mut() {
                let succs = adj.get(&node).map(Vec::as_slice).unwrap_or(&[]);
                if *next < succs.len() {
                    let succ = succs[*next];
                    *next += 1;
                    match color.get(&succ).copied().unwrap_or(0) {
                        0 => {
                            color.insert(succ, 1);
                            stack.push((succ, 0));
                        }
                        1 => {
                            let pos = stack.iter().position(|&(n, _)| n == succ).unwrap();
                            return Some(stack[pos..].iter().map(|&(n, _)| n).collect());
                        }
                        _ => {}
                    }
                } else {
                    color.insert(node, 2);
                    stack.pop();
                }
            }
        }
        None
    }

    pub fn is_acyclic(&self) -> bool {
        self.find_cycle().is_none()
    }
}

/// The top-level sub-transaction that a sub-transaction belongs to.
fn top_level(h: &History, txn: TxnId, mut sub: SubTxnId) -> SubTxnId {
    let mut hops = 0;
    while let Some(&parent) = h.parents.get(&(txn, sub)) {
        sub = parent;
        hops += 1;
        if hops > h.parents.len() {
            break;
        }
    }
    sub
}

type Unit = (TxnId, SubTxnId);

/// Access of a committed transaction, keyed by the unit that is treated as
/// atomic in the respective model.
struct Access<'a> {
    op: &'a TraceOp,
    unit: Unit,
}

fn committed_accesses(h: &History) -> Vec<Access<'_>> {
    let committed = h.committed();
    h.ops
        .iter()
        .filter(|op| op.kind.is_access() && committed.contains(&op.txn))
        .map(|op| {
            let unit = match (h.model, op.subtxn) {
                (Model::Reactor, Some(sub)) => (op.txn, top_level(h, op.txn, sub)),
                _ => (op.txn, 0),
            };
            Access { op, unit }
        })
        .collect()
}

fn item_key(op: &TraceOp) -> (Option<&str>, &Item) {
    (op.reactor.as_deref(), op.item.as_ref().expect("access has item"))
}

/// Builds the serialization graph of the committed projection of `h`.
///
/// For reactor-model histories conflicts are between top-level
/// sub-transactions on the same reactor item; for classic histories between
/// operations on the same named item. Aborted and unfinished transactions
/// are not nodes.
pub fn build_sg(h: &History) -> Result<SerializationGraph, CheckError> {
    h.validate()?;
    let accesses = committed_accesses(h);
    let mut g = SerializationGraph {
        nodes: h.committed().into_iter().collect(),
        edges: BTreeMap::new(),
    };

    struct ItemState {
        writer: Option<(Unit, u64)>,
        readers: Vec<(Unit, u64)>,
    }
    let mut items: HashMap<(Option<&str>, &Item), ItemState> = HashMap::new();
    for a in &accesses {
        let key = item_key(a.op);
        let st = items.entry(key).or_insert(ItemState {
            writer: None,
            readers: Vec::new(),
        });
        let edge = |from: (Unit, u64)| Edge {
            from: from.0 .0,
            to: a.unit.0,
            reactor: key.0.map(str::to_string),
            item: key.1.clone(),
            from_seq: from.1,
            to_seq: a.op.seq,
        };
        match a.op.kind {
            OpKind::Read => {
                if let Some(w) = st.writer {
                    g.add_edge(edge(w));
                }
                st.readers.push((a.unit, a.op.seq));
            }
            OpKind::Write => {
                let mut seen: HashSet<Unit> = HashSet::new();
                for &r in &st.readers {
                    if seen.insert(r.0) {
                        g.add_edge(edge(r));
                    }
                }
                if let Some(w) = st.writer {
                    g.add_edge(edge(w));
                }
                st.writer = Some((a.unit, a.op.seq));
                st.readers.clear();
            }
            _ => unreachable!(),
        }
    }
    Ok(g)
}

/// True iff the serialization graph of the committed transactions is
/// acyclic.
pub fn is_serializable(h: &History) -> Result<bool, CheckError> {
    Ok(build_sg(h)?.is_acyclic())
}

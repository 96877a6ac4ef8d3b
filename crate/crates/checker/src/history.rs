//! Histories of transactional operations and the line-oriented trace format.
//!
//! A trace file holds one operation per line, space separated:
//!
//! ```text
//! <seq> <txn> <subtxn> <reactor> <table> <key> r|w
//! <seq> <txn> c|a
//! ```
//!
//! Sequence numbers are strictly increasing. Keys are opaque tokens (the
//! engine writes them hex encoded).

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};

use crate::CheckError;

pub type TxnId = u64;
pub type SubTxnId = u32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OpKind {
    Read,
    Write,
    Commit,
    Abort,
}

impl OpKind {
    pub fn is_access(self) -> bool {
        matches!(self, OpKind::Read | OpKind::Write)
    }

    fn symbol(self) -> &'static str {
        match self {
            OpKind::Read => "r",
            OpKind::Write => "w",
            OpKind::Commit => "c",
            OpKind::Abort => "a",
        }
    }
}

/// A named data item. In the reactor model the name is local to a reactor;
/// in the classic model the reactor name has been folded into `table`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Item {
    pub table: String,
    pub key: String,
}

impl Item {
    pub fn new(table: impl Into<String>, key: impl Into<String>) -> Self {
        Item {
            table: table.into(),
            key: key.into(),
        }
    }
}

impl fmt::Display for Item {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.table, self.key)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceOp {
    pub seq: u64,
    pub kind: OpKind,
    pub txn: TxnId,
    /// Absent for terminals and for classic-model operations.
    pub subtxn: Option<SubTxnId>,
    /// Absent for terminals and for classic-model operations.
    pub reactor: Option<String>,
    pub item: Option<Item>,
}

impl TraceOp {
    pub fn access(
        seq: u64,
        kind: OpKind,
        txn: TxnId,
        subtxn: SubTxnId,
        reactor: impl Into<String>,
        item: Item,
    ) -> Self {
        debug_assert!(kind.is_access());
        TraceOp {
            seq,
            kind,
            txn,
            subtxn: Some(subtxn),
            reactor: Some(reactor.into()),
            item: Some(item),
        }
    }

    pub fn terminal(seq: u64, txn: TxnId, committed: bool) -> Self {
        TraceOp {
            seq,
            kind: if committed {
                OpKind::Commit
            } else {
                OpKind::Abort
            },
            txn,
            subtxn: None,
            reactor: None,
            item: None,
        }
    }

    /// Writes the op in trace-file syntax (without trailing newline).
    pub fn write_line(&self, out: &mut impl Write) -> std::io::Result<()> {
        match (self.kind, &self.item) {
            (OpKind::Read | OpKind::Write, Some(item)) => write!(
                out,
                "{} {} {} {} {} {} {}",
                self.seq,
                self.txn,
                self.subtxn.unwrap_or(0),
                self.reactor.as_deref().unwrap_or("-"),
                item.table,
                item.key,
                self.kind.symbol()
            ),
            _ => write!(out, "{} {} {}", self.seq, self.txn, self.kind.symbol()),
        }
    }

    pub fn parse_line(line: &str, lineno: usize) -> Result<Self, CheckError> {
        let bad = |why: &str| CheckError::Parse {
            line: lineno,
            reason: why.to_string(),
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        let num = |s: &str, what: &str| s.parse::<u64>().map_err(|_| bad(what));
        match fields.as_slice() {
            [seq, txn, kind] => {
                let kind = match *kind {
                    "c" => OpKind::Commit,
                    "a" => OpKind::Abort,
                    _ => return Err(bad("terminal must be c or a")),
                };
                Ok(TraceOp {
                    seq: num(seq, "bad seq")?,
                    kind,
                    txn: num(txn, "bad txn")?,
                    subtxn: None,
                    reactor: None,
                    item: None,
                })
            }
            [seq, txn, subtxn, reactor, table, key, kind] => {
                let kind = match *kind {
                    "r" => OpKind::Read,
                    "w" => OpKind::Write,
                    _ => return Err(bad("access must be r or w")),
                };
                let subtxn = subtxn.parse::<SubTxnId>().map_err(|_| bad("bad subtxn"))?;
                Ok(TraceOp::access(
                    num(seq, "bad seq")?,
                    kind,
                    num(txn, "bad txn")?,
                    subtxn,
                    *reactor,
                    Item::new(*table, *key),
                ))
            }
            _ => Err(bad("expected 3 or 7 fields")),
        }
    }
}

impl fmt::Display for TraceOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut buf = Vec::new();
        self.write_line(&mut buf).map_err(|_| fmt::Error)?;
        f.write_str(&String::from_utf8_lossy(&buf))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Model {
    Reactor,
    Classic,
}

/// A history: a totally ordered sequence of operations.
///
/// In the reactor model each `(txn, subtxn)` pair names a sub-transaction.
/// `parents` optionally records the nesting of sub-transactions; traces read
/// from files carry no nesting and every sub-transaction is treated as a
/// direct member of its transaction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct History {
    pub ops: Vec<TraceOp>,
    pub model: Model,
    pub parents: BTreeMap<(TxnId, SubTxnId), SubTxnId>,
}

impl History {
    pub fn new(model: Model) -> Self {
        History {
            ops: Vec::new(),
            model,
            parents: BTreeMap::new(),
        }
    }

    pub fn reactor(ops: Vec<TraceOp>) -> Self {
        History {
            ops,
            model: Model::Reactor,
            parents: BTreeMap::new(),
        }
    }

    pub fn read_trace(input: impl BufRead) -> Result<Self, CheckError> {
        let mut ops = Vec::new();
        for (idx, line) in input.lines().enumerate() {
            let line = line.map_err(|e| CheckError::Io(e.to_string()))?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            ops.push(TraceOp::parse_line(trimmed, idx + 1)?);
        }
        let h = History::reactor(ops);
        h.validate()?;
        Ok(h)
    }

    pub fn write_trace(&self, out: &mut impl Write) -> std::io::Result<()> {
        for op in &self.ops {
            op.write_line(out)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Checks ordering and terminal rules: strictly increasing sequence
    /// numbers, at most one terminal per transaction, and no operation of a
    /// transaction after its terminal.
    pub fn validate(&self) -> Result<(), CheckError> {
        let mut last_seq: Option<u64> = None;
        let mut ended: HashSet<TxnId> = HashSet::new();
        for op in &self.ops {
            if let Some(prev) = last_seq {
                if op.seq <= prev {
                    return Err(CheckError::Malformed(format!(
                        "sequence number {} does not follow {}",
                        op.seq, prev
                    )));
                }
            }
            last_seq = Some(op.seq);
            if ended.contains(&op.txn) {
                return Err(CheckError::Malformed(format!(
                    "txn {} has an operation after its terminal (seq {})",
                    op.txn, op.seq
                )));
            }
            match op.kind {
                OpKind::Commit | OpKind::Abort => {
                    ended.insert(op.txn);
                }
                OpKind::Read | OpKind::Write => {
                    if op.item.is_none() {
                        return Err(CheckError::Malformed(format!(
                            "access at seq {} has no item",
                            op.seq
                        )));
                    }
                    if self.model == Model::Reactor
                        && (op.reactor.is_none() || op.subtxn.is_none())
                    {
                        return Err(CheckError::Malformed(format!(
                            "reactor-model access at seq {} lacks reactor or subtxn",
                            op.seq
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Transactions whose terminal is a commit.
    pub fn committed(&self) -> HashSet<TxnId> {
        self.ops
            .iter()
            .filter(|op| op.kind == OpKind::Commit)
            .map(|op| op.txn)
            .collect()
    }

    pub fn terminals(&self) -> HashMap<TxnId, OpKind> {
        self.ops
            .iter()
            .filter(|op| !op.kind.is_access())
            .map(|op| (op.txn, op.kind))
            .collect()
    }

    pub fn access_count(&self) -> usize {
        self.ops.iter().filter(|op| op.kind.is_access()).count()
    }
}

//! Recording of every transaction's reads, writes and outcome as one
//! globally ordered history.
//!
//! Reads take their sequence number when they observe the store; writes
//! and the commit or abort take theirs when the transaction finishes, in
//! the same critical section that installs its writes. Sequence numbers
//! therefore agree with the real order in which values were observed and
//! replaced.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use parking_lot::Mutex;
use reactordb_checker::{History, Item, OpKind, TraceOp};

use crate::storage::{tick, SeqClock};

/// A write recorded during execution; stamped when its transaction ends.
#[derive(Clone, Debug)]
pub struct PendingOp {
    pub subtxn: u32,
    pub reactor: Arc<str>,
    pub table: Arc<str>,
    pub key: Vec<u8>,
}

/// Trace state of one root transaction.
#[derive(Debug, Default)]
pub struct TxnTrace {
    pub stamped: Vec<TraceOp>,
    pub writes: Vec<PendingOp>,
}

pub fn access(seq: u64, kind: OpKind, txn: u64, subtxn: u32, reactor: &str, table: &str, key: &[u8]) -> TraceOp {
    TraceOp::access(
        seq,
        kind,
        txn,
        subtxn,
        reactor.to_string(),
        Item::new(table.to_string(), hex::encode(key)),
    )
}

impl TxnTrace {
    /// Stamps buffered writes and the terminal. `last` is the held clock.
    pub fn finish(&mut self, last: &mut u64, txn: u64, committed: bool) {
        for w in std::mem::take(&mut self.writes) {
            let seq = tick(last);
            self.stamped
                .push(access(seq, OpKind::Write, txn, w.subtxn, &w.reactor, &w.table, &w.key));
        }
        self.stamped.push(TraceOp::terminal(tick(last), txn, committed));
    }
}

pub struct Tracer {
    pub(crate) clock: SeqClock,
    ops: Mutex<Vec<TraceOp>>,
    path: Option<PathBuf>,
}

impl Tracer {
    pub fn in_memory() -> Self {
        Tracer {
            clock: SeqClock::default(),
            ops: Mutex::new(Vec::new()),
            path: None,
        }
    }

    /// Trace written to `path` on [`Tracer::flush`]. The file is created
    /// immediately so an unwritable path fails early.
    pub fn to_file(path: &Path) -> std::io::Result<Self> {
        File::create(path)?;
        Ok(Tracer {
            path: Some(path.to_path_buf()),
            ..Tracer::in_memory()
        })
    }

    pub fn append(&self, ops: Vec<TraceOp>) {
        self.ops.lock().extend(ops);
    }

    fn sorted(&self) -> Vec<TraceOp> {
        let mut ops = self.ops.lock().clone();
        ops.sort_by_key(|o| o.seq);
        ops
    }

    pub fn flush(&self) -> std::io::Result<()> {
        let Some(path) = &self.path else { return Ok(()) };
        let mut w = BufWriter::new(File::create(path)?);
        for op in self.sorted() {
            op.write_line(&mut w)?;
            w.write_all(b"\n")?;
        }
        w.flush()
    }

    /// The history recorded so far, ordered by sequence number.
    pub fn history(&self) -> History {
        History::reactor(self.sorted())
    }
}

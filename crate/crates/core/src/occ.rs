//! Per-container optimistic concurrency control state of one transaction.
//!
//! Reads record the version they observed, writes are buffered, scans keep
//! their predicate and result. Commit locks the write set in key order,
//! re-checks reads and scans, installs with a fresh version and unlocks.

use std::cell::Cell;
use std::collections::{BTreeMap, HashSet};
use std::ops::Bound;
use std::sync::Arc;

use crate::error::TxnError;
use crate::storage::{make_tid, Record, Table, TableId, Value, LOCK_BIT};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Active,
    Validated,
    Committed,
    Aborted,
}

struct ReadEntry {
    table: Arc<Table>,
    key: Vec<u8>,
    /// `None` when no record existed at read time.
    record: Option<Arc<Record>>,
    tid: u64,
}

pub(crate) struct WriteEntry {
    table: Arc<Table>,
    value: Option<Value>,
    insert: bool,
    record: Option<Arc<Record>>,
}

struct ScanEntry {
    table: Arc<Table>,
    lo: Vec<u8>,
    hi: Vec<u8>,
    limit: usize,
    reverse: bool,
    observed: Vec<(Vec<u8>, u64)>,
}

/// Where a read was served from.
#[derive(Debug, Clone, PartialEq)]
pub enum ReadSource {
    WriteSet,
    Store,
}

thread_local! {
    static LAST_TID: Cell<u64> = const { Cell::new(0) };
}

pub struct ContainerTxn {
    reads: Vec<ReadEntry>,
    writes: BTreeMap<(TableId, Vec<u8>), WriteEntry>,
    scans: Vec<ScanEntry>,
    locked: Vec<Arc<Record>>,
    status: Status,
    /// Set when any sub-transaction of the root ran in this container.
    pub touched: bool,
}

impl Default for ContainerTxn {
    fn default() -> Self {
        ContainerTxn {
            reads: Vec::new(),
            writes: BTreeMap::new(),
            scans: Vec::new(),
            locked: Vec::new(),
            status: Status::Active,
            touched: false,
        }
    }
}

impl ContainerTxn {
    pub fn status(&self) -> Status {
        self.status
    }

    pub fn is_read_only(&self) -> bool {
        self.writes.is_empty()
    }

    pub fn is_empty(&self) -> bool {
        self.reads.is_empty() && self.writes.is_empty() && self.scans.is_empty()
    }

    pub fn read_count(&self) -> usize {
        self.reads.len()
    }

    pub fn write_count(&self) -> usize {
        self.writes.len()
    }

    pub fn has_write(&self, table: &Table, key: &[u8]) -> bool {
        self.writes.contains_key(&(table.id, key.to_vec()))
    }

    pub fn read(&mut self, table: &Arc<Table>, key: &[u8]) -> (Option<Value>, ReadSource) {
        self.read_with(table, key, false)
    }

    /// `read`, optionally without waiting on locked records (see
    /// [`Record::read_raw`]).
    pub fn read_with(&mut self, table: &Arc<Table>, key: &[u8], raw: bool) -> (Option<Value>, ReadSource) {
        debug_assert_eq!(self.status, Status::Active);
        if let Some(w) = self.writes.get(&(table.id, key.to_vec())) {
            return (w.value.clone(), ReadSource::WriteSet);
        }
        let (value, tid, record) = match table.get(key) {
            Some(rec) => {
                let (v, tid) = if raw { rec.read_raw() } else { rec.read_stable() };
                (v, tid, Some(rec))
            }
            None => (None, 0, None),
        };
        self.reads.push(ReadEntry {
            table: table.clone(),
            key: key.to_vec(),
            record,
            tid,
        });
        (value, ReadSource::Store)
    }

    /// Buffers a write. `None` deletes. An insert asserts at validation that
    /// the key is absent.
    pub fn write(&mut self, table: &Arc<Table>, key: &[u8], value: Option<Value>, insert: bool) {
        debug_assert_eq!(self.status, Status::Active);
        self.writes
            .entry((table.id, key.to_vec()))
            .and_modify(|w| w.value = value.clone())
            .or_insert(WriteEntry {
                table: table.clone(),
                value,
                insert,
                record: None,
            });
    }

    /// Range scan over `[lo, hi)` that sees this transaction's own writes.
    pub fn scan(
        &mut self,
        table: &Arc<Table>,
        lo: &[u8],
        hi: &[u8],
        limit: usize,
        reverse: bool,
    ) -> (Vec<(Vec<u8>, Value)>, bool) {
        self.scan_with(table, lo, hi, limit, reverse, false)
    }

    pub fn scan_with(
        &mut self,
        table: &Arc<Table>,
        lo: &[u8],
        hi: &[u8],
        limit: usize,
        reverse: bool,
        raw: bool,
    ) -> (Vec<(Vec<u8>, Value)>, bool) {
        debug_assert_eq!(self.status, Status::Active);
        let own: Vec<(&Vec<u8>, &WriteEntry)> = if lo < hi {
            self.writes
                .range((
                    Bound::Included((table.id, lo.to_vec())),
                    Bound::Excluded((table.id, hi.to_vec())),
                ))
                .map(|((_, k), w)| (k, w))
                .collect()
        } else {
            Vec::new()
        };
        // Own deletions can hide stored rows, so fetch enough to fill the
        // limit after overlaying.
        let store_limit = limit.saturating_add(own.len());
        let (stored, exhausted) = table.scan_present(lo, hi, store_limit, reverse, raw);
        let observed = stored.iter().map(|(k, _, t)| (k.clone(), *t)).collect();

        let mut merged: BTreeMap<Vec<u8>, Value> =
            stored.into_iter().map(|(k, v, _)| (k, v)).collect();
        // Rows beyond the stored window must not be pulled in by own writes
        // unless the window covered the whole range.
        let window_edge = if exhausted {
            None
        } else if reverse {
            merged.keys().next().cloned()
        } else {
            merged.keys().next_back().cloned()
        };
        for (k, w) in own {
            let inside = match &window_edge {
                None => true,
                Some(edge) if reverse => k >= edge,
                Some(edge) => k <= edge,
            };
            match &w.value {
                Some(v) if inside => {
                    merged.insert(k.clone(), v.clone());
                }
                Some(_) => {}
                None => {
                    merged.remove(k);
                }
            }
        }
        let mut rows: Vec<(Vec<u8>, Value)> = merged.into_iter().collect();
        if reverse {
            rows.reverse();
        }
        let complete = exhausted && rows.len() <= limit;
        rows.truncate(limit);
        self.scans.push(ScanEntry {
            table: table.clone(),
            lo: lo.to_vec(),
            hi: hi.to_vec(),
            limit: store_limit,
            reverse,
            observed,
        });
        (rows, complete)
    }

    /// Phase 1a: lock the write set in (table, key) order. Inserts over a
    /// present row fail. On failure nothing stays locked.
    pub fn lock_writes(&mut self) -> Result<(), TxnError> {
        debug_assert_eq!(self.status, Status::Active);
        let mut failure = None;
        for ((_, key), w) in self.writes.iter_mut() {
            let rec = w.table.get_or_create(key);
            rec.lock();
            self.locked.push(rec.clone());
            if w.insert && rec.peek().is_some() {
                failure = Some(TxnError::DuplicateKey(w.table.logical_name.to_string()));
                break;
            }
            w.record = Some(rec);
        }
        match failure {
            Some(e) => {
                self.release();
                Err(e)
            }
            None => Ok(()),
        }
    }

    /// Phase 1b: re-check every read and scan. Must run after the write
    /// sets of all participating containers are locked.
    pub fn validate(&mut self) -> Result<(), TxnError> {
        let mine: HashSet<*const Record> = self.locked.iter().map(Arc::as_ptr).collect();
        let locked_by_other =
            |rec: &Arc<Record>| rec.is_locked() && !mine.contains(&Arc::as_ptr(rec));
        for r in &self.reads {
            match &r.record {
                Some(rec) => {
                    if locked_by_other(rec) {
                        return Err(TxnError::Conflict("read record locked"));
                    }
                    if rec.tid() & !LOCK_BIT != r.tid {
                        return Err(TxnError::Conflict("read record changed"));
                    }
                }
                None => {
                    if let Some(rec) = r.table.get(&r.key) {
                        if locked_by_other(&rec) {
                            return Err(TxnError::Conflict("absent record locked"));
                        }
                        if !mine.contains(&Arc::as_ptr(&rec)) && rec.peek().is_some() {
                            return Err(TxnError::Conflict("absent record inserted"));
                        }
                    }
                }
            }
        }
        for s in &self.scans {
            let mut seen = Vec::with_capacity(s.observed.len());
            for (key, rec) in s.table.range_records(&s.lo, &s.hi, s.reverse) {
                if seen.len() >= s.limit {
                    break;
                }
                if locked_by_other(&rec) {
                    return Err(TxnError::Conflict("scanned range locked"));
                }
                // Own locked records still hold their pre-commit value.
                let tid = rec.tid() & !LOCK_BIT;
                if rec.peek().is_some() {
                    seen.push((key, tid));
                }
            }
            if seen != s.observed {
                return Err(TxnError::Conflict("phantom"));
            }
        }
        self.status = Status::Validated;
        Ok(())
    }

    /// Smallest version allowed for this transaction's commit: above every
    /// version it observed or overwrote.
    pub fn min_commit_tid(&self) -> u64 {
        let reads = self.reads.iter().map(|r| r.tid);
        let writes = self
            .locked
            .iter()
            .map(|r| r.tid() & !LOCK_BIT);
        let scans = self.scans.iter().flat_map(|s| s.observed.iter().map(|o| o.1));
        reads.chain(writes).chain(scans).max().unwrap_or(0)
    }

    /// Phase 2: install buffered writes with `tid`, unlocking them.
    pub fn install(&mut self, tid: u64) {
        debug_assert_eq!(self.status, Status::Validated);
        for w in self.writes.values_mut() {
            let rec = w.record.take().expect("locked before install");
            rec.install(w.value.take(), tid);
        }
        self.locked.clear();
        self.status = Status::Committed;
    }

    /// Releases any held locks and drops buffered state.
    pub fn release(&mut self) {
        for rec in self.locked.drain(..) {
            rec.unlock();
        }
        for w in self.writes.values_mut() {
            w.record = None;
        }
        self.status = Status::Aborted;
    }

    /// Installs without locking or validation; used when concurrency
    /// control is disabled.
    pub fn install_unchecked(&mut self, tid: u64) {
        for ((_, key), w) in self.writes.iter_mut() {
            let rec = w.table.get_or_create(key);
            rec.lock();
            rec.install(w.value.take(), tid);
        }
        self.status = Status::Committed;
    }
}

/// Chooses a commit version: above `floor`, above the previous version this
/// thread produced, and inside `epoch`.
pub fn next_tid(floor: u64, epoch: u64) -> u64 {
    LAST_TID.with(|last| {
        let base = floor.max(last.get()).max(make_tid(epoch, 0));
        let tid = base + 1;
        last.set(tid);
        tid
    })
}

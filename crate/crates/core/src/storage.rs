//! Per-container record storage: ordered tables of versioned records.

use std::collections::{BTreeMap, HashMap};
use std::ops::Bound;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::{Mutex, MutexGuard, RwLock};

use crate::error::ConfigError;

/// Bit 63 of a version word is the lock flag.
pub const LOCK_BIT: u64 = 1 << 63;
pub const EPOCH_SHIFT: u32 = 40;
const SEQ_MASK: u64 = (1 << EPOCH_SHIFT) - 1;

pub type Value = Arc<[u8]>;

pub fn make_tid(epoch: u64, seq: u64) -> u64 {
    debug_assert!(seq <= SEQ_MASK);
    (epoch << EPOCH_SHIFT) | seq
}

pub fn tid_epoch(tid: u64) -> u64 {
    (tid & !LOCK_BIT) >> EPOCH_SHIFT
}

pub fn tid_seq(tid: u64) -> u64 {
    tid & SEQ_MASK
}

/// Spin briefly, then hand the core to someone else.
#[inline]
pub(crate) fn backoff(round: &mut u32) {
    if *round < 16 {
        std::hint::spin_loop();
    } else {
        std::thread::yield_now();
    }
    *round = round.saturating_add(1);
}

/// Global order of reads and installs when tracing. Traced installs run
/// while holding it, so reads under it see no half-installed record.
#[derive(Debug, Default)]
pub struct SeqClock {
    last: Mutex<u64>,
}

impl SeqClock {
    pub fn lock(&self) -> MutexGuard<'_, u64> {
        self.last.lock()
    }
}

pub fn tick(last: &mut u64) -> u64 {
    *last += 1;
    *last
}

/// A record slot. `None` values stand for absent rows: insert placeholders
/// that have not been installed yet, aborted inserts, and deletions.
#[derive(Debug)]
pub struct Record {
    tid: AtomicU64,
    value: RwLock<Option<Value>>,
}

impl Record {
    pub fn new(value: Option<Value>, tid: u64) -> Self {
        Record {
            tid: AtomicU64::new(tid),
            value: RwLock::new(value),
        }
    }

    pub fn tid(&self) -> u64 {
        self.tid.load(Ordering::Acquire)
    }

    pub fn is_locked(&self) -> bool {
        self.tid() & LOCK_BIT != 0
    }

    /// Consistent (value, version) snapshot; waits while the record is
    /// locked so a half-installed value is never returned.
    pub fn read_stable(&self) -> (Option<Value>, u64) {
        let mut round = 0;
        loop {
            let v1 = self.tid();
            if v1 & LOCK_BIT != 0 {
                backoff(&mut round);
                continue;
            }
            let value = self.value.read().clone();
            let v2 = self.tid();
            if v1 == v2 {
                return (value, v1);
            }
            backoff(&mut round);
        }
    }

    /// Value and version ignoring the lock flag. Consistent only when no
    /// install can run concurrently: while holding the record lock, or the
    /// [`SeqClock`] that traced installs take.
    pub fn read_raw(&self) -> (Option<Value>, u64) {
        (self.value.read().clone(), self.tid() & !LOCK_BIT)
    }

    /// Current value without version check. Only meaningful while the
    /// caller holds the lock.
    pub fn peek(&self) -> Option<Value> {
        self.value.read().clone()
    }

    pub fn try_lock(&self) -> bool {
        let cur = self.tid();
        cur & LOCK_BIT == 0
            && self
                .tid
                .compare_exchange(cur, cur | LOCK_BIT, Ordering::AcqRel, Ordering::Relaxed)
                .is_ok()
    }

    pub fn lock(&self) {
        let mut round = 0;
        while !self.try_lock() {
            backoff(&mut round);
        }
    }

    pub fn unlock(&self) {
        debug_assert!(self.is_locked());
        self.tid.fetch_and(!LOCK_BIT, Ordering::Release);
    }

    /// Writes a new value and version, releasing the lock.
    pub fn install(&self, value: Option<Value>, tid: u64) {
        debug_assert!(self.is_locked());
        debug_assert!(tid & LOCK_BIT == 0);
        *self.value.write() = value;
        self.tid.store(tid, Ordering::Release);
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TableSchema {
    pub name: String,
    pub key_arity: usize,
    pub value_columns: Vec<String>,
}

impl TableSchema {
    pub fn new(name: &str, key_arity: usize, value_columns: &[&str]) -> Self {
        TableSchema {
            name: name.to_string(),
            key_arity: key_arity.max(1),
            value_columns: value_columns.iter().map(|c| c.to_string()).collect(),
        }
    }
}

pub type TableId = u32;

#[derive(Debug)]
pub struct Table {
    pub id: TableId,
    /// Name as declared by the reactor type; physical tables of different
    /// types in one container are distinguished by `physical_name`.
    pub logical_name: Arc<str>,
    pub physical_name: String,
    pub schema: TableSchema,
    index: RwLock<BTreeMap<Vec<u8>, Arc<Record>>>,
}

impl Table {
    pub fn get(&self, key: &[u8]) -> Option<Arc<Record>> {
        self.index.read().get(key).cloned()
    }

    /// Returns the record for `key`, creating an absent placeholder if the
    /// key has never been seen.
    pub fn get_or_create(&self, key: &[u8]) -> Arc<Record> {
        if let Some(r) = self.get(key) {
            return r;
        }
        self.index
            .write()
            .entry(key.to_vec())
            .or_insert_with(|| Arc::new(Record::new(None, 0)))
            .clone()
    }

    /// Loads a row outside of any transaction (initial population).
    pub fn load(&self, key: Vec<u8>, value: Value) {
        self.index
            .write()
            .insert(key, Arc::new(Record::new(Some(value), 0)));
    }

    /// Records in `[lo, hi)` in key order (descending if `reverse`),
    /// including absent ones, without reading their values.
    pub fn range_records(&self, lo: &[u8], hi: &[u8], reverse: bool) -> Vec<(Vec<u8>, Arc<Record>)> {
        if lo >= hi {
            return Vec::new();
        }
        let index = self.index.read();
        let range = index.range::<[u8], _>((Bound::Included(lo), Bound::Excluded(hi)));
        let collect = |it: &mut dyn Iterator<Item = (&Vec<u8>, &Arc<Record>)>| {
            it.map(|(k, r)| (k.clone(), r.clone())).collect::<Vec<_>>()
        };
        if reverse {
            collect(&mut range.rev())
        } else {
            collect(&mut range.into_iter())
        }
    }

    /// Present records in `[lo, hi)`, up to `limit`, as consistent
    /// `(key, value, version)` triples, and whether the range was
    /// exhausted. Records are read outside the index lock, a chunk at a
    /// time. With `raw` set the caller guarantees no concurrent installs and
    /// locked records are read without waiting.
    pub fn scan_present(
        &self,
        lo: &[u8],
        hi: &[u8],
        limit: usize,
        reverse: bool,
        raw: bool,
    ) -> (Vec<(Vec<u8>, Value, u64)>, bool) {
        let mut out = Vec::new();
        if lo >= hi || limit == 0 {
            return (out, lo >= hi);
        }
        let chunk = limit.saturating_add(16).min(1024);
        let mut lower = Bound::Included(lo.to_vec());
        let mut upper = Bound::Excluded(hi.to_vec());
        loop {
            let batch: Vec<(Vec<u8>, Arc<Record>)> = {
                let index = self.index.read();
                let range = index.range::<Vec<u8>, _>((lower.clone(), upper.clone()));
                if reverse {
                    range.rev().take(chunk).map(|(k, r)| (k.clone(), r.clone())).collect()
                } else {
                    range.take(chunk).map(|(k, r)| (k.clone(), r.clone())).collect()
                }
            };
            let full = batch.len() == chunk;
            for (k, r) in &batch {
                let (value, tid) = if raw { r.read_raw() } else { r.read_stable() };
                if let Some(v) = value {
                    out.push((k.clone(), v, tid));
                    if out.len() >= limit {
                        return (out, false);
                    }
                }
            }
            match batch.last() {
                Some((k, _)) if full => {
                    if reverse {
                        upper = Bound::Excluded(k.clone());
                    } else {
                        lower = Bound::Excluded(k.clone());
                    }
                }
                _ => return (out, true),
            }
        }
    }

    pub fn len(&self) -> usize {
        self.index.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All present rows, in key order.
    pub fn snapshot(&self) -> Vec<(Vec<u8>, Value)> {
        self.index
            .read()
            .iter()
            .filter_map(|(k, r)| r.read_stable().0.map(|v| (k.clone(), v)))
            .collect()
    }

    pub fn locked_count(&self) -> usize {
        self.index.read().values().filter(|r| r.is_locked()).count()
    }
}

/// The tables of one container.
#[derive(Debug, Default)]
pub struct Store {
    tables: Vec<Arc<Table>>,
    by_name: HashMap<String, TableId>,
}

impl Store {
    pub fn new() -> Self {
        Store::default()
    }

    pub fn create_table(
        &mut self,
        physical_name: &str,
        schema: TableSchema,
    ) -> Result<Arc<Table>, ConfigError> {
        if self.by_name.contains_key(physical_name) {
            return Err(ConfigError::DuplicateTable(physical_name.to_string()));
        }
        let id = self.tables.len() as TableId;
        let table = Arc::new(Table {
            id,
            logical_name: Arc::from(schema.name.as_str()),
            physical_name: physical_name.to_string(),
            schema,
            index: RwLock::new(BTreeMap::new()),
        });
        self.tables.push(table.clone());
        self.by_name.insert(physical_name.to_string(), id);
        Ok(table)
    }

    pub fn table(&self, physical_name: &str) -> Option<&Arc<Table>> {
        self.by_name
            .get(physical_name)
            .map(|&id| &self.tables[id as usize])
    }

    pub fn tables(&self) -> &[Arc<Table>] {
        &self.tables
    }

    pub fn locked_count(&self) -> usize {
        self.tables.iter().map(|t| t.locked_count()).sum()
    }
}

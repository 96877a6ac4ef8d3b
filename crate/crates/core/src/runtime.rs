//! Procedure execution: the `Tx` handle procedures program against,
//! sub-transaction calls, futures, the implicit join and abort propagation.

use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicBool, AtomicU32, AtomicU64, AtomicUsize, Ordering};
use std::sync::Arc;

use parking_lot::Mutex;
use reactordb_checker::OpKind;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::datum::Datum;
use crate::db::DbInner;
use crate::error::TxnError;
use crate::executor::{Executor, Job};
use crate::future::{Completion, Fut, FutureCell, SubFuture};
use crate::occ::{ContainerTxn, ReadSource};
use crate::profile::{now_ns, CallMode, CallProfile, Section, SubTxnProfile};
use crate::storage::{Table, TableSchema, Value};
use crate::storage::tick;
use crate::trace::{access, PendingOp, TxnTrace};

pub type ReactorId = u32;

pub type Procedure =
    Arc<dyn Fn(&mut Tx<'_>, &[Datum]) -> Result<Datum, TxnError> + Send + Sync>;

/// A reactor type: the relations each of its reactors encapsulates and the
/// procedures that can be invoked on them.
#[derive(Clone)]
pub struct ReactorType {
    pub name: String,
    pub tables: Vec<TableSchema>,
    pub procedures: HashMap<String, Procedure>,
}

impl ReactorType {
    pub fn new(name: &str) -> Self {
        ReactorType {
            name: name.to_string(),
            tables: Vec::new(),
            procedures: HashMap::new(),
        }
    }

    pub fn table(mut self, schema: TableSchema) -> Self {
        self.tables.push(schema);
        self
    }

    pub fn procedure<F>(mut self, name: &str, f: F) -> Self
    where
        F: Fn(&mut Tx<'_>, &[Datum]) -> Result<Datum, TxnError> + Send + Sync + 'static,
    {
        self.procedures.insert(name.to_string(), Arc::new(f));
        self
    }
}

pub(crate) struct ReactorInfo {
    pub id: ReactorId,
    pub name: Arc<str>,
    pub type_idx: usize,
    pub container: usize,
    /// Executor index within the container for affinity routing.
    pub executor: usize,
    pub prefix: [u8; 4],
    /// Sub-transactions invoked on this reactor and not yet completed, as
    /// (root txn, sub-transaction id).
    active: Mutex<Vec<(u64, u32)>>,
}

impl ReactorInfo {
    pub fn new(id: ReactorId, name: &str, type_idx: usize, container: usize, executor: usize) -> Self {
        ReactorInfo {
            id,
            name: Arc::from(name),
            type_idx,
            container,
            executor,
            prefix: id.to_be_bytes(),
            active: Mutex::new(Vec::new()),
        }
    }

    /// Admits sub-transaction `sub` of root `txn` unless another
    /// sub-transaction of the same root is active here.
    pub fn admit(&self, txn: u64, sub: u32) -> Result<(), TxnError> {
        let mut active = self.active.lock();
        if active.iter().any(|&(t, s)| t == txn && s != sub) {
            return Err(TxnError::DangerousStructure {
                reactor: self.name.to_string(),
                txn,
            });
        }
        active.push((txn, sub));
        Ok(())
    }

    pub fn leave(&self, txn: u64, sub: u32) {
        let mut active = self.active.lock();
        if let Some(pos) = active.iter().position(|&e| e == (txn, sub)) {
            active.swap_remove(pos);
        }
    }

    pub fn active_len(&self) -> usize {
        self.active.lock().len()
    }

    pub fn physical_key(&self, key: &[u8]) -> Vec<u8> {
        let mut k = Vec::with_capacity(4 + key.len());
        k.extend_from_slice(&self.prefix);
        k.extend_from_slice(key);
        k
    }
}

pub(crate) struct TypeInfo {
    pub name: String,
    pub procedures: HashMap<String, Procedure>,
}

pub(crate) struct Container {
    pub id: u32,
    pub executors: Vec<Arc<Executor>>,
    pub rr: AtomicUsize,
    /// Tables by reactor type index, then logical name.
    pub tables: Vec<HashMap<String, Arc<Table>>>,
    pub store: crate::storage::Store,
    /// Bit i set when executor with global index i touched this container's
    /// records on behalf of a transaction.
    pub accessed_by: AtomicU64,
}

/// State of one root transaction, shared by all of its sub-transactions.
pub struct TxnCtx {
    pub id: u64,
    pub(crate) parts: Vec<Mutex<ContainerTxn>>,
    aborted: AtomicBool,
    reason: Mutex<Option<TxnError>>,
    next_subtxn: AtomicU32,
    pub(crate) trace: Option<Mutex<TxnTrace>>,
    pub(crate) profiling: bool,
}

impl TxnCtx {
    pub(crate) fn new(id: u64, containers: usize, tracing: bool, profiling: bool) -> Self {
        TxnCtx {
            id,
            parts: (0..containers).map(|_| Mutex::new(ContainerTxn::default())).collect(),
            aborted: AtomicBool::new(false),
            reason: Mutex::new(None),
            next_subtxn: AtomicU32::new(1),
            trace: tracing.then(|| Mutex::new(TxnTrace::default())),
            profiling,
        }
    }

    /// Marks the root as aborted. The first reason is kept.
    pub fn abort(&self, reason: TxnError) {
        let mut r = self.reason.lock();
        if r.is_none() {
            *r = Some(reason);
        }
        self.aborted.store(true, Ordering::Release);
    }

    pub fn is_aborted(&self) -> bool {
        self.aborted.load(Ordering::Acquire)
    }

    /// Checkpoint: fails once the root has been aborted anywhere.
    pub fn check(&self) -> Result<(), TxnError> {
        if self.is_aborted() {
            Err(self.reason.lock().clone().unwrap_or(TxnError::Conflict("aborted")))
        } else {
            Ok(())
        }
    }

    pub(crate) fn touched_containers(&self) -> Vec<usize> {
        self.parts
            .iter()
            .enumerate()
            .filter(|(_, p)| p.lock().touched)
            .map(|(i, _)| i)
            .collect()
    }
}

struct Child {
    cell: Arc<SubFuture>,
    consumed: bool,
    call: Option<usize>,
}

/// Rows returned by a range scan, keyed by the reactor-local key.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScanResult {
    pub entries: Vec<(Vec<u8>, Value)>,
    /// True when the scan saw the whole range (it was not cut by the limit).
    pub exhausted: bool,
}

/// Handle through which a procedure runs as a sub-transaction on one
/// reactor: record access on that reactor's relations and calls to other
/// reactors.
pub struct Tx<'a> {
    db: &'a Arc<DbInner>,
    ctx: &'a Arc<TxnCtx>,
    reactor: &'a ReactorInfo,
    subtxn: u32,
    exec: &'a Arc<Executor>,
    children: Vec<Child>,
    profile: Option<SubTxnProfile>,
    /// Index of the most recent child call if nothing happened since.
    last_call: Option<usize>,
}

impl<'a> Tx<'a> {
    pub fn reactor_id(&self) -> ReactorId {
        self.reactor.id
    }

    pub fn reactor_name(&self) -> &str {
        &self.reactor.name
    }

    pub fn txn_id(&self) -> u64 {
        self.ctx.id
    }

    pub fn subtxn_id(&self) -> u32 {
        self.subtxn
    }

    /// True once any part of this root transaction has failed.
    pub fn is_aborted(&self) -> bool {
        self.ctx.is_aborted()
    }

    pub fn lookup(&self, name: &str) -> Result<ReactorId, TxnError> {
        self.db
            .reactor_id(name)
            .ok_or_else(|| TxnError::UnknownReactor(name.to_string()))
    }

    /// Convenience for procedures: a user abort.
    pub fn abort<T>(&self, msg: impl Into<String>) -> Result<T, TxnError> {
        Err(TxnError::User(msg.into()))
    }

    fn table(&self, name: &str) -> Result<Arc<Table>, TxnError> {
        self.db.containers[self.reactor.container].tables[self.reactor.type_idx]
            .get(name)
            .cloned()
            .ok_or_else(|| TxnError::UnknownTable {
                reactor_type: self.db.types[self.reactor.type_idx].name.clone(),
                table: name.to_string(),
            })
    }

    fn note_access(&self) {
        if self.exec.index < 64 {
            self.db.containers[self.reactor.container]
                .accessed_by
                .fetch_or(1 << self.exec.index, Ordering::Relaxed);
        }
    }

    fn trace_write(&self, table: &Table, key: &[u8]) {
        if let Some(t) = &self.ctx.trace {
            t.lock().writes.push(PendingOp {
                subtxn: self.subtxn,
                reactor: self.reactor.name.clone(),
                table: table.logical_name.clone(),
                key: key.to_vec(),
            });
        }
    }

    fn trace_reads(&self, table: &Table, stamped: Vec<(u64, &[u8])>) {
        if let Some(t) = &self.ctx.trace {
            let mut t = t.lock();
            for (seq, key) in stamped {
                t.stamped.push(access(
                    seq,
                    OpKind::Read,
                    self.ctx.id,
                    self.subtxn,
                    &self.reactor.name,
                    &table.logical_name,
                    key,
                ));
            }
        }
    }

    /// The tracer, if this transaction is traced.
    fn tracer(&self) -> Option<&'a crate::trace::Tracer> {
        self.ctx.trace.as_ref().and(self.db.tracer.as_ref())
    }

    fn part(&self) -> parking_lot::MutexGuard<'_, ContainerTxn> {
        self.ctx.parts[self.reactor.container].lock()
    }

    pub fn read(&mut self, table: &str, key: &[u8]) -> Result<Option<Value>, TxnError> {
        self.last_call = None;
        self.ctx.check()?;
        let t = self.table(table)?;
        self.note_access();
        let pkey = self.reactor.physical_key(key);
        let Some(tracer) = self.tracer() else {
            return Ok(self.part().read(&t, &pkey).0);
        };
        let mut part = self.part();
        let mut last = tracer.clock.lock();
        let (value, source) = part.read_with(&t, &pkey, true);
        let seq = (source == ReadSource::Store).then(|| tick(&mut last));
        drop(last);
        drop(part);
        if let Some(seq) = seq {
            self.trace_reads(&t, vec![(seq, key)]);
        }
        Ok(value)
    }

    fn buffer(&mut self, table: &str, key: &[u8], value: Option<Value>, insert: bool) -> Result<(), TxnError> {
        self.last_call = None;
        self.ctx.check()?;
        if key.is_empty() {
            return Err(TxnError::BadArgument("empty key".into()));
        }
        let t = self.table(table)?;
        self.note_access();
        let pkey = self.reactor.physical_key(key);
        self.part().write(&t, &pkey, value, insert);
        self.trace_write(&t, key);
        Ok(())
    }

    pub fn write(&mut self, table: &str, key: &[u8], value: impl Into<Value>) -> Result<(), TxnError> {
        self.buffer(table, key, Some(value.into()), false)
    }

    /// Like `write`, but the commit fails if the key already exists.
    pub fn insert(&mut self, table: &str, key: &[u8], value: impl Into<Value>) -> Result<(), TxnError> {
        self.buffer(table, key, Some(value.into()), true)
    }

    pub fn delete(&mut self, table: &str, key: &[u8]) -> Result<(), TxnError> {
        self.buffer(table, key, None, false)
    }

    pub fn read_row<T: DeserializeOwned>(&mut self, table: &str, key: &[u8]) -> Result<Option<T>, TxnError> {
        match self.read(table, key)? {
            Some(v) => bincode::deserialize(&v)
                .map(Some)
                .map_err(|e| TxnError::Codec(e.to_string())),
            None => Ok(None),
        }
    }

    pub fn write_row<T: Serialize>(&mut self, table: &str, key: &[u8], row: &T) -> Result<(), TxnError> {
        let bytes = bincode::serialize(row).map_err(|e| TxnError::Codec(e.to_string()))?;
        self.write(table, key, bytes)
    }

    pub fn insert_row<T: Serialize>(&mut self, table: &str, key: &[u8], row: &T) -> Result<(), TxnError> {
        let bytes = bincode::serialize(row).map_err(|e| TxnError::Codec(e.to_string()))?;
        self.insert(table, key, bytes)
    }

    /// Up to `limit` rows with keys in `[lo, hi)`, ascending or descending.
    pub fn scan(
        &mut self,
        table: &str,
        lo: &[u8],
        hi: &[u8],
        limit: usize,
        reverse: bool,
    ) -> Result<ScanResult, TxnError> {
        self.last_call = None;
        self.ctx.check()?;
        let t = self.table(table)?;
        self.note_access();
        let plo = self.reactor.physical_key(lo);
        let phi = self.reactor.physical_key(hi);
        let tracer = self.tracer();
        let mut part = self.part();
        let mut clock = tracer.map(|t| t.clock.lock());
        let (rows, exhausted) = part.scan_with(&t, &plo, &phi, limit, reverse, clock.is_some());
        let mut stamped = Vec::new();
        if let Some(last) = clock.as_mut() {
            for (i, (k, _)) in rows.iter().enumerate() {
                if !part.has_write(&t, k) {
                    stamped.push((tick(last), i));
                }
            }
        }
        drop(clock);
        drop(part);
        let entries: Vec<(Vec<u8>, Value)> = rows.into_iter().map(|(k, v)| (k[4..].to_vec(), v)).collect();
        if !stamped.is_empty() {
            let ops = stamped.iter().map(|&(seq, i)| (seq, entries[i].0.as_slice())).collect();
            self.trace_reads(&t, ops);
        }
        Ok(ScanResult { entries, exhausted })
    }

    pub fn scan_rows<T: DeserializeOwned>(
        &mut self,
        table: &str,
        lo: &[u8],
        hi: &[u8],
        limit: usize,
        reverse: bool,
    ) -> Result<Vec<(Vec<u8>, T)>, TxnError> {
        self.scan(table, lo, hi, limit, reverse)?
            .entries
            .into_iter()
            .map(|(k, v)| {
                bincode::deserialize(&v)
                    .map(|row| (k, row))
                    .map_err(|e| TxnError::Codec(e.to_string()))
            })
            .collect()
    }

    /// Records the duration of `f` as a named section of this
    /// sub-transaction's profile.
    pub fn timed<R>(&mut self, name: &str, f: impl FnOnce(&mut Self) -> R) -> R {
        if self.profile.is_none() {
            return f(self);
        }
        let start = now_ns();
        let r = f(self);
        let end = now_ns();
        if let Some(p) = &mut self.profile {
            p.sections.push(Section {
                name: name.to_string(),
                start,
                end,
            });
        }
        r
    }

    /// Invokes `procedure` on reactor `dest` as a sub-transaction.
    ///
    /// Calls to the current reactor and to reactors in the same container
    /// run synchronously before this returns; the future is already
    /// resolved. Calls to other containers are queued at the destination's
    /// executor and the future resolves later.
    pub fn call(&mut self, dest: ReactorId, procedure: &str, args: Vec<Datum>) -> Result<Fut, TxnError> {
        self.last_call = None;
        self.ctx.check()?;
        let info = self
            .db
            .reactors
            .get(dest as usize)
            .ok_or_else(|| TxnError::UnknownReactor(format!("#{dest}")))?;
        let proc = self.db.procedure(info, procedure)?;
        let sub = self.ctx.next_subtxn.fetch_add(1, Ordering::Relaxed);
        let call_start = self.ctx.profiling.then(now_ns).unwrap_or(0);
        let mode = if dest == self.reactor.id {
            CallMode::Inline
        } else if info.container == self.reactor.container {
            CallMode::Local
        } else {
            CallMode::Remote
        };
        if mode != CallMode::Inline {
            if let Err(e) = info.admit(self.ctx.id, sub) {
                self.ctx.abort(e.clone());
                return Err(e);
            }
        }
        let owner = (self.ctx.id, self.subtxn);
        match mode {
            CallMode::Inline | CallMode::Local => {
                let (result, child) =
                    run_subtxn(self.db, self.ctx, info, sub, self.exec, &proc, procedure, &args);
                if mode == CallMode::Local {
                    info.leave(self.ctx.id, sub);
                }
                let call = self.record_call(CallProfile {
                    mode,
                    call_start,
                    send_done: 0,
                    resume: 0,
                    get_start: 0,
                    awaited_immediately: true,
                    child: child.map(Box::new),
                });
                if let Some(p) = self.profile.as_mut().and_then(|p| call.map(|c| &mut p.calls[c])) {
                    let now = now_ns();
                    p.send_done = now;
                    p.resume = now;
                    p.get_start = now;
                }
                let result = result?;
                let cell = FutureCell::ready(Completion {
                    result: Ok(result),
                    profile: None,
                });
                self.children.push(Child {
                    cell: cell.clone(),
                    consumed: true,
                    call,
                });
                Ok(Fut {
                    cell,
                    owner,
                    index: self.children.len() - 1,
                })
            }
            CallMode::Remote => {
                let cell = FutureCell::pending();
                self.ctx.parts[info.container].lock().touched = true;
                let exec = self.db.route(info);
                let job = {
                    let db = self.db.clone();
                    let ctx = self.ctx.clone();
                    let cell = cell.clone();
                    let cancel_db = self.db.clone();
                    let cancel_ctx = self.ctx.clone();
                    let cancel_cell = cell.clone();
                    let procedure = procedure.to_string();
                    Job {
                        run: Box::new(move |exec| {
                            let info = &db.reactors[dest as usize];
                            let (result, profile) =
                                run_subtxn(&db, &ctx, info, sub, exec, &proc, &procedure, &args);
                            info.leave(ctx.id, sub);
                            cell.complete(Completion { result, profile });
                        }),
                        cancel: Box::new(move || {
                            cancel_db.reactors[dest as usize].leave(cancel_ctx.id, sub);
                            cancel_ctx.abort(TxnError::Shutdown);
                            cancel_cell.complete(Completion {
                                result: Err(TxnError::Shutdown),
                                profile: None,
                            });
                        }),
                    }
                };
                exec.enqueue(job);
                let call = self.record_call(CallProfile {
                    mode,
                    call_start,
                    send_done: if self.ctx.profiling { now_ns() } else { 0 },
                    resume: 0,
                    get_start: 0,
                    awaited_immediately: false,
                    child: None,
                });
                self.children.push(Child {
                    cell: cell.clone(),
                    consumed: false,
                    call,
                });
                let index = self.children.len() - 1;
                self.last_call = Some(index);
                Ok(Fut { cell, owner, index })
            }
        }
    }

    fn record_call(&mut self, call: CallProfile) -> Option<usize> {
        self.profile.as_mut().map(|p| {
            p.calls.push(call);
            p.calls.len() - 1
        })
    }

    fn wait_cell(&self, cell: &SubFuture) -> Completion {
        if let Some(c) = cell.try_get() {
            return c;
        }
        self.exec.block();
        let c = cell.wait();
        self.exec.resume();
        c
    }

    /// Marks child `index` consumed and fills in its profile.
    fn settle(&mut self, index: usize, completion: &Completion, immediate: bool, wait_start: u64) {
        let child = &mut self.children[index];
        let was_consumed = child.consumed;
        child.consumed = true;
        if let (Some(p), Some(ci)) = (self.profile.as_mut(), child.call) {
            let call = &mut p.calls[ci];
            if !was_consumed && call.mode == CallMode::Remote {
                call.resume = now_ns();
                call.get_start = wait_start;
                call.awaited_immediately = immediate;
                call.child = completion.profile.clone().map(Box::new);
            }
        }
    }

    /// Waits for the sub-transaction behind `f` and returns its result.
    /// Fails if it, or anything else in this root transaction, aborted.
    pub fn get(&mut self, f: &Fut) -> Result<Datum, TxnError> {
        let immediate = self.last_call == Some(f.index);
        self.last_call = None;
        self.ctx.check()?;
        let wait_start = if self.profile.is_some() { now_ns() } else { 0 };
        let completion = self.wait_cell(&f.cell);
        if f.owner == (self.ctx.id, self.subtxn) && f.index < self.children.len() {
            self.settle(f.index, &completion, immediate, wait_start);
        }
        let value = completion.result?;
        self.ctx.check()?;
        Ok(value)
    }

    /// Implicit join: waits for every child not yet awaited.
    fn join_children(&mut self) -> Result<(), TxnError> {
        let mut first_err = None;
        for i in 0..self.children.len() {
            if self.children[i].consumed {
                continue;
            }
            let cell = self.children[i].cell.clone();
            let wait_start = if self.profile.is_some() { now_ns() } else { 0 };
            let completion = self.wait_cell(&cell);
            self.settle(i, &completion, false, wait_start);
            if let Err(e) = completion.result {
                first_err.get_or_insert(e);
            }
        }
        match first_err {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }
}

impl Fut {
    pub fn get(&self, tx: &mut Tx<'_>) -> Result<Datum, TxnError> {
        tx.get(self)
    }

    pub fn is_ready(&self) -> bool {
        self.cell.is_ready()
    }
}

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = p.downcast_ref::<&str>() {
        s.to_string()
    } else if let Some(s) = p.downcast_ref::<String>() {
        s.clone()
    } else {
        "unknown panic".to_string()
    }
}

/// Runs one sub-transaction body on the current worker, then joins its
/// outstanding children. Any failure aborts the whole root.
#[allow(clippy::too_many_arguments)]
pub(crate) fn run_subtxn(
    db: &Arc<DbInner>,
    ctx: &Arc<TxnCtx>,
    info: &ReactorInfo,
    sub: u32,
    exec: &Arc<Executor>,
    proc: &Procedure,
    proc_name: &str,
    args: &[Datum],
) -> (Result<Datum, TxnError>, Option<SubTxnProfile>) {
    if let Err(e) = ctx.check() {
        return (Err(e), None);
    }
    ctx.parts[info.container].lock().touched = true;
    let profile = ctx
        .profiling
        .then(|| SubTxnProfile::new(&info.name, info.container, proc_name, now_ns()));
    let mut tx = Tx {
        db,
        ctx,
        reactor: info,
        subtxn: sub,
        exec,
        children: Vec::new(),
        profile,
        last_call: None,
    };
    let body = catch_unwind(AssertUnwindSafe(|| proc(&mut tx, args)))
        .unwrap_or_else(|p| Err(TxnError::Panic(panic_message(p))));
    if let Some(p) = &mut tx.profile {
        p.body_end = now_ns();
    }
    let joined = tx.join_children();
    let mut result = body.and_then(|v| joined.map(|_| v));
    if result.is_ok() {
        if let Err(e) = ctx.check() {
            result = Err(e);
        }
    }
    if let Err(e) = &result {
        ctx.abort(e.clone());
    }
    let mut profile = tx.profile.take();
    if let Some(p) = &mut profile {
        p.end = now_ns();
    }
    (result, profile)
}

//! A database instance: reactors placed on containers according to a
//! deployment plan, with the executors that run their transactions.

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use reactordb_checker::History;

use crate::coordinator;
use crate::datum::Datum;
use crate::deploy::{DeploymentPlan, RouterPolicy};
use crate::error::{ConfigError, TxnError};
use crate::executor::{Executor, ExecutorStats, Job};
use crate::future::{ClientFuture, FutureCell, TxnOutcome};
use crate::profile::{now_ns, TxnProfile};
use crate::runtime::{
    run_subtxn, Container, Procedure, ReactorId, ReactorInfo, ReactorType, TxnCtx, TypeInfo,
};
use crate::storage::{Store, Value};
use crate::trace::Tracer;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TraceTarget {
    Memory,
    File(PathBuf),
}

#[derive(Clone, Debug)]
pub struct DbOptions {
    pub trace: Option<TraceTarget>,
    /// Collect a timing profile for every transaction.
    pub profile: bool,
    /// Optimistic concurrency control. When off, writes are installed
    /// without locking or validation.
    pub cc: bool,
    pub epoch_interval: Duration,
}

impl Default for DbOptions {
    fn default() -> Self {
        DbOptions {
            trace: None,
            profile: false,
            cc: true,
            epoch_interval: Duration::from_millis(40),
        }
    }
}

pub(crate) struct DbInner {
    pub reactors: Vec<ReactorInfo>,
    by_name: HashMap<String, ReactorId>,
    pub types: Vec<TypeInfo>,
    pub containers: Vec<Container>,
    executors: Vec<Arc<Executor>>,
    router: RouterPolicy,
    epoch: AtomicU64,
    next_txn: AtomicU64,
    pub tracer: Option<Tracer>,
    pub cc: bool,
    profile: bool,
    stop: AtomicBool,
}

impl DbInner {
    pub fn reactor_id(&self, name: &str) -> Option<ReactorId> {
        self.by_name.get(name).copied()
    }

    pub fn epoch(&self) -> u64 {
        self.epoch.load(Ordering::Acquire)
    }

    pub fn procedure(&self, info: &ReactorInfo, name: &str) -> Result<Procedure, TxnError> {
        let ty = &self.types[info.type_idx];
        ty.procedures
            .get(name)
            .cloned()
            .ok_or_else(|| TxnError::UnknownProcedure {
                reactor_type: ty.name.clone(),
                procedure: name.to_string(),
            })
    }

    /// Executor that receives requests for `info`.
    pub fn route(&self, info: &ReactorInfo) -> Arc<Executor> {
        let c = &self.containers[info.container];
        let idx = match self.router {
            RouterPolicy::Affinity => info.executor,
            RouterPolicy::RoundRobin => c.rr.fetch_add(1, Ordering::Relaxed) % c.executors.len(),
        };
        c.executors[idx].clone()
    }
}

#[allow(clippy::too_many_arguments)]
fn run_root(
    db: &Arc<DbInner>,
    exec: &Arc<Executor>,
    reactor: ReactorId,
    proc: &Procedure,
    proc_name: &str,
    args: &[Datum],
    profiling: bool,
    submit: u64,
) -> TxnOutcome {
    let info = &db.reactors[reactor as usize];
    let id = db.next_txn.fetch_add(1, Ordering::Relaxed) + 1;
    let ctx = Arc::new(TxnCtx::new(
        id,
        db.containers.len(),
        db.tracer.is_some(),
        profiling,
    ));
    let root_start = if profiling { now_ns() } else { 0 };
    let (result, root) = match info.admit(id, 0) {
        Ok(()) => {
            let out = run_subtxn(db, &ctx, info, 0, exec, proc, proc_name, args);
            info.leave(id, 0);
            out
        }
        Err(e) => (Err(e), None),
    };
    let exec_end = if profiling { now_ns() } else { 0 };
    let containers_touched = ctx.touched_containers().len();
    let result = match result {
        Ok(v) => coordinator::commit(db, &ctx).map(|_| v),
        Err(e) => {
            coordinator::abort(db, &ctx);
            Err(e)
        }
    };
    let profile = root.map(|root| {
        let end = now_ns();
        TxnProfile {
            txn: id,
            committed: result.is_ok(),
            input_gen_ns: 0,
            submit,
            root_start,
            exec_end,
            commit_end: end,
            client_done: end,
            containers_touched,
            root,
        }
    });
    TxnOutcome {
        txn: id,
        result,
        profile,
    }
}

/// Committed contents of one relation of one reactor.
pub type LogicalState = BTreeMap<(String, String), Vec<(Vec<u8>, Value)>>;

pub struct Database {
    inner: Arc<DbInner>,
    epoch_thread: Option<JoinHandle<()>>,
}

impl Database {
    /// Creates reactors `decls` (name, type name) from `types` and places
    /// them according to `plan`.
    pub fn instantiate(
        decls: &[(String, String)],
        types: Vec<ReactorType>,
        plan: &DeploymentPlan,
        opts: DbOptions,
    ) -> Result<Database, ConfigError> {
        plan.validate()?;
        let placements = plan.placements()?;

        let mut type_idx = HashMap::new();
        for (i, t) in types.iter().enumerate() {
            if type_idx.insert(t.name.clone(), i).is_some() {
                return Err(ConfigError::Schema(format!("reactor type {} declared twice", t.name)));
            }
        }

        let mut executors = Vec::new();
        let mut containers = Vec::new();
        for (ci, spec) in plan.containers.iter().enumerate() {
            let mut execs = Vec::new();
            for e in &spec.executors {
                let ex = Executor::new(e.id, executors.len(), ci, e.mpl, e.core);
                executors.push(ex.clone());
                execs.push(ex);
            }
            let mut store = Store::new();
            let mut tables = Vec::new();
            for t in &types {
                let mut by_name = HashMap::new();
                for schema in &t.tables {
                    let physical = format!("{}.{}", t.name, schema.name);
                    let table = store.create_table(&physical, schema.clone())?;
                    by_name.insert(schema.name.clone(), table);
                }
                tables.push(by_name);
            }
            containers.push(Container {
                id: spec.id,
                executors: execs,
                rr: AtomicUsize::new(0),
                tables,
                store,
                accessed_by: AtomicU64::new(0),
            });
        }

        let mut reactors = Vec::new();
        let mut by_name = HashMap::new();
        let mut per_container = vec![0usize; containers.len()];
        for (name, ty) in decls {
            let t = *type_idx
                .get(ty)
                .ok_or_else(|| ConfigError::UnknownType(ty.clone()))?;
            let p = placements
                .get(name)
                .ok_or_else(|| ConfigError::UnmappedReactor(name.clone()))?;
            let id = reactors.len() as ReactorId;
            if by_name.insert(name.clone(), id).is_some() {
                return Err(ConfigError::DuplicateReactor(name.clone()));
            }
            let n_exec = containers[p.container].executors.len();
            let executor = p.executor.unwrap_or(per_container[p.container] % n_exec);
            per_container[p.container] += 1;
            reactors.push(ReactorInfo::new(id, name, t, p.container, executor));
        }

        let tracer = match &opts.trace {
            None => None,
            Some(TraceTarget::Memory) => Some(Tracer::in_memory()),
            Some(TraceTarget::File(path)) => {
                Some(Tracer::to_file(path).map_err(|e| ConfigError::Io(e.to_string()))?)
            }
        };

        let inner = Arc::new(DbInner {
            reactors,
            by_name,
            types: types
                .into_iter()
                .map(|t| TypeInfo {
                    name: t.name,
                    procedures: t.procedures,
                })
                .collect(),
            containers,
            executors,
            router: plan.router,
            epoch: AtomicU64::new(1),
            next_txn: AtomicU64::new(0),
            tracer,
            cc: opts.cc,
            profile: opts.profile,
            stop: AtomicBool::new(false),
        });

        let ticker = inner.clone();
        let interval = opts.epoch_interval;
        let epoch_thread = std::thread::Builder::new()
            .name("epoch".into())
            .spawn(move || {
                while !ticker.stop.load(Ordering::Acquire) {
                    std::thread::park_timeout(interval);
                    ticker.epoch.fetch_add(1, Ordering::AcqRel);
                }
            })
            .map_err(|e| ConfigError::Io(e.to_string()))?;

        Ok(Database {
            inner,
            epoch_thread: Some(epoch_thread),
        })
    }

    pub fn reactor_id(&self, name: &str) -> Option<ReactorId> {
        self.inner.reactor_id(name)
    }

    pub fn reactor_name(&self, id: ReactorId) -> Option<&str> {
        self.inner.reactors.get(id as usize).map(|r| &*r.name)
    }

    pub fn reactor_count(&self) -> usize {
        self.inner.reactors.len()
    }

    pub fn container_count(&self) -> usize {
        self.inner.containers.len()
    }

    /// Container index hosting `reactor`.
    pub fn container_of(&self, reactor: ReactorId) -> Option<usize> {
        self.inner.reactors.get(reactor as usize).map(|r| r.container)
    }

    pub fn executor_count(&self) -> usize {
        self.inner.executors.len()
    }

    pub fn epoch(&self) -> u64 {
        self.inner.epoch()
    }

    /// Submits `procedure` on `reactor` as a root transaction.
    pub fn submit(&self, reactor: ReactorId, procedure: &str, args: Vec<Datum>) -> ClientFuture {
        self.submit_with(reactor, procedure, args, self.inner.profile)
    }

    pub fn submit_with(
        &self,
        reactor: ReactorId,
        procedure: &str,
        args: Vec<Datum>,
        profiling: bool,
    ) -> ClientFuture {
        let submit = now_ns();
        let cell = FutureCell::pending();
        let failed = |e: TxnError| {
            cell.complete(TxnOutcome {
                txn: 0,
                result: Err(e),
                profile: None,
            });
        };
        let Some(info) = self.inner.reactors.get(reactor as usize) else {
            failed(TxnError::UnknownReactor(format!("#{reactor}")));
            return ClientFuture { cell };
        };
        let proc = match self.inner.procedure(info, procedure) {
            Ok(p) => p,
            Err(e) => {
                failed(e);
                return ClientFuture { cell };
            }
        };
        let exec = self.inner.route(info);
        let db = self.inner.clone();
        let reply = cell.clone();
        let cancel_reply = cell.clone();
        let procedure = procedure.to_string();
        exec.enqueue(Job {
            run: Box::new(move |exec| {
                let out = run_root(&db, exec, reactor, &proc, &procedure, &args, profiling, submit);
                reply.complete(out);
            }),
            cancel: Box::new(move || {
                cancel_reply.complete(TxnOutcome {
                    txn: 0,
                    result: Err(TxnError::Shutdown),
                    profile: None,
                });
            }),
        });
        ClientFuture { cell }
    }

    pub fn submit_by_name(
        &self,
        reactor: &str,
        procedure: &str,
        args: Vec<Datum>,
    ) -> Result<ClientFuture, TxnError> {
        let id = self
            .reactor_id(reactor)
            .ok_or_else(|| TxnError::UnknownReactor(reactor.to_string()))?;
        Ok(self.submit(id, procedure, args))
    }

    /// Submits and waits.
    pub fn run(&self, reactor: &str, procedure: &str, args: Vec<Datum>) -> Result<Datum, TxnError> {
        self.submit_by_name(reactor, procedure, args)?.wait().result
    }

    fn table(&self, reactor: ReactorId, table: &str) -> Result<(&ReactorInfo, &Arc<crate::storage::Table>), TxnError> {
        let info = self
            .inner
            .reactors
            .get(reactor as usize)
            .ok_or_else(|| TxnError::UnknownReactor(format!("#{reactor}")))?;
        let t = self.inner.containers[info.container].tables[info.type_idx]
            .get(table)
            .ok_or_else(|| TxnError::UnknownTable {
                reactor_type: self.inner.types[info.type_idx].name.clone(),
                table: table.to_string(),
            })?;
        Ok((info, t))
    }

    /// Bulk-loads a committed row, outside any transaction.
    pub fn load(&self, reactor: ReactorId, table: &str, key: &[u8], value: impl Into<Value>) -> Result<(), TxnError> {
        let (info, t) = self.table(reactor, table)?;
        t.load(info.physical_key(key), value.into());
        Ok(())
    }

    pub fn load_row<T: serde::Serialize>(&self, reactor: ReactorId, table: &str, key: &[u8], row: &T) -> Result<(), TxnError> {
        let bytes = bincode::serialize(row).map_err(|e| TxnError::Codec(e.to_string()))?;
        self.load(reactor, table, key, bytes)
    }

    /// Latest committed value, read outside any transaction.
    pub fn peek(&self, reactor: ReactorId, table: &str, key: &[u8]) -> Result<Option<Value>, TxnError> {
        let (info, t) = self.table(reactor, table)?;
        Ok(t.get(&info.physical_key(key)).and_then(|r| r.peek()))
    }

    pub fn peek_row<T: serde::de::DeserializeOwned>(&self, reactor: ReactorId, table: &str, key: &[u8]) -> Result<Option<T>, TxnError> {
        match self.peek(reactor, table, key)? {
            Some(v) => bincode::deserialize(&v).map(Some).map_err(|e| TxnError::Codec(e.to_string())),
            None => Ok(None),
        }
    }

    /// Committed state of every relation, keyed by (reactor, relation).
    /// Deployment independent: physical placement is not visible.
    pub fn logical_state(&self) -> LogicalState {
        let mut out = LogicalState::new();
        for c in &self.inner.containers {
            for (ti, tables) in c.tables.iter().enumerate() {
                for (name, t) in tables {
                    for (k, v) in t.snapshot() {
                        let id = u32::from_be_bytes(k[..4].try_into().expect("prefixed key"));
                        let r = &self.inner.reactors[id as usize];
                        debug_assert_eq!(r.type_idx, ti);
                        out.entry((r.name.to_string(), name.clone()))
                            .or_default()
                            .push((k[4..].to_vec(), v));
                    }
                }
            }
        }
        for rows in out.values_mut() {
            rows.sort();
        }
        out
    }

    /// Records currently locked anywhere. Zero when no commit is running.
    pub fn locked_records(&self) -> usize {
        self.inner.containers.iter().map(|c| c.store.locked_count()).sum()
    }

    /// Sub-transactions currently registered as active on any reactor.
    pub fn active_subtxns(&self) -> usize {
        self.inner.reactors.iter().map(|r| r.active_len()).sum()
    }

    pub fn executor_stats(&self) -> Vec<ExecutorStats> {
        self.inner.executors.iter().map(|e| e.stats()).collect()
    }

    /// For each container, the global indices of executors that accessed
    /// its records.
    pub fn container_accessors(&self) -> Vec<Vec<usize>> {
        self.inner
            .containers
            .iter()
            .map(|c| {
                let bits = c.accessed_by.load(Ordering::Relaxed);
                (0..64).filter(|i| bits & (1 << i) != 0).collect()
            })
            .collect()
    }

    /// Container index of each executor, by global index.
    pub fn executor_containers(&self) -> Vec<usize> {
        self.inner.executors.iter().map(|e| e.container).collect()
    }

    pub fn container_ids(&self) -> Vec<u32> {
        self.inner.containers.iter().map(|c| c.id).collect()
    }

    /// The trace recorded so far, when tracing to memory.
    pub fn history(&self) -> Option<History> {
        self.inner.tracer.as_ref().map(|t| t.history())
    }

    /// Writes the trace file, when tracing to a file.
    pub fn flush_trace(&self) -> std::io::Result<()> {
        match &self.inner.tracer {
            Some(t) => t.flush(),
            None => Ok(()),
        }
    }

    /// Stops executors, cancelling queued requests, and waits for workers.
    pub fn shutdown(&mut self) {
        for e in &self.inner.executors {
            e.shutdown();
        }
        for e in &self.inner.executors {
            e.join();
        }
        self.inner.stop.store(true, Ordering::Release);
        if let Some(h) = self.epoch_thread.take() {
            h.thread().unpark();
            let _ = h.join();
        }
        if let Err(e) = self.flush_trace() {
            log::error!("writing trace failed: {e}");
        }
    }
}

impl Drop for Database {
    fn drop(&mut self) {
        self.shutdown();
    }
}

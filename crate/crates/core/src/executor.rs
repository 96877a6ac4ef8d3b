//! Transaction executors: a FIFO request queue drained by a pool of worker
//! threads, of which at most `mpl` run at a time. A worker that blocks on a
//! remote result gives up its slot so another worker can continue draining
//! the queue, and takes a slot again (ahead of queued requests) once the
//! result arrives.

use std::collections::VecDeque;
use std::sync::Arc;
use std::thread::JoinHandle;

use parking_lot::{Condvar, Mutex};

type RunFn = Box<dyn FnOnce(&Arc<Executor>) + Send>;
type CancelFn = Box<dyn FnOnce() + Send>;

pub(crate) struct Job {
    pub run: RunFn,
    /// Invoked instead of `run` when the executor shuts down first.
    pub cancel: CancelFn,
}

struct Queued {
    job: Job,
    arrival: u64,
}

#[derive(Default)]
struct ExecState {
    queue: VecDeque<Queued>,
    active: usize,
    resuming: usize,
    idle: usize,
    starting: usize,
    threads: usize,
    shutdown: bool,
    next_arrival: u64,
    last_admitted: Option<u64>,
    stats: ExecutorStats,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ExecutorStats {
    pub admitted: u64,
    pub max_active: usize,
    pub fifo_violations: u64,
    pub threads_spawned: usize,
}

pub struct Executor {
    /// Id from the deployment plan.
    pub id: u32,
    /// Position among all executors of the database.
    pub index: usize,
    pub container: usize,
    pub mpl: usize,
    pub core: Option<usize>,
    state: Mutex<ExecState>,
    cv: Condvar,
    handles: Mutex<Vec<JoinHandle<()>>>,
}

impl Executor {
    pub(crate) fn new(id: u32, index: usize, container: usize, mpl: usize, core: Option<usize>) -> Arc<Self> {
        Arc::new(Executor {
            id,
            index,
            container,
            mpl: mpl.max(1),
            core,
            state: Mutex::new(ExecState::default()),
            cv: Condvar::new(),
            handles: Mutex::new(Vec::new()),
        })
    }

    fn needs_worker(&self, st: &ExecState) -> bool {
        let spare = st.idle + st.starting;
        !st.shutdown && st.queue.len() > spare && st.active + spare < self.mpl
    }

    fn spawn_worker(self: &Arc<Self>, st: &mut ExecState) {
        st.threads += 1;
        st.starting += 1;
        st.stats.threads_spawned += 1;
        let me = self.clone();
        let handle = std::thread::Builder::new()
            .name(format!("exec-{}", self.id))
            .spawn(move || me.worker_loop())
            .expect("spawn executor worker");
        self.handles.lock().push(handle);
    }

    pub(crate) fn enqueue(self: &Arc<Self>, job: Job) {
        let mut st = self.state.lock();
        if st.shutdown {
            drop(st);
            (job.cancel)();
            return;
        }
        let arrival = st.next_arrival;
        st.next_arrival += 1;
        st.queue.push_back(Queued { job, arrival });
        if self.needs_worker(&st) {
            self.spawn_worker(&mut st);
        }
        self.cv.notify_all();
    }

    fn worker_loop(self: Arc<Self>) {
        if let Some(core) = self.core {
            if !core_affinity::set_for_current(core_affinity::CoreId { id: core }) {
                log::warn!("executor {}: could not pin to core {core}, running unpinned", self.id);
            }
        }
        let mut st = self.state.lock();
        st.starting -= 1;
        loop {
            if st.shutdown {
                if st.queue.is_empty() {
                    st.threads -= 1;
                    self.cv.notify_all();
                    return;
                }
                let drained: Vec<Queued> = st.queue.drain(..).collect();
                drop(st);
                for q in drained {
                    (q.job.cancel)();
                }
                st = self.state.lock();
                continue;
            }
            if !st.queue.is_empty() && st.active < self.mpl && st.resuming == 0 {
                let q = st.queue.pop_front().expect("non-empty");
                if st.last_admitted.is_some_and(|prev| prev > q.arrival) {
                    st.stats.fifo_violations += 1;
                }
                st.last_admitted = Some(q.arrival);
                st.active += 1;
                st.stats.admitted += 1;
                st.stats.max_active = st.stats.max_active.max(st.active);
                drop(st);
                (q.job.run)(&self);
                st = self.state.lock();
                st.active -= 1;
                self.cv.notify_all();
                continue;
            }
            st.idle += 1;
            self.cv.wait(&mut st);
            st.idle -= 1;
        }
    }

    /// The calling worker is about to wait for a remote result.
    pub(crate) fn block(self: &Arc<Self>) {
        let mut st = self.state.lock();
        st.active -= 1;
        if self.needs_worker(&st) {
            self.spawn_worker(&mut st);
        }
        self.cv.notify_all();
    }

    /// The calling worker's result arrived; wait for an execution slot.
    pub(crate) fn resume(&self) {
        let mut st = self.state.lock();
        st.resuming += 1;
        while st.active >= self.mpl {
            self.cv.wait(&mut st);
        }
        st.resuming -= 1;
        st.active += 1;
        st.stats.max_active = st.stats.max_active.max(st.active);
    }

    pub fn stats(&self) -> ExecutorStats {
        self.state.lock().stats.clone()
    }

    pub fn queue_len(&self) -> usize {
        self.state.lock().queue.len()
    }

    pub(crate) fn shutdown(&self) {
        self.state.lock().shutdown = true;
        self.cv.notify_all();
    }

    pub(crate) fn join(&self) {
        loop {
            let handles: Vec<_> = self.handles.lock().drain(..).collect();
            if handles.is_empty() {
                return;
            }
            for h in handles {
                let _ = h.join();
            }
        }
    }
}

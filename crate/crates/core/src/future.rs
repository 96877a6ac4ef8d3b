use std::sync::Arc;

use parking_lot::{Condvar, Mutex};

use crate::datum::Datum;
use crate::error::TxnError;
use crate::profile::{SubTxnProfile, TxnProfile};

/// Outcome of a sub-transaction.
#[derive(Clone, Debug)]
pub struct Completion {
    pub result: Result<Datum, TxnError>,
    pub profile: Option<SubTxnProfile>,
}

/// One-shot result slot shared between a caller and the executor running
/// the callee.
pub struct FutureCell<T> {
    slot: Mutex<Option<T>>,
    cv: Condvar,
}

impl<T: Clone> FutureCell<T> {
    pub fn pending() -> Arc<Self> {
        Arc::new(FutureCell {
            slot: Mutex::new(None),
            cv: Condvar::new(),
        })
    }

    pub fn ready(value: T) -> Arc<Self> {
        Arc::new(FutureCell {
            slot: Mutex::new(Some(value)),
            cv: Condvar::new(),
        })
    }

    /// Resolves the cell. Later calls are ignored.
    pub fn complete(&self, value: T) {
        let mut slot = self.slot.lock();
        if slot.is_none() {
            *slot = Some(value);
            self.cv.notify_all();
        }
    }

    pub fn is_ready(&self) -> bool {
        self.slot.lock().is_some()
    }

    pub fn try_get(&self) -> Option<T> {
        self.slot.lock().clone()
    }

    /// Blocks the calling thread until resolved.
    pub fn wait(&self) -> T {
        let mut slot = self.slot.lock();
        while slot.is_none() {
            self.cv.wait(&mut slot);
        }
        slot.clone().expect("resolved")
    }
}

pub type SubFuture = FutureCell<Completion>;

/// Outcome of a root transaction as delivered to the client.
#[derive(Clone, Debug)]
pub struct TxnOutcome {
    pub txn: u64,
    pub result: Result<Datum, TxnError>,
    pub profile: Option<TxnProfile>,
}

/// Handle returned to clients by `Database::submit`.
pub struct ClientFuture {
    pub(crate) cell: Arc<FutureCell<TxnOutcome>>,
}

impl ClientFuture {
    pub fn wait(self) -> TxnOutcome {
        self.cell.wait()
    }

    pub fn is_ready(&self) -> bool {
        self.cell.is_ready()
    }
}

/// Handle for a sub-transaction invoked with `Tx::call`.
pub struct Fut {
    pub(crate) cell: Arc<SubFuture>,
    /// Sub-transaction that issued the call, and position of the call in its
    /// list of children.
    pub(crate) owner: (u64, u32),
    pub(crate) index: usize,
}

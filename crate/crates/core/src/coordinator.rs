//! Commit of a root transaction across every container it touched.
//!
//! Write sets are locked on all participants in ascending container order,
//! then read and scan sets are validated on all of them, and only then is a
//! single commit version chosen and installed everywhere.

use parking_lot::MutexGuard;

use crate::db::DbInner;
use crate::error::TxnError;
use crate::occ::{next_tid, ContainerTxn};
use crate::runtime::TxnCtx;

fn participants(ctx: &TxnCtx) -> Vec<MutexGuard<'_, ContainerTxn>> {
    ctx.parts
        .iter()
        .map(|p| p.lock())
        .filter(|p| p.touched && !p.is_empty())
        .collect()
}

/// Runs `install` and, when tracing, stamps the transaction's writes and
/// outcome in the same critical section.
fn finish(db: &DbInner, ctx: &TxnCtx, committed: bool, install: impl FnOnce()) {
    match (&db.tracer, &ctx.trace) {
        (Some(tracer), Some(trace)) => {
            let mut trace = trace.lock();
            let mut last = tracer.clock.lock();
            install();
            trace.finish(&mut last, ctx.id, committed);
            drop(last);
            tracer.append(std::mem::take(&mut trace.stamped));
        }
        _ => install(),
    }
}

fn release_all(db: &DbInner, ctx: &TxnCtx, mut parts: Vec<MutexGuard<'_, ContainerTxn>>, e: TxnError) -> TxnError {
    for p in parts.iter_mut() {
        p.release();
    }
    drop(parts);
    ctx.abort(e.clone());
    finish(db, ctx, false, || {});
    e
}

pub(crate) fn commit(db: &DbInner, ctx: &TxnCtx) -> Result<(), TxnError> {
    let mut parts = participants(ctx);
    if !db.cc {
        let floor = parts.iter().map(|p| p.min_commit_tid()).max().unwrap_or(0);
        let tid = next_tid(floor, db.epoch());
        finish(db, ctx, true, || {
            for p in parts.iter_mut() {
                p.install_unchecked(tid);
            }
        });
        return Ok(());
    }
    for i in 0..parts.len() {
        if let Err(e) = parts[i].lock_writes() {
            return Err(release_all(db, ctx, parts, e));
        }
    }
    for i in 0..parts.len() {
        if let Err(e) = parts[i].validate() {
            return Err(release_all(db, ctx, parts, e));
        }
    }
    let floor = parts.iter().map(|p| p.min_commit_tid()).max().unwrap_or(0);
    let tid = next_tid(floor, db.epoch());
    finish(db, ctx, true, || {
        for p in parts.iter_mut() {
            p.install(tid);
        }
    });
    Ok(())
}

pub(crate) fn abort(db: &DbInner, ctx: &TxnCtx) {
    for p in ctx.parts.iter() {
        p.lock().release();
    }
    finish(db, ctx, false, || {});
}

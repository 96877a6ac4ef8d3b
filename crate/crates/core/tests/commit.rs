mod common;

use std::sync::Arc;
use std::thread;

use common::*;
use parking_lot::{Condvar, Mutex};
use rand::{Rng, SeedableRng};
use reactordb_core::{
    build_strategy, Args, Database, Datum, DbOptions, ReactorType, Strategy, TableSchema, TxnError,
};

type Gate = Arc<(Mutex<u8>, Condvar)>;

fn wait_for(gate: &Gate, stage: u8) {
    let mut s = gate.0.lock();
    while *s < stage {
        gate.1.wait(&mut s);
    }
}

fn advance(gate: &Gate, stage: u8) {
    let mut s = gate.0.lock();
    *s = (*s).max(stage);
    gate.1.notify_all();
}

fn gated_db(gate: Gate) -> Database {
    let ty = ReactorType::new("cell")
        .table(TableSchema::new("v", 1, &["value"]))
        .procedure("read", |tx, _| Ok(tx.read_row::<i64>("v", b"x")?.unwrap_or(0).into()))
        .procedure("write", |tx, a| {
            tx.write_row("v", b"x", &a.int(0)?)?;
            Ok(Datum::Unit)
        })
        .procedure("read_remote_then_write", move |tx, a| {
            let other = tx.lookup(a.str(0)?)?;
            let seen = tx.call(other, "read", vec![])?.get(tx)?.as_int()?;
            advance(&gate, 1);
            wait_for(&gate, 2);
            tx.write_row("v", b"x", &(seen + 1))?;
            Ok(Datum::Unit)
        });
    let names = vec!["a".to_string(), "b".to_string()];
    let plan = build_strategy(Strategy::S3, 2, &names);
    let decls: Vec<_> = names.iter().map(|n| (n.clone(), "cell".to_string())).collect();
    Database::instantiate(&decls, vec![ty], &plan, DbOptions::default()).unwrap()
}

#[test]
fn stale_read_on_one_container_aborts_writes_on_another() {
    let gate: Gate = Arc::new((Mutex::new(0), Condvar::new()));
    let db = gated_db(gate.clone());
    assert_ne!(db.container_of(0), db.container_of(1));
    let pending = db.submit(db.reactor_id("b").unwrap(), "read_remote_then_write", vec!["a".into()]);
    wait_for(&gate, 1);
    db.run("a", "write", vec![41i64.into()]).unwrap();
    advance(&gate, 2);
    let out = pending.wait();
    assert!(matches!(out.result, Err(TxnError::Conflict(_))), "{:?}", out.result);
    assert_eq!(db.peek_row::<i64>(1, "v", b"x").unwrap(), None);
    assert_eq!(db.peek_row::<i64>(0, "v", b"x").unwrap(), Some(41));
    assert_eq!(db.locked_records(), 0);
}

#[test]
fn unchanged_read_commits_across_containers() {
    let gate: Gate = Arc::new((Mutex::new(0), Condvar::new()));
    let db = gated_db(gate.clone());
    db.run("a", "write", vec![9i64.into()]).unwrap();
    advance(&gate, 2);
    db.run("b", "read_remote_then_write", vec!["a".into()]).unwrap();
    assert_eq!(db.peek_row::<i64>(1, "v", b"x").unwrap(), Some(10));
}

fn run_random_transfers(db: &Arc<Database>, n_accounts: usize, threads: usize, per_thread: usize) -> (usize, usize) {
    let handles: Vec<_> = (0..threads)
        .map(|t| {
            let db = db.clone();
            thread::spawn(move || {
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(t as u64);
                let (mut ok, mut audits) = (0, 0);
                for _ in 0..per_thread {
                    let src = rng.gen_range(0..n_accounts);
                    if rng.gen_bool(0.1) {
                        let all: Vec<Datum> = names(n_accounts).into_iter().map(Datum::from).collect();
                        if let Ok(v) = db.run(&format!("acct{src}"), "audit", vec![all.into()]) {
                            assert_eq!(v.as_int().unwrap(), n_accounts as i64 * INITIAL, "audit saw a torn state");
                            audits += 1;
                        }
                        continue;
                    }
                    let dst = (src + rng.gen_range(1..n_accounts)) % n_accounts;
                    let amount = rng.gen_range(1..40i64);
                    match db.run(&format!("acct{src}"), "transfer", vec![format!("acct{dst}").into(), amount.into()]) {
                        Ok(_) => ok += 1,
                        Err(TxnError::Conflict(_)) | Err(TxnError::User(_)) => {}
                        Err(e) => panic!("unexpected {e:?}"),
                    }
                }
                (ok, audits)
            })
        })
        .collect();
    handles
        .into_iter()
        .map(|h| h.join().unwrap())
        .fold((0, 0), |a, b| (a.0 + b.0, a.1 + b.1))
}

#[test]
fn concurrent_transfers_conserve_money_and_leave_no_locks() {
    for (s, n) in [(Strategy::S1, 2), (Strategy::S2, 3), (Strategy::S3, 4)] {
        let db = Arc::new(accounts(8, s, n, DbOptions::default()));
        let (ok, _) = run_random_transfers(&db, 8, 6, 150);
        assert!(ok > 0);
        assert_eq!(total(&db, 8), 8 * INITIAL, "{s:?}");
        assert_eq!(db.locked_records(), 0);
        assert_eq!(db.active_subtxns(), 0);
        for name in names(8) {
            assert!(balance_of(&db, &name) >= 0);
        }
    }
}

#[test]
fn racing_inserts_admit_exactly_one() {
    let ty = ReactorType::new("kv")
        .table(TableSchema::new("t", 1, &["v"]))
        .procedure("ins", |tx, a| {
            tx.insert("t", &(a.int(0)? as u64).to_be_bytes(), a.int(1)?.to_be_bytes().to_vec())?;
            Ok(Datum::Unit)
        });
    let names = vec!["kv".to_string()];
    let plan = build_strategy(Strategy::S1, 4, &names).with_mpl(2);
    let db = Arc::new(
        Database::instantiate(&[("kv".into(), "kv".into())], vec![ty], &plan, DbOptions::default()).unwrap(),
    );
    let keys = 60;
    let handles: Vec<_> = (0..4)
        .map(|t| {
            let db = db.clone();
            thread::spawn(move || {
                let mut wins = vec![0usize; keys];
                for k in 0..keys {
                    match db.run("kv", "ins", vec![(k as i64).into(), (t as i64).into()]) {
                        Ok(_) => wins[k] += 1,
                        Err(TxnError::DuplicateKey(_)) | Err(TxnError::Conflict(_)) => {}
                        Err(e) => panic!("unexpected {e:?}"),
                    }
                }
                wins
            })
        })
        .collect();
    let mut wins = vec![0usize; keys];
    for h in handles {
        for (k, w) in h.join().unwrap().into_iter().enumerate() {
            wins[k] += w;
        }
    }
    assert!(wins.iter().all(|&w| w == 1), "{wins:?}");
    assert_eq!(db.logical_state().values().map(Vec::len).sum::<usize>(), keys);
}

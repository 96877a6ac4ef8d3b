mod common;

use common::*;
use reactordb_core::{DbOptions, Strategy, TxnError};

#[test]
fn concurrent_siblings_reaching_one_reactor_abort() {
    let db = accounts(4, Strategy::S3, 4, DbOptions::default());
    for _ in 0..5 {
        let r = db.run(
            "acct0",
            "diamond",
            vec!["acct1".into(), "acct2".into(), "acct3".into(), "hold".into()],
        );
        match r {
            Err(TxnError::DangerousStructure { reactor, .. }) => assert_eq!(reactor, "acct3"),
            other => panic!("expected dangerous structure, got {other:?}"),
        }
        assert_eq!(db.locked_records(), 0);
        assert_eq!(db.active_subtxns(), 0);
    }
    assert_eq!(total(&db, 4), 4 * INITIAL);
}

#[test]
fn sequential_siblings_reaching_one_reactor_commit() {
    let db = accounts(4, Strategy::S3, 4, DbOptions::default());
    let r = db.run(
        "acct0",
        "sequential",
        vec!["acct1".into(), "acct2".into(), "acct3".into()],
    );
    assert_eq!(r.unwrap().as_int().unwrap(), INITIAL + 2);
    assert_eq!(balance_of(&db, "acct3"), INITIAL + 2);
}

#[test]
fn same_container_calls_run_one_at_a_time() {
    // All four reactors share a container: each call completes before the
    // next is issued, so the second visit to acct3 is not concurrent.
    let db = accounts(4, Strategy::S1, 2, DbOptions::default());
    db.run(
        "acct0",
        "diamond",
        vec!["acct1".into(), "acct2".into(), "acct3".into(), "get".into()],
    )
    .unwrap();
}

#[test]
fn calls_to_the_current_reactor_are_not_checked() {
    let db = accounts(2, Strategy::S3, 2, DbOptions::default());
    let r = db.run("acct0", "forward", vec!["acct0".into(), "add".into(), 5i64.into()]);
    assert_eq!(r.unwrap().as_int().unwrap(), INITIAL + 5);
}

mod common;

use std::sync::Arc;
use std::thread;

use common::*;
use reactordb_core::{
    build_strategy, parse_plan, ConfigError, Database, DbOptions, Strategy,
};

fn serial_workload(db: &Database) {
    for i in 0..40i64 {
        let src = (i * 7 % 6) as usize;
        let dst = (src + 1 + (i % 5) as usize) % 6;
        let _ = db.run(&format!("acct{src}"), "transfer", vec![format!("acct{dst}").into(), (i % 13 + 1).into()]);
    }
}

#[test]
fn logical_state_is_independent_of_deployment() {
    let states: Vec<_> = [(Strategy::S1, 1), (Strategy::S1, 3), (Strategy::S2, 3), (Strategy::S3, 2), (Strategy::S3, 6)]
        .into_iter()
        .map(|(s, n)| {
            let db = accounts(6, s, n, DbOptions::default());
            serial_workload(&db);
            db.logical_state()
        })
        .collect();
    for s in &states[1..] {
        assert_eq!(s, &states[0]);
    }
}

#[test]
fn round_robin_spreads_and_affinity_pins_requests() {
    let db = accounts(4, Strategy::S1, 2, DbOptions::default());
    for _ in 0..10 {
        db.run("acct0", "get", vec![]).unwrap();
    }
    let admitted: Vec<u64> = db.executor_stats().iter().map(|s| s.admitted).collect();
    assert_eq!(admitted, vec![5, 5]);

    let db = accounts(4, Strategy::S2, 2, DbOptions::default());
    for _ in 0..10 {
        db.run("acct3", "get", vec![]).unwrap();
    }
    let admitted: Vec<u64> = db.executor_stats().iter().map(|s| s.admitted).collect();
    assert_eq!(admitted, vec![0, 10]);
}

#[test]
fn shared_nothing_executors_only_touch_their_container() {
    let db = Arc::new(accounts(8, Strategy::S3, 4, DbOptions::default()));
    let handles: Vec<_> = (0..4)
        .map(|t| {
            let db = db.clone();
            thread::spawn(move || {
                for i in 0..60usize {
                    let src = (t * 3 + i) % 8;
                    let dst = (src + 1 + i % 7) % 8;
                    let _ = db.run(&format!("acct{src}"), "transfer", vec![format!("acct{dst}").into(), 1i64.into()]);
                }
            })
        })
        .collect();
    for h in handles {
        h.join().unwrap();
    }
    let owner = db.executor_containers();
    for (c, accessors) in db.container_accessors().iter().enumerate() {
        assert!(!accessors.is_empty());
        for &e in accessors {
            assert_eq!(owner[e], c, "executor {e} touched container {c}");
        }
    }
    assert_eq!(total(&db, 8), 8 * INITIAL);
}

#[test]
fn executors_never_exceed_their_mpl() {
    for mpl in [1, 2, 3] {
        let names = names(6);
        let plan = build_strategy(Strategy::S3, 3, &names).with_mpl(mpl);
        let decls: Vec<_> = names.iter().map(|n| (n.clone(), "account".to_string())).collect();
        let db = Arc::new(Database::instantiate(&decls, vec![account_type()], &plan, DbOptions::default()).unwrap());
        for n in &names {
            db.load_row(db.reactor_id(n).unwrap(), "bal", BAL, &INITIAL).unwrap();
        }
        let handles: Vec<_> = (0..8)
            .map(|t| {
                let db = db.clone();
                thread::spawn(move || {
                    for i in 0..40usize {
                        let src = (t + i) % 6;
                        let _ = db.run(&format!("acct{src}"), "transfer", vec![format!("acct{}", (src + 3) % 6).into(), 1i64.into()]);
                    }
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        for s in db.executor_stats() {
            assert!(s.max_active <= mpl, "{s:?} with mpl {mpl}");
            assert_eq!(s.fifo_violations, 0);
        }
    }
}

#[test]
fn plan_errors_are_reported() {
    let decls = vec![("acct0".to_string(), "account".to_string())];
    let double = r#"{"router":"affinity","containers":[{"id":0,"executors":[{"id":0}]}],
        "reactor_map":[{"reactor":"acct0","container":0},{"prefix":"acct","from":0,"to":2,"container":0}]}"#;
    assert_eq!(parse_plan(double), Err(ConfigError::DoubleMapping("acct0".into())));
    let dangling = r#"{"router":"affinity","containers":[{"id":0,"executors":[{"id":0}]}],
        "reactor_map":[{"reactor":"acct0","container":0,"executor":5}]}"#;
    assert_eq!(
        parse_plan(dangling),
        Err(ConfigError::DanglingExecutor { container: 0, executor: 5 })
    );
    let unknown_field = r#"{"router":"affinity","containers":[],"reactor_map":[],"extra":1}"#;
    assert!(matches!(parse_plan(unknown_field), Err(ConfigError::Schema(_))));

    let empty = r#"{"router":"affinity","containers":[{"id":0,"executors":[{"id":0}]}],"reactor_map":[]}"#;
    let plan = parse_plan(empty).unwrap();
    let err = Database::instantiate(&decls, vec![account_type()], &plan, DbOptions::default()).err();
    assert_eq!(err, Some(ConfigError::UnmappedReactor("acct0".into())));
    let plan = build_strategy(Strategy::S1, 1, &["acct0".to_string()]);
    let bad_type = vec![("acct0".to_string(), "ledger".to_string())];
    let err = Database::instantiate(&bad_type, vec![account_type()], &plan, DbOptions::default()).err();
    assert_eq!(err, Some(ConfigError::UnknownType("ledger".into())));
}

#[test]
fn generated_plans_round_trip_through_json() {
    let names = names(10);
    for s in [Strategy::S1, Strategy::S2, Strategy::S3] {
        let plan = build_strategy(s, 4, &names);
        assert_eq!(parse_plan(&plan.to_json()).unwrap(), plan);
    }
}

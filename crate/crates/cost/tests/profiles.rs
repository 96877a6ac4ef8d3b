use reactordb_core::{
    build_strategy, Args, Database, Datum, DbOptions, ReactorType, Strategy, TableSchema, TxnProfile,
};
use reactordb_cost::{calibrate, decompose, CostError};

fn node_type() -> ReactorType {
    ReactorType::new("node")
        .table(TableSchema::new("v", 1, &["n"]))
        .procedure("bump", |tx, _| {
            let v = tx.read_row::<i64>("v", b"k")?.unwrap_or(0);
            tx.write_row("v", b"k", &(v + 1))?;
            Ok(Datum::Unit)
        })
        .procedure("sync_call", |tx, a| {
            let dest = tx.lookup(a.str(0)?)?;
            let f = tx.call(dest, "bump", vec![])?;
            f.get(tx)?;
            tx.call(tx.reactor_id(), "bump", vec![])?;
            Ok(Datum::Unit)
        })
        .procedure("async_call", |tx, a| {
            let dest = tx.lookup(a.str(0)?)?;
            let f = tx.call(dest, "bump", vec![])?;
            tx.call(tx.reactor_id(), "bump", vec![])?;
            f.get(tx)
        })
}

fn db(strategy: Strategy) -> Database {
    let names = vec!["n0".to_string(), "n1".to_string()];
    let plan = build_strategy(strategy, 2, &names);
    let decls: Vec<_> = names.iter().map(|n| (n.clone(), "node".to_string())).collect();
    let opts = DbOptions {
        profile: true,
        ..Default::default()
    };
    Database::instantiate(&decls, vec![node_type()], &plan, opts).unwrap()
}

fn profiles(db: &Database, procedure: &str, n: usize) -> Vec<TxnProfile> {
    (0..n)
        .map(|_| {
            let out = db.submit_by_name("n0", procedure, vec!["n1".into()]).unwrap().wait();
            out.result.unwrap();
            out.profile.expect("profiling enabled")
        })
        .collect()
}

#[test]
fn buckets_add_up_to_measured_latency() {
    let db = db(Strategy::S3);
    for p in profiles(&db, "sync_call", 20).iter().chain(&profiles(&db, "async_call", 20)) {
        let b = decompose(p).unwrap();
        assert_eq!(b.total(), p.latency_ns());
    }
}

#[test]
fn synchronous_remote_calls_show_communication() {
    let db = db(Strategy::S3);
    let ps = profiles(&db, "sync_call", 30);
    let b = decompose(&ps[29]).unwrap();
    assert!(b.c_s_total > 0 && b.c_r_total > 0);
    assert_eq!(b.async_execution, 0);
    let cal = calibrate(&ps).unwrap();
    assert_eq!(cal.samples, 30);
    assert!(cal.params.default_send > 0 && cal.params.default_recv > 0);
    assert_eq!(cal.params.send.len(), 1);
    assert_eq!((cal.params.send[0].from, cal.params.send[0].to), (0, 1));
    assert_eq!((cal.params.recv[0].from, cal.params.recv[0].to), (1, 0));
    assert!(cal.processing.contains_key("sync_call"));
    assert!(cal.processing.contains_key("bump"));
}

#[test]
fn asynchronous_calls_count_as_async_execution() {
    let db = db(Strategy::S3);
    let ps = profiles(&db, "async_call", 10);
    for p in &ps {
        let b = decompose(p).unwrap();
        assert_eq!(b.c_s_total + b.c_r_total, 0);
        assert!(b.async_execution > 0);
    }
}

#[test]
fn single_container_calibrates_free_communication() {
    let db = db(Strategy::S2);
    let cal = calibrate(&profiles(&db, "sync_call", 10)).unwrap();
    assert_eq!((cal.params.default_send, cal.params.default_recv), (0, 0));
    assert!(cal.params.send.is_empty() && cal.params.recv.is_empty());
    assert!(cal.processing_of("bump") > 0);
}

#[test]
fn no_profiles_is_insufficient() {
    assert!(matches!(calibrate(&[]), Err(CostError::InsufficientSamples(_))));
    let db = db(Strategy::S3);
    let mut ps = profiles(&db, "sync_call", 2);
    for p in &mut ps {
        p.committed = false;
    }
    assert!(matches!(calibrate(&ps), Err(CostError::InsufficientSamples(_))));
}

#[test]
fn calibration_round_trips_through_json() {
    let db = db(Strategy::S3);
    let cal = calibrate(&profiles(&db, "sync_call", 5)).unwrap();
    let s = serde_json::to_string(&cal).unwrap();
    assert_eq!(serde_json::from_str::<reactordb_cost::Calibration>(&s).unwrap(), cal);
}

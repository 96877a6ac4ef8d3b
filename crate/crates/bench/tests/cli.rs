use std::path::PathBuf;
use std::process::{Command, Output};

use reactordb_checker::{History, Item, OpKind, TraceOp};

fn reactordb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_reactordb")).args(args).output().unwrap()
}

fn tmp(name: &str) -> PathBuf {
    std::env::temp_dir().join(format!("reactordb-cli-{}-{name}", std::process::id()))
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

#[test]
fn bench_writes_one_csv_row_per_epoch() {
    let out = tmp("epochs.csv");
    let o = reactordb(&[
        "bench", "--benchmark", "smallbank", "--formulation", "opt", "--txn-size", "3", "--epochs", "4",
        "--epoch-ms", "50", "--warmup-ms", "0", "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    let mut r = csv::Reader::from_path(&out).unwrap();
    let headers = r.headers().unwrap().clone();
    assert_eq!(&headers[0], "epoch");
    assert!(headers.iter().any(|h| h == "mean_latency_us"));
    assert_eq!(r.records().count(), 4);
    std::fs::remove_file(out).unwrap();
}

#[test]
fn traced_bench_is_checked() {
    let trace = tmp("run.trace");
    let o = reactordb(&[
        "bench", "--benchmark", "tpcc", "--workers", "3", "--txns", "50", "--remote-pct", "30", "--trace",
        trace.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    assert!(text(&o.stdout).contains("classic projection serializable"));
    let o = reactordb(&["check-trace", trace.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(text(&o.stdout).contains("reactor model serializable"));
    std::fs::remove_file(trace).unwrap();
}

#[test]
fn check_trace_rejects_a_cycle() {
    let trace = tmp("cycle.trace");
    let op = |seq, kind, txn, key: &str| TraceOp::access(seq, kind, txn, 0, "r", Item::new("t", key));
    let h = History::reactor(vec![
        op(1, OpKind::Read, 1, "x"),
        op(2, OpKind::Write, 2, "x"),
        op(3, OpKind::Write, 2, "y"),
        op(4, OpKind::Read, 1, "y"),
        TraceOp::terminal(5, 1, true),
        TraceOp::terminal(6, 2, true),
    ]);
    let mut f = std::fs::File::create(&trace).unwrap();
    h.write_trace(&mut f).unwrap();
    drop(f);
    let o = reactordb(&["check-trace", trace.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o.stdout).contains("NOT serializable"));
    std::fs::remove_file(trace).unwrap();
}

#[test]
fn cost_estimate_reads_a_json_tree() {
    let tree = tmp("tree.json");
    let params = tmp("params.json");
    std::fs::write(&tree, r#"{"reactor":0,"p_seq":10,"async":[{"reactor":1,"p_seq":30},{"reactor":2,"p_seq":5}]}"#).unwrap();
    let p = serde_json::to_string(&reactordb_cost::CostParams::uniform(2, 3).place(0, 0).place(1, 1).place(2, 2)).unwrap();
    std::fs::write(&params, p).unwrap();
    let o = reactordb(&["cost", "estimate", tree.to_str().unwrap(), "--params", params.to_str().unwrap()]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    // The first child is sent at 2 and returns at 2 + 30 + 3.
    assert!(text(&o.stdout).contains("latency_ns 45"), "{}", text(&o.stdout));
    std::fs::remove_file(tree).unwrap();
    std::fs::remove_file(params).unwrap();
}

#[test]
fn profiles_feed_calibration_and_decomposition() {
    let profiles = tmp("profiles.jsonl");
    let o = reactordb(&[
        "bench", "--benchmark", "smallbank", "--txn-size", "2", "--txns", "40", "--profiles",
        profiles.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    let o = reactordb(&["cost", "calibrate", profiles.to_str().unwrap()]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    let cal: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(cal["processing"]["transact_saving"].as_u64().unwrap() > 0);
    let o = reactordb(&["cost", "decompose", profiles.to_str().unwrap()]);
    assert!(o.status.success());
    let out = text(&o.stdout);
    for line in out.lines().skip(1) {
        let v: Vec<u64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        assert_eq!(v[2..].iter().sum::<u64>(), v[1], "{line}");
    }
    assert_eq!(out.lines().count(), 41);
    std::fs::remove_file(profiles).unwrap();
}

#[test]
fn bad_arguments_are_rejected() {
    let o = reactordb(&["bench", "--benchmark", "smallbank", "--mix", "multi_transfer=50"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o.stderr).contains("100"), "{}", text(&o.stderr));
    let o = reactordb(&["bench", "--benchmark", "nope"]);
    assert!(!o.status.success());
}

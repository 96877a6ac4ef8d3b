//! Acceptance criteria. Prints one PASS/FAIL line per criterion.
//! `ACCEPTANCE_ONLY=1,4,9` runs a subset.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reactordb_bench::fit::{new_order_fit, smallbank_fit, NewOrderFitConfig, SmallbankFitConfig};
use reactordb_bench::harness::{default_plan, mean_sd, run, RunConfig, RunReport};
use reactordb_bench::spec::{parse_mix, parse_range, Benchmark, DestStrategy, Formulation, WorkloadSpec};
use reactordb_checker::{is_serializable, project, theorem1_suite, History};
use reactordb_core::{
    build_strategy, Args, Database, Datum, DbOptions, LogicalState, ReactorType, Strategy, TableSchema, TraceTarget,
    TxnError,
};
use reactordb_cost::{estimate_latency, simulate_forkjoin, CostParams, ForkJoinNode};

type Outcome = Result<String, String>;

/// Number, name, check and whether a failure fails the binary.
type Criterion = (usize, &'static str, fn() -> Outcome, bool);

/// Criteria whose outcome depends on the host having several cores.
fn parallel_host() -> bool {
    std::thread::available_parallelism().map_or(1, |n| n.get()) >= 8
}

fn runs(cfg: RunConfig) -> Result<RunReport, String> {
    run(&cfg).map(|r| r.report).map_err(|e| e.to_string())
}

fn config(spec: WorkloadSpec, strategy: Strategy, executors: usize, epochs: usize) -> Result<RunConfig, String> {
    let plan = default_plan(&spec, strategy, executors).map_err(|e| e.to_string())?;
    let mut cfg = RunConfig::new(spec, plan);
    cfg.epochs = epochs;
    Ok(cfg)
}

fn formulation_ordering() -> Outcome {
    let started = Instant::now();
    let order = [
        Formulation::FullySync,
        Formulation::PartiallyAsync,
        Formulation::FullyAsync,
        Formulation::Opt,
    ];
    let mut lines = Vec::new();
    let mut bad = Vec::new();
    for size in 2..=7 {
        let mut stats = Vec::new();
        for &f in &order {
            let spec = WorkloadSpec {
                formulation: f,
                txn_size: size,
                dest_strategy: DestStrategy::AllRemote,
                ..WorkloadSpec::new(Benchmark::Smallbank)
            };
            let r = runs(config(spec, Strategy::S3, 7, 50)?)?;
            stats.push((r.mean_latency_us, r.epoch_stddev_us));
        }
        lines.push(format!(
            "size {size}: {}",
            stats.iter().map(|(m, _)| format!("{m:.1}")).collect::<Vec<_>>().join(" > ")
        ));
        for (w, f) in stats.windows(2).zip(order.windows(2)) {
            let (a, b) = (w[0], w[1]);
            let ok = a.0 > b.0 || (size == 2 && a.0 + a.1 + b.1 >= b.0);
            if !ok {
                bad.push(format!("size {size}: {} {:.1} <= {} {:.1}", f[0], a.0, f[1], b.0));
            }
        }
    }
    let elapsed = started.elapsed();
    if elapsed > Duration::from_secs(300) {
        bad.push(format!("took {:.0} s", elapsed.as_secs_f64()));
    }
    let detail = format!("{} ({:.0} s)", lines.join("; "), elapsed.as_secs_f64());
    if bad.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{}; {detail}", bad.join(", ")))
    }
}

fn cost_model_fit() -> Outcome {
    let fit = smallbank_fit(&SmallbankFitConfig::default()).map_err(|e| e.to_string())?;
    let mut bad = Vec::new();
    let mut worst = (0.0f64, 0.0f64);
    for p in &fit.points {
        worst.0 = worst.0.max(p.relative_error());
        worst.1 = worst.1.max(p.bucket_error());
        if p.relative_error() > 0.25 {
            bad.push(format!(
                "{} size {}: predicted {:.1} us, measured {:.1} us",
                p.formulation, p.size, p.predicted_us, p.measured_us
            ));
        }
        if p.bucket_error() > 0.05 {
            bad.push(format!(
                "{} size {}: buckets {:.1} us of {:.1} us",
                p.formulation, p.size, p.bucket_sum_us, p.measured_us
            ));
        }
    }
    let detail = format!(
        "{} points, worst prediction error {:.1}%, worst bucket error {:.2}%",
        fit.points.len(),
        100.0 * worst.0,
        100.0 * worst.1
    );
    if bad.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{}; {detail}", bad.join(", ")))
    }
}

fn new_order_cost_fit() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for pct in [1.0, 100.0] {
        let f = new_order_fit(&NewOrderFitConfig {
            remote_pct: pct,
            ..NewOrderFitConfig::default()
        })
        .map_err(|e| e.to_string())?;
        ok &= f.relative_error() <= 0.25;
        parts.push(format!(
            "{pct}% remote: Pred+C+I {:.1} us vs observed {:.1} us ({:.1}%)",
            f.predicted_us(),
            f.observed_us,
            100.0 * f.relative_error()
        ));
    }
    if ok {
        Ok(parts.join("; "))
    } else {
        Err(parts.join("; "))
    }
}

fn theorem1() -> Outcome {
    let started = Instant::now();
    let r = theorem1_suite(2024, 1000);
    let elapsed = started.elapsed();
    let detail = format!(
        "{} histories ({} serializable), {} brute-forced, {} violations, {:.1} s",
        r.cases,
        r.serializable,
        r.brute_force_checked,
        r.counterexamples.len(),
        elapsed.as_secs_f64()
    );
    if r.passed() && r.cases == 1000 && elapsed < Duration::from_secs(60) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn trace_path(name: &str) -> PathBuf {
    std::env::temp_dir().join(format!("reactordb-acceptance-{}-{name}.trace", std::process::id()))
}

fn check_trace(path: &PathBuf) -> Result<usize, String> {
    let file = std::fs::File::open(path).map_err(|e| e.to_string())?;
    let h = History::read_trace(std::io::BufReader::new(file)).map_err(|e| e.to_string())?;
    let reactor = is_serializable(&h).map_err(|e| e.to_string())?;
    let classic = project(&h).and_then(|p| is_serializable(&p)).map_err(|e| e.to_string())?;
    if !reactor || !classic {
        return Err(format!("reactor model {reactor}, classic projection {classic}"));
    }
    Ok(h.committed().len())
}

fn engine_serializability() -> Outcome {
    let mut suite: Vec<(String, WorkloadSpec, usize)> = Vec::new();
    for &f in Benchmark::Smallbank.formulations() {
        let spec = WorkloadSpec {
            formulation: f,
            txn_size: 3,
            ..WorkloadSpec::new(Benchmark::Smallbank)
        };
        suite.push((format!("smallbank-{f}"), spec, 7));
    }
    for &f in Benchmark::Tpcc.formulations() {
        let spec = WorkloadSpec {
            formulation: f,
            remote_pct: Some(10.0),
            ..WorkloadSpec::new(Benchmark::Tpcc)
        };
        suite.push((format!("tpcc-{f}"), spec, 4));
    }
    suite.push(("ycsb".into(), WorkloadSpec { zipfian: 0.9, ..WorkloadSpec::new(Benchmark::Ycsb) }, 4));
    for &f in Benchmark::Exchange.formulations() {
        let spec = WorkloadSpec {
            formulation: f,
            providers: 4,
            orders_per_provider: 2000,
            scan_window: 100,
            ..WorkloadSpec::new(Benchmark::Exchange)
        };
        suite.push((format!("exchange-{f}"), spec, 5));
    }
    let mut parts = Vec::new();
    let mut bad = Vec::new();
    for (name, spec, executors) in suite {
        let spec = WorkloadSpec { n_workers: 4, ..spec };
        let path = trace_path(&name);
        let mut cfg = config(spec, Strategy::S3, executors, 5)?;
        cfg.warmup_ms = 0;
        cfg.trace = Some(TraceTarget::File(path.clone()));
        let r = runs(cfg)?;
        if let Err(e) = &r.check {
            bad.push(format!("{name}: {e}"));
        }
        match check_trace(&path) {
            Ok(n) if n > 0 => parts.push(format!("{name} {n}")),
            Ok(_) => bad.push(format!("{name}: nothing committed")),
            Err(e) => bad.push(format!("{name}: {e}")),
        }
        let _ = std::fs::remove_file(&path);
    }
    let detail = format!("committed per trace: {}", parts.join(", "));
    if bad.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{}; {detail}", bad.join(", ")))
    }
}

fn node_type() -> ReactorType {
    ReactorType::new("node")
        .table(TableSchema::new("v", 1, &["n"]))
        .procedure("bump", |tx, _| {
            let n = tx.read_row::<i64>("v", &[0])?.unwrap_or(0) + 1;
            tx.write_row("v", &[0], &n)?;
            Ok(n.into())
        })
        // Stays active on the reactor until its transaction is aborted.
        .procedure("hold", |tx, _| {
            let deadline = Instant::now() + Duration::from_secs(5);
            while !tx.is_aborted() && Instant::now() < deadline {
                std::thread::sleep(Duration::from_millis(1));
            }
            Ok(Datum::Unit)
        })
        .procedure("via", |tx, a| {
            let dest = tx.lookup(a.str(0)?)?;
            tx.call(dest, a.str(1)?, vec![])?.get(tx)
        })
        .procedure("diamond", |tx, a| {
            let (b, c) = (tx.lookup(a.str(0)?)?, tx.lookup(a.str(1)?)?);
            let fb = tx.call(b, "via", vec![a.arg(2)?.clone(), "hold".into()])?;
            let fc = tx.call(c, "via", vec![a.arg(2)?.clone(), "hold".into()])?;
            fb.get(tx)?;
            fc.get(tx)
        })
        .procedure("sequential", |tx, a| {
            let (b, c) = (tx.lookup(a.str(0)?)?, tx.lookup(a.str(1)?)?);
            tx.call(b, "via", vec![a.arg(2)?.clone(), "bump".into()])?.get(tx)?;
            tx.call(c, "via", vec![a.arg(2)?.clone(), "bump".into()])?.get(tx)
        })
}

fn active_set_safety() -> Outcome {
    let names: Vec<String> = ["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect();
    let decls: Vec<(String, String)> = names.iter().map(|n| (n.clone(), "node".into())).collect();
    let plan = build_strategy(Strategy::S3, 4, &names);
    let db = Database::instantiate(&decls, vec![node_type()], &plan, DbOptions::default()).map_err(|e| e.to_string())?;
    let args = || vec![Datum::from("b"), "c".into(), "d".into()];
    let trials = 20;
    for i in 0..trials {
        match db.run("a", "diamond", args()) {
            Err(TxnError::DangerousStructure { reactor, .. }) if reactor == "d" => {}
            other => return Err(format!("diamond trial {i}: {other:?}")),
        }
    }
    match db.run("a", "sequential", args()) {
        Ok(Datum::Int(2)) => Ok(format!("{trials}/{trials} diamonds aborted at d, sequential variant committed")),
        other => Err(format!("sequential variant: {other:?}")),
    }
}

fn final_state(spec: &WorkloadSpec, strategy: Strategy, executors: usize) -> Result<LogicalState, String> {
    let mut cfg = config(spec.clone(), strategy, executors, 4)?;
    cfg.txns = Some(300);
    let r = run(&cfg).map_err(|e| e.to_string())?;
    r.report.check.clone()?;
    Ok(r.db.logical_state())
}

fn virtualization() -> Outcome {
    let mut parts = Vec::new();
    let mut bad = Vec::new();
    let specs = [
        WorkloadSpec {
            txn_size: 3,
            formulation: Formulation::Opt,
            ..WorkloadSpec::new(Benchmark::Smallbank)
        },
        WorkloadSpec {
            remote_pct: Some(20.0),
            ..WorkloadSpec::new(Benchmark::Tpcc)
        },
        WorkloadSpec {
            zipfian: 0.9,
            ..WorkloadSpec::new(Benchmark::Ycsb)
        },
    ];
    for spec in &specs {
        let executors = if spec.benchmark == Benchmark::Smallbank { 7 } else { 4 };
        let s1 = final_state(spec, Strategy::S1, executors)?;
        let same = [Strategy::S2, Strategy::S3]
            .iter()
            .map(|&s| final_state(spec, s, executors))
            .collect::<Result<Vec<_>, _>>()?
            .iter()
            .all(|s| *s == s1);
        if same {
            parts.push(format!("{} state identical under S1/S2/S3", spec.benchmark));
        } else {
            bad.push(format!("{} state differs between plans", spec.benchmark));
        }
    }
    let mut rates = Vec::new();
    for strategy in [Strategy::S1, Strategy::S2, Strategy::S3] {
        let spec = WorkloadSpec {
            n_workers: 8,
            formulation: Formulation::Async,
            ..WorkloadSpec::new(Benchmark::Tpcc)
        };
        let mut cfg = config(spec, strategy, 4, 20)?;
        cfg.warmup_ms = 100;
        let r = runs(cfg)?;
        rates.push(r.conflict_rate());
    }
    parts.push(format!(
        "TPC-C SF4 8 workers conflict abort rate S1 {:.2}%, S2 {:.2}%, S3-async {:.2}%",
        100.0 * rates[0],
        100.0 * rates[1],
        100.0 * rates[2]
    ));
    if !(rates[1] < rates[0] && rates[1] < rates[2]) {
        bad.push("S2 abort rate is not the lowest".into());
    }
    let detail = parts.join("; ");
    if bad.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{}; {detail}", bad.join(", ")))
    }
}

fn delay_throughput(strategy: Strategy, workers: usize) -> Result<f64, String> {
    let spec = WorkloadSpec {
        scale_factor: 8,
        n_workers: workers,
        mix: parse_mix("new_order=100").map_err(|e| e.to_string())?,
        formulation: Formulation::Async,
        remote_pct: Some(100.0),
        delay_us: Some(parse_range("300:400").map_err(|e| e.to_string())?),
        ..WorkloadSpec::new(Benchmark::Tpcc)
    };
    Ok(runs(config(spec, strategy, 8, 20)?)?.throughput())
}

fn asynchronicity_tradeoff() -> Outcome {
    let s3_1 = delay_throughput(Strategy::S3, 1)?;
    let s2_1 = delay_throughput(Strategy::S2, 1)?;
    let s3_8 = delay_throughput(Strategy::S3, 8)?;
    let s2_8 = delay_throughput(Strategy::S2, 8)?;
    let detail = format!(
        "1 worker: S3-async {s3_1:.0} txn/s vs S2 {s2_1:.0} ({:.2}x); 8 workers: S2 {s2_8:.0} vs S3-async {s3_8:.0}; {} cores",
        s3_1 / s2_1,
        std::thread::available_parallelism().map_or(1, |n| n.get())
    );
    if s3_1 >= 1.5 * s2_1 && s2_8 >= s3_8 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_tree(rng: &mut ChaCha8Rng, depth: usize, reactors: usize) -> ForkJoinNode {
    let mut node = ForkJoinNode::leaf(rng.gen_range(0..reactors), rng.gen_range(0..1_000)).with_ovp(rng.gen_range(0..1_000));
    if depth < 3 {
        let fanout = rng.gen_range(0..=5);
        for _ in 0..fanout {
            let child = random_tree(rng, depth + 1, reactors);
            node = match rng.gen_range(0..3) {
                0 => node.seq(child),
                1 => node.fork(child),
                _ => node.ovp(child),
            };
        }
    }
    node
}

fn random_params(rng: &mut ChaCha8Rng, reactors: usize) -> CostParams {
    let mut p = CostParams::uniform(rng.gen_range(0..500), rng.gen_range(0..500));
    let containers = rng.gen_range(1..=4);
    for r in 0..reactors {
        p = p.place(r, rng.gen_range(0..containers));
    }
    p
}

fn recursion_matches_simulator() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut max_depth = 0;
    for i in 0..1000 {
        let reactors = rng.gen_range(1..=8);
        let tree = random_tree(&mut rng, 1, reactors);
        let params = random_params(&mut rng, reactors);
        max_depth = max_depth.max(tree.depth());
        let (a, b) = (estimate_latency(&tree, &params), simulate_forkjoin(&tree, &params));
        if a != b {
            return Err(format!("tree {i}: recursion {a} ns, simulator {b} ns"));
        }
    }
    Ok(format!("1000 trees up to depth {max_depth} agree exactly"))
}

fn overhead_probe() -> Outcome {
    let mut overheads = Vec::new();
    for sf in 1..=8 {
        let spec = WorkloadSpec {
            scale_factor: sf,
            ..WorkloadSpec::new(Benchmark::Noop)
        };
        let r = runs(config(spec, Strategy::S3, sf, 20)?)?;
        overheads.push(r.mean_latency_us);
    }
    let (mean, sd) = mean_sd(&overheads);
    let cv = sd / mean;
    let detail = format!(
        "per-invocation overhead {} us, cv {:.1}%",
        overheads.iter().map(|o| format!("{o:.1}")).collect::<Vec<_>>().join("/"),
        100.0 * cv
    );
    if cv < 0.20 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn main() {
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let criteria: [Criterion; 10] = [
        (1, "formulation ordering", formulation_ordering, parallel_host()),
        (2, "cost-model fit", cost_model_fit, parallel_host()),
        (3, "new-order cost-model fit", new_order_cost_fit, parallel_host()),
        (4, "theorem-1 suite", theorem1, true),
        (5, "engine serializability", engine_serializability, true),
        (6, "active-set safety", active_set_safety, true),
        (7, "architecture virtualization", virtualization, parallel_host()),
        (8, "asynchronicity trade-off", asynchronicity_tradeoff, parallel_host()),
        (9, "cost recursion vs simulator", recursion_matches_simulator, true),
        (10, "overhead probe", overhead_probe, parallel_host()),
    ];
    let mut hard_failures = 0;
    for (n, name, f, binding) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&n)) {
            continue;
        }
        let started = Instant::now();
        let outcome = f();
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("PASS criterion {n:2} {name} [{secs:.1} s]: {d}"),
            Err(d) => {
                let note = if binding { "" } else { " (timing-bound on this host, not gating)" };
                println!("FAIL criterion {n:2} {name}{note} [{secs:.1} s]: {d}");
                if binding {
                    hard_failures += 1;
                }
            }
        }
    }
    if hard_failures > 0 {
        eprintln!("{hard_failures} acceptance criteria failed");
        std::process::exit(1);
    }
}

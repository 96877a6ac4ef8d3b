use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use reactordb_bench::fit::{new_order_fit, smallbank_fit, NewOrderFitConfig, SmallbankFitConfig};
use reactordb_bench::harness::{default_plan, run, RunConfig};
use reactordb_bench::spec::{
    parse_mix, parse_range, Benchmark, DestStrategy, Formulation, TpccPopulation, WorkloadSpec,
};
use reactordb_checker::{is_serializable, project, History};
use reactordb_core::{parse_plan, Strategy, TraceTarget, TxnProfile};
use reactordb_cost::{calibrate, decompose, estimate_latency, predict_breakdown, CostParams, ForkJoinNode};

type Error = Box<dyn std::error::Error>;

#[derive(Parser)]
#[command(name = "reactordb", version, about = "Benchmarks and tools for the reactordb engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a benchmark and write per-epoch results as CSV.
    Bench(Box<BenchArgs>),
    /// Check a trace file for conflict serializability.
    CheckTrace {
        file: PathBuf,
    },
    /// Latency cost model tools.
    #[command(subcommand)]
    Cost(CostCommand),
}

#[derive(Args)]
struct BenchArgs {
    /// Deployment plan (JSON). Without it a plan is built from --strategy.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    benchmark: Benchmark,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long)]
    scale_factor: Option<usize>,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 100)]
    epoch_ms: u64,
    #[arg(long, default_value_t = 200)]
    warmup_ms: u64,
    #[arg(long)]
    formulation: Option<Formulation>,
    #[arg(long, default_value_t = 1)]
    txn_size: usize,
    /// Transaction mix as name=percent pairs.
    #[arg(long)]
    mix: Option<String>,
    #[arg(long)]
    remote_pct: Option<f64>,
    #[arg(long, default_value_t = 15.0)]
    remote_customer_pct: f64,
    #[arg(long, default_value = "all-remote")]
    dest_strategy: DestStrategy,
    #[arg(long)]
    span: Option<usize>,
    #[arg(long, default_value_t = 0.0)]
    zipfian: f64,
    /// Spin per stock update, lo:hi microseconds.
    #[arg(long)]
    delay_us: Option<String>,
    #[arg(long, default_value_t = 0)]
    simrisk_load: u64,
    #[arg(long, default_value_t = 15)]
    providers: usize,
    #[arg(long, default_value_t = 30_000)]
    orders_per_provider: u32,
    #[arg(long, default_value_t = 800)]
    scan_window: usize,
    #[arg(long, default_value_t = 0)]
    risk_cache_period: u64,
    #[arg(long, value_enum, default_value = "reduced")]
    tpcc_population: Population,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// s1, s2 or s3; used when no --config is given.
    #[arg(long, default_value = "s3")]
    strategy: Strategy,
    #[arg(long)]
    executors: Option<usize>,
    #[arg(long)]
    mpl: Option<usize>,
    /// Run this many transactions per worker instead of timed epochs.
    #[arg(long)]
    txns: Option<u64>,
    /// Collect latency breakdowns and add bucket columns to the CSV.
    #[arg(long)]
    breakdown: bool,
    /// Write transaction profiles, one JSON object per line.
    #[arg(long)]
    profiles: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Record a trace and check it after the run.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Population {
    Standard,
    Reduced,
}

#[derive(Subcommand)]
enum CostCommand {
    /// Estimate the latency of a fork-join tree (JSON).
    Estimate {
        tree: PathBuf,
        /// Cost parameters (JSON); zero communication costs if omitted.
        #[arg(long)]
        params: Option<PathBuf>,
    },
    /// Derive cost parameters from profiles written by `bench --profiles`.
    Calibrate {
        profiles: PathBuf,
    },
    /// Split profiled latencies into cost buckets, as CSV.
    Decompose {
        profiles: PathBuf,
    },
    /// Calibrate, run and compare predictions with measurements.
    Fit {
        #[arg(value_enum)]
        target: FitTarget,
        #[arg(long, default_value_t = 20)]
        epochs: usize,
        #[arg(long, default_value_t = 100)]
        epoch_ms: u64,
        /// New-order remote stock probability in percent.
        #[arg(long, default_value_t = 100.0)]
        remote_pct: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FitTarget {
    Smallbank,
    NewOrder,
}

fn spec_from(a: &BenchArgs) -> Result<WorkloadSpec, Error> {
    let mut s = WorkloadSpec::new(a.benchmark);
    if let Some(sf) = a.scale_factor {
        s.scale_factor = sf;
    }
    s.n_workers = a.workers;
    if let Some(m) = &a.mix {
        s.mix = parse_mix(m)?;
    }
    if let Some(f) = a.formulation {
        s.formulation = f;
    }
    s.txn_size = a.txn_size;
    s.remote_pct = a.remote_pct;
    s.remote_customer_pct = a.remote_customer_pct;
    s.dest_strategy = a.dest_strategy;
    s.span = a.span;
    s.zipfian = a.zipfian;
    s.delay_us = a.delay_us.as_deref().map(parse_range).transpose()?;
    s.simrisk_load = a.simrisk_load;
    s.providers = a.providers;
    s.orders_per_provider = a.orders_per_provider;
    s.scan_window = a.scan_window;
    s.risk_cache_period = a.risk_cache_period;
    s.tpcc = match a.tpcc_population {
        Population::Standard => TpccPopulation::STANDARD,
        Population::Reduced => TpccPopulation::REDUCED,
    };
    s.seed = a.seed;
    s.validate()?;
    Ok(s)
}

fn default_executors(s: &WorkloadSpec) -> usize {
    match s.benchmark {
        Benchmark::Smallbank => 7,
        Benchmark::Exchange => s.providers + 1,
        _ => s.scale_factor,
    }
}

fn check_trace(path: &Path) -> Result<bool, Error> {
    let h = History::read_trace(BufReader::new(File::open(path)?))?;
    let reactor = is_serializable(&h)?;
    let classic = is_serializable(&project(&h)?)?;
    println!(
        "{}: {} committed transactions, reactor model {}, classic projection {}",
        path.display(),
        h.committed().len(),
        verdict(reactor),
        verdict(classic)
    );
    Ok(reactor && classic)
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "serializable"
    } else {
        "NOT serializable"
    }
}

fn bench(a: &BenchArgs) -> Result<bool, Error> {
    let spec = spec_from(a)?;
    let mut plan = match &a.config {
        Some(p) => parse_plan(&std::fs::read_to_string(p)?)?,
        None => default_plan(&spec, a.strategy, a.executors.unwrap_or_else(|| default_executors(&spec)))?,
    };
    if let Some(m) = a.mpl {
        plan = plan.with_mpl(m);
    }
    let mut cfg = RunConfig::new(spec, plan);
    cfg.epochs = a.epochs;
    cfg.epoch_ms = a.epoch_ms;
    cfg.warmup_ms = a.warmup_ms;
    cfg.txns = a.txns;
    cfg.profile = a.breakdown || a.profiles.is_some();
    cfg.keep_profiles = a.profiles.is_some();
    cfg.trace = a.trace.clone().map(TraceTarget::File);
    let r = run(&cfg)?.report;
    match &a.out {
        Some(p) => r.write_csv(p)?,
        None => {
            let mut w = csv::Writer::from_writer(std::io::stdout());
            r.write_rows(&mut w)?;
            w.flush()?;
        }
    }
    if let Some(p) = &a.profiles {
        let mut w = BufWriter::new(File::create(p)?);
        for prof in &r.profiles {
            serde_json::to_writer(&mut w, prof)?;
            writeln!(w)?;
        }
    }
    eprintln!(
        "{} committed, {} aborted ({} conflicts), {:.0} txn/s, mean latency {:.1} us (epoch sd {:.1})",
        r.committed,
        r.aborted,
        r.conflict_aborts,
        r.throughput(),
        r.mean_latency_us,
        r.epoch_stddev_us
    );
    let mut ok = true;
    if let Err(e) = &r.check {
        eprintln!("consistency check failed: {e}");
        ok = false;
    }
    if let Some(t) = &a.trace {
        ok &= check_trace(t)?;
    }
    Ok(ok)
}

fn read_profiles(path: &Path) -> Result<Vec<TxnProfile>, Error> {
    let mut out = Vec::new();
    for line in BufReader::new(File::open(path)?).lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

fn cost(c: &CostCommand) -> Result<bool, Error> {
    match c {
        CostCommand::Estimate { tree, params } => {
            let tree: ForkJoinNode = serde_json::from_reader(File::open(tree)?)?;
            let params: CostParams = match params {
                Some(p) => serde_json::from_reader(File::open(p)?)?,
                None => CostParams::default(),
            };
            let b = predict_breakdown(&tree, &params);
            println!("latency_ns {}", estimate_latency(&tree, &params));
            println!(
                "sync_execution_ns {}\nc_s_ns {}\nc_r_ns {}\nasync_execution_ns {}",
                b.sync_execution, b.c_s, b.c_r, b.async_execution
            );
        }
        CostCommand::Calibrate { profiles } => {
            let cal = calibrate(&read_profiles(profiles)?)?;
            println!("{}", serde_json::to_string_pretty(&cal)?);
        }
        CostCommand::Decompose { profiles } => {
            let mut w = csv::Writer::from_writer(std::io::stdout());
            w.write_record([
                "txn",
                "latency_ns",
                "sync_execution_ns",
                "c_s_ns",
                "c_r_ns",
                "async_execution_ns",
                "commit_inputgen_ns",
            ])?;
            for p in read_profiles(profiles)?.iter().filter(|p| p.committed) {
                let b = decompose(p)?;
                w.write_record(
                    [
                        p.txn,
                        p.latency_ns(),
                        b.sync_execution,
                        b.c_s_total,
                        b.c_r_total,
                        b.async_execution,
                        b.commit_plus_inputgen,
                    ]
                    .map(|v| v.to_string()),
                )?;
            }
            w.flush()?;
        }
        CostCommand::Fit {
            target,
            epochs,
            epoch_ms,
            remote_pct,
            seed,
        } => match target {
            FitTarget::Smallbank => {
                let cfg = SmallbankFitConfig {
                    epochs: *epochs,
                    epoch_ms: *epoch_ms,
                    seed: *seed,
                    ..SmallbankFitConfig::default()
                };
                let fit = smallbank_fit(&cfg)?;
                let mut w = csv::Writer::from_writer(std::io::stdout());
                for p in &fit.points {
                    w.serialize(p)?;
                }
                w.flush()?;
            }
            FitTarget::NewOrder => {
                let cfg = NewOrderFitConfig {
                    remote_pct: *remote_pct,
                    epochs: *epochs,
                    epoch_ms: *epoch_ms,
                    seed: *seed,
                    ..NewOrderFitConfig::default()
                };
                let f = new_order_fit(&cfg)?;
                println!(
                    "observed {:.1} us, pred {:.1} us + commit/input {:.1} us = {:.1} us ({:.1}% off, {} txns)",
                    f.observed_us,
                    f.pred_us,
                    f.commit_inputgen_us,
                    f.predicted_us(),
                    100.0 * f.relative_error(),
                    f.samples
                );
            }
        },
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Bench(a) => bench(a),
        Command::CheckTrace { file } => check_trace(file),
        Command::Cost(c) => cost(c),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

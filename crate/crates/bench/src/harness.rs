//! Closed-loop measurement. Each worker thread keeps one transaction
//! outstanding: it generates inputs, submits, waits for the outcome and
//! starts over. Worker threads are client threads, separate from the
//! database's executors. Latency is taken from the start of input
//! generation to the moment the worker sees the outcome. Aborted
//! transactions are counted and not retried.

use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use reactordb_core::profile::now_ns;
use reactordb_core::{
    build_strategy, ConfigError, Database, DbOptions, DeploymentPlan, Strategy, TraceTarget, TxnError, TxnProfile,
};
use reactordb_cost::{decompose, LatencyBreakdown};
use serde::Serialize;

use crate::spec::{Benchmark, Formulation, SpecError, WorkloadSpec};
use crate::workloads::{self, Workload};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error("deployment: {0}")]
    Config(#[from] ConfigError),
    #[error("loading data: {0}")]
    Load(TxnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("cost model: {0}")]
    Fit(String),
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub spec: WorkloadSpec,
    pub plan: DeploymentPlan,
    pub epochs: usize,
    pub epoch_ms: u64,
    /// Time discarded before the first epoch.
    pub warmup_ms: u64,
    /// Run exactly this many transactions per worker instead of running for
    /// a fixed time; they are spread evenly over the epochs.
    pub txns: Option<u64>,
    pub profile: bool,
    /// Keep the profile of every measured transaction in the report.
    pub keep_profiles: bool,
    pub trace: Option<TraceTarget>,
}

impl RunConfig {
    pub fn new(spec: WorkloadSpec, plan: DeploymentPlan) -> Self {
        RunConfig {
            spec,
            plan,
            epochs: 50,
            epoch_ms: 100,
            warmup_ms: 200,
            txns: None,
            profile: false,
            keep_profiles: false,
            trace: None,
        }
    }
}

/// Deployment for `spec` under `strategy` with `executors` executors. The
/// exchange's sequential formulation always runs on a single executor.
pub fn default_plan(spec: &WorkloadSpec, strategy: Strategy, executors: usize) -> Result<DeploymentPlan, SpecError> {
    let names: Vec<String> = workloads::build(spec, executors)?.reactors().into_iter().map(|r| r.0).collect();
    if spec.benchmark == Benchmark::Exchange && spec.formulation == Formulation::Sequential {
        return Ok(build_strategy(Strategy::S1, 1, &names));
    }
    Ok(build_strategy(strategy, executors, &names))
}

/// Mean bucket values in microseconds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Buckets {
    pub sync_execution_us: f64,
    pub c_s_us: f64,
    pub c_r_us: f64,
    pub async_execution_us: f64,
    pub commit_inputgen_us: f64,
}

impl Buckets {
    pub fn total_us(&self) -> f64 {
        self.sync_execution_us + self.c_s_us + self.c_r_us + self.async_execution_us + self.commit_inputgen_us
    }

    fn mean(sum: &LatencyBreakdown, n: u64) -> Buckets {
        let us = |v: u64| if n == 0 { 0.0 } else { v as f64 / n as f64 / 1000.0 };
        Buckets {
            sync_execution_us: us(sum.sync_execution),
            c_s_us: us(sum.c_s_total),
            c_r_us: us(sum.c_r_total),
            async_execution_us: us(sum.async_execution),
            commit_inputgen_us: us(sum.commit_plus_inputgen),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub committed: u64,
    pub aborted: u64,
    /// Aborts caused by concurrency control rather than application logic.
    pub conflict_aborts: u64,
    pub mean_latency_us: f64,
    pub stddev_us: f64,
    pub breakdown: Option<Buckets>,
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub epochs: Vec<EpochStats>,
    pub committed: u64,
    pub aborted: u64,
    pub conflict_aborts: u64,
    pub measured: Duration,
    /// Mean latency over all committed transactions.
    pub mean_latency_us: f64,
    /// Standard deviation of the per-epoch means.
    pub epoch_stddev_us: f64,
    pub breakdown: Option<Buckets>,
    pub profiles: Vec<TxnProfile>,
    /// Result of the workload's consistency checks.
    pub check: Result<(), String>,
}

impl RunReport {
    pub fn throughput(&self) -> f64 {
        self.committed as f64 / self.measured.as_secs_f64().max(1e-9)
    }

    pub fn abort_rate(&self) -> f64 {
        let n = self.committed + self.aborted;
        if n == 0 {
            0.0
        } else {
            self.aborted as f64 / n as f64
        }
    }

    pub fn conflict_rate(&self) -> f64 {
        let n = self.committed + self.aborted;
        if n == 0 {
            0.0
        } else {
            self.conflict_aborts as f64 / n as f64
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), HarnessError> {
        let mut w = csv::Writer::from_path(path)?;
        self.write_rows(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn write_rows<W: std::io::Write>(&self, w: &mut csv::Writer<W>) -> Result<(), HarnessError> {
        let with_buckets = self.epochs.iter().any(|e| e.breakdown.is_some());
        let mut header = vec!["epoch", "committed", "aborted", "mean_latency_us", "stddev_us"];
        if with_buckets {
            header.extend([
                "sync_execution_us",
                "c_s_us",
                "c_r_us",
                "async_execution_us",
                "commit_inputgen_us",
            ]);
        }
        w.write_record(&header)?;
        for e in &self.epochs {
            let mut row = vec![
                e.epoch.to_string(),
                e.committed.to_string(),
                e.aborted.to_string(),
                format!("{:.3}", e.mean_latency_us),
                format!("{:.3}", e.stddev_us),
            ];
            if with_buckets {
                let b = e.breakdown.unwrap_or_default();
                for v in [b.sync_execution_us, b.c_s_us, b.c_r_us, b.async_execution_us, b.commit_inputgen_us] {
                    row.push(format!("{v:.3}"));
                }
            }
            w.write_record(&row)?;
        }
        Ok(())
    }
}

/// A finished run, with the database kept for inspection.
pub struct Run {
    pub report: RunReport,
    pub db: Database,
    pub workload: Arc<dyn Workload>,
}

struct Sample {
    epoch: usize,
    latency_ns: u64,
    outcome: Outcome,
    breakdown: Option<LatencyBreakdown>,
    profile: Option<TxnProfile>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Outcome {
    Committed,
    Aborted,
    Conflict,
}

pub fn setup(cfg: &RunConfig) -> Result<(Database, Arc<dyn Workload>), HarnessError> {
    let workload = workloads::build(&cfg.spec, cfg.plan.executor_count())?;
    let opts = DbOptions {
        trace: cfg.trace.clone(),
        profile: cfg.profile,
        cc: cfg.spec.benchmark != Benchmark::Noop,
        ..DbOptions::default()
    };
    let db = Database::instantiate(&workload.reactors(), workload.types(), &cfg.plan, opts)?;
    workload.load(&db).map_err(HarnessError::Load)?;
    Ok((db, workload))
}

pub fn run(cfg: &RunConfig) -> Result<Run, HarnessError> {
    let (db, workload) = setup(cfg)?;
    let report = measure(cfg, &db, workload.as_ref())?;
    Ok(Run { report, db, workload })
}

/// Runs the closed-loop workers against an already loaded database.
pub fn measure(cfg: &RunConfig, db: &Database, workload: &dyn Workload) -> Result<RunReport, HarnessError> {
    let epochs = cfg.epochs.max(1);
    let epoch_len = Duration::from_millis(cfg.epoch_ms.max(1));
    let workers = cfg.spec.n_workers.max(1);
    let start = Instant::now();
    let measure_start = start + Duration::from_millis(if cfg.txns.is_some() { 0 } else { cfg.warmup_ms });
    let end = measure_start + epoch_len * epochs as u32;

    let per_worker: Vec<Vec<Sample>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let mut gen = workload.generator(db, w);
                s.spawn(move || {
                    let mut out = Vec::new();
                    let mut i = 0u64;
                    loop {
                        let epoch = match cfg.txns {
                            Some(n) if i >= n => break,
                            Some(n) => (i * epochs as u64 / n) as usize,
                            None if Instant::now() >= end => break,
                            None => 0,
                        };
                        i += 1;
                        let gen_start = now_ns();
                        let req = gen.next();
                        let outcome = db.submit_with(req.reactor, req.procedure, req.args, cfg.profile).wait();
                        let done = now_ns();
                        workload.observe(req.kind, &outcome.result);
                        let epoch = match cfg.txns {
                            Some(_) => epoch,
                            None => {
                                let t = Instant::now();
                                if t < measure_start || t >= end {
                                    continue;
                                }
                                ((t - measure_start).as_nanos() / epoch_len.as_nanos()) as usize
                            }
                        };
                        let kind = match &outcome.result {
                            Ok(_) => Outcome::Committed,
                            Err(e) if e.is_conflict() => Outcome::Conflict,
                            Err(_) => Outcome::Aborted,
                        };
                        let mut profile = outcome.profile;
                        if let Some(p) = &mut profile {
                            p.input_gen_ns = p.submit.saturating_sub(gen_start);
                            p.client_done = done;
                        }
                        let breakdown = match (&profile, kind) {
                            (Some(p), Outcome::Committed) => decompose(p).ok(),
                            _ => None,
                        };
                        out.push(Sample {
                            epoch,
                            latency_ns: done - gen_start,
                            outcome: kind,
                            breakdown,
                            profile: if cfg.keep_profiles { profile } else { None },
                        });
                    }
                    out
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let measured = match cfg.txns {
        Some(_) => start.elapsed(),
        None => end - measure_start,
    };
    if let Some(TraceTarget::File(_)) = &cfg.trace {
        db.flush_trace()?;
    }
    Ok(summarize(per_worker.into_iter().flatten().collect(), epochs, measured, workload.check(db)))
}

fn summarize(samples: Vec<Sample>, epochs: usize, measured: Duration, check: Result<(), String>) -> RunReport {
    let mut per_epoch: Vec<Vec<&Sample>> = vec![Vec::new(); epochs];
    for s in &samples {
        if s.epoch < epochs {
            per_epoch[s.epoch].push(s);
        }
    }
    let stats: Vec<EpochStats> = per_epoch
        .iter()
        .enumerate()
        .map(|(epoch, ss)| {
            let lat: Vec<f64> = ss
                .iter()
                .filter(|s| s.outcome == Outcome::Committed)
                .map(|s| s.latency_ns as f64 / 1000.0)
                .collect();
            let (mean, sd) = mean_sd(&lat);
            let mut sum = LatencyBreakdown::default();
            let mut n = 0;
            for b in ss.iter().filter_map(|s| s.breakdown.as_ref()) {
                sum.add(b);
                n += 1;
            }
            EpochStats {
                epoch,
                committed: lat.len() as u64,
                aborted: ss.iter().filter(|s| s.outcome != Outcome::Committed).count() as u64,
                conflict_aborts: ss.iter().filter(|s| s.outcome == Outcome::Conflict).count() as u64,
                mean_latency_us: mean,
                stddev_us: sd,
                breakdown: (n > 0).then(|| Buckets::mean(&sum, n)),
            }
        })
        .collect();
    let committed: Vec<f64> = samples
        .iter()
        .filter(|s| s.outcome == Outcome::Committed && s.epoch < epochs)
        .map(|s| s.latency_ns as f64 / 1000.0)
        .collect();
    let epoch_means: Vec<f64> = stats.iter().filter(|e| e.committed > 0).map(|e| e.mean_latency_us).collect();
    let mut sum = LatencyBreakdown::default();
    let mut n = 0;
    for b in samples.iter().filter(|s| s.epoch < epochs).filter_map(|s| s.breakdown.as_ref()) {
        sum.add(b);
        n += 1;
    }
    RunReport {
        committed: stats.iter().map(|e| e.committed).sum(),
        aborted: stats.iter().map(|e| e.aborted).sum(),
        conflict_aborts: stats.iter().map(|e| e.conflict_aborts).sum(),
        epochs: stats,
        measured,
        mean_latency_us: mean_sd(&committed).0,
        epoch_stddev_us: mean_sd(&epoch_means).1,
        breakdown: (n > 0).then(|| Buckets::mean(&sum, n)),
        profiles: samples.into_iter().filter(|s| s.epoch < epochs).filter_map(|s| s.profile).collect(),
        check,
    }
}

pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_deviation() {
        assert_eq!(mean_sd(&[]), (0.0, 0.0));
        let (m, s) = mean_sd(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]);
        assert_eq!((m, s), (5.0, 2.0));
    }
}

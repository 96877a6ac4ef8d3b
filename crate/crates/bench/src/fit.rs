//! Fitting the latency cost model to measured runs: Smallbank
//! multi-transfer formulations and the TPC-C new-order transaction.

use reactordb_core::{CallMode, Strategy, SubTxnProfile, TxnProfile};
use reactordb_cost::{calibrate, estimate_latency, Calibration, CostParams, ForkJoinNode, Nanos};
use serde::Serialize;

use crate::harness::{default_plan, run, HarnessError, RunConfig, RunReport};
use crate::spec::{parse_mix, Benchmark, DestStrategy, Formulation, WorkloadSpec};
use crate::workloads::smallbank::multi_transfer_procedure;

#[derive(Clone, Debug, Serialize)]
pub struct FitPoint {
    pub formulation: Formulation,
    pub size: usize,
    /// Model estimate plus the measured commit and input-generation time.
    pub predicted_us: f64,
    pub measured_us: f64,
    pub model_us: f64,
    pub commit_inputgen_us: f64,
    /// Mean of the measured buckets added up.
    pub bucket_sum_us: f64,
    pub measured_stddev_us: f64,
}

impl FitPoint {
    pub fn relative_error(&self) -> f64 {
        (self.predicted_us - self.measured_us).abs() / self.measured_us
    }

    pub fn bucket_error(&self) -> f64 {
        (self.bucket_sum_us - self.measured_us).abs() / self.measured_us
    }
}

#[derive(Clone, Debug)]
pub struct SmallbankFitConfig {
    pub executors: usize,
    pub sizes: Vec<usize>,
    pub formulations: Vec<Formulation>,
    pub epochs: usize,
    pub epoch_ms: u64,
    pub seed: u64,
}

impl Default for SmallbankFitConfig {
    fn default() -> Self {
        SmallbankFitConfig {
            executors: 7,
            sizes: (2..=7).collect(),
            formulations: vec![Formulation::FullySync, Formulation::Opt],
            epochs: 20,
            epoch_ms: 100,
            seed: 42,
        }
    }
}

fn us(ns: Nanos) -> f64 {
    ns as f64 / 1000.0
}

fn smallbank_run(cfg: &SmallbankFitConfig, formulation: Formulation, size: usize) -> Result<RunReport, HarnessError> {
    let spec = WorkloadSpec {
        formulation,
        txn_size: size,
        dest_strategy: DestStrategy::AllRemote,
        seed: cfg.seed,
        ..WorkloadSpec::new(Benchmark::Smallbank)
    };
    let plan = default_plan(&spec, Strategy::S3, cfg.executors)?;
    let mut rc = RunConfig::new(spec, plan);
    rc.epochs = cfg.epochs;
    rc.epoch_ms = cfg.epoch_ms;
    rc.profile = true;
    rc.keep_profiles = true;
    Ok(run(&rc)?.report)
}

/// Cost-model tree of a multi-transfer of `size` all-remote destinations
/// from a source on container 0, with the parameters placed accordingly.
pub fn smallbank_tree(cal: &Calibration, formulation: Formulation, size: usize, executors: usize) -> (ForkJoinNode, CostParams) {
    let ts = cal.processing_of("transact_saving");
    let root_proc = match cal.processing.get(multi_transfer_procedure(formulation)) {
        Some(&p) => p,
        None => cal.processing_of(multi_transfer_procedure(Formulation::FullySync)),
    };
    let mut params = cal.params.clone().place(0, 0);
    let remote = executors.max(2) - 1;
    for i in 0..size {
        params = params.place(1 + i, 1 + i % remote);
    }
    let credit = |i: usize| ForkJoinNode::leaf(1 + i, ts);
    let debit = || ForkJoinNode::leaf(0, ts);
    let mut root = ForkJoinNode::leaf(0, root_proc);
    match formulation {
        Formulation::FullySync | Formulation::PartiallyAsync => {
            let transfer = cal.processing_of("transfer");
            for i in 0..size {
                let t = ForkJoinNode::leaf(0, transfer);
                let t = if formulation == Formulation::FullySync {
                    t.seq(credit(i)).seq(debit())
                } else {
                    t.fork(credit(i)).ovp(debit())
                };
                root = root.seq(t);
            }
        }
        Formulation::FullyAsync => {
            for i in 0..size {
                root = root.fork(credit(i)).ovp(debit());
            }
        }
        _ => {
            for i in 0..size {
                root = root.fork(credit(i));
            }
            root = root.ovp(debit());
        }
    }
    (root, params)
}

#[derive(Clone, Debug)]
pub struct SmallbankFit {
    pub calibration: Calibration,
    pub points: Vec<FitPoint>,
}

/// Calibrates on fully-sync transfers of size 1 and compares predictions
/// with measurements for every formulation and size.
pub fn smallbank_fit(cfg: &SmallbankFitConfig) -> Result<SmallbankFit, HarnessError> {
    let cal_run = smallbank_run(cfg, Formulation::FullySync, 1)?;
    let calibration = calibrate(&cal_run.profiles).map_err(|e| HarnessError::Fit(e.to_string()))?;
    let mut points = Vec::new();
    for &f in &cfg.formulations {
        for &size in &cfg.sizes {
            let r = smallbank_run(cfg, f, size)?;
            let (tree, params) = smallbank_tree(&calibration, f, size, cfg.executors);
            let model_us = us(estimate_latency(&tree, &params));
            let b = r.breakdown.unwrap_or_default();
            points.push(FitPoint {
                formulation: f,
                size,
                predicted_us: model_us + b.commit_inputgen_us,
                measured_us: r.mean_latency_us,
                model_us,
                commit_inputgen_us: b.commit_inputgen_us,
                bucket_sum_us: b.total_us(),
                measured_stddev_us: r.epoch_stddev_us,
            });
        }
    }
    Ok(SmallbankFit { calibration, points })
}

/// Shape of one new-order as seen in its profile.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct NewOrderShape {
    pub lines: usize,
    pub local_stock: usize,
    /// (container, items, awaited immediately) per remote stock update.
    pub remote: Vec<(usize, usize, bool)>,
}

fn count_sections(p: &SubTxnProfile, name: &str) -> usize {
    p.sections.iter().filter(|s| s.name == name).count()
}

pub fn new_order_shape(p: &TxnProfile) -> NewOrderShape {
    let root = &p.root;
    NewOrderShape {
        lines: count_sections(root, "line"),
        local_stock: count_sections(root, "stock"),
        remote: root
            .calls
            .iter()
            .filter(|c| c.mode == CallMode::Remote)
            .filter_map(|c| c.child.as_deref().map(|ch| (ch.container, count_sections(ch, "remote_stock"), c.awaited_immediately)))
            .collect(),
    }
}

/// Per-item and per-call costs derived from a calibration on new-orders
/// with one local and one remote item.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct NewOrderCosts {
    pub head: Nanos,
    pub item: Nanos,
    pub line: Nanos,
    pub local_stock: Nanos,
    pub remote_stock: Nanos,
    pub stock_update_fixed: Nanos,
}

impl NewOrderCosts {
    pub fn from_calibration(cal: &Calibration) -> Self {
        let s = |n: &str| cal.sections.get(n).copied().unwrap_or(0);
        let (head, line, local_stock, remote_stock) = (s("head"), s("line"), s("stock"), s("remote_stock"));
        let rest = cal
            .processing_of("new_order")
            .saturating_sub(head + 2 * line + local_stock);
        NewOrderCosts {
            head,
            item: rest / 2,
            line,
            local_stock,
            remote_stock,
            stock_update_fixed: cal.processing_of("stock_update").saturating_sub(remote_stock),
        }
    }

    pub fn tree(&self, shape: &NewOrderShape, home: usize, params: &CostParams) -> (ForkJoinNode, CostParams) {
        let mut params = params.clone().place(0, home);
        let mut root = ForkJoinNode::leaf(0, self.head + shape.lines as Nanos * (self.item + self.line))
            .with_ovp(shape.local_stock as Nanos * self.local_stock);
        for (j, &(container, items, immediate)) in shape.remote.iter().enumerate() {
            params = params.place(j + 1, container);
            let child = ForkJoinNode::leaf(j + 1, self.stock_update_fixed + items as Nanos * self.remote_stock);
            root = if immediate { root.seq(child) } else { root.fork(child) };
        }
        (root, params)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct NewOrderFit {
    pub remote_pct: f64,
    pub costs: NewOrderCosts,
    /// Mean model estimate over the measured transactions.
    pub pred_us: f64,
    pub commit_inputgen_us: f64,
    pub observed_us: f64,
    pub samples: usize,
}

impl NewOrderFit {
    pub fn predicted_us(&self) -> f64 {
        self.pred_us + self.commit_inputgen_us
    }

    pub fn relative_error(&self) -> f64 {
        (self.predicted_us() - self.observed_us).abs() / self.observed_us
    }
}

#[derive(Clone, Debug)]
pub struct NewOrderFitConfig {
    pub scale_factor: usize,
    pub remote_pct: f64,
    pub formulation: Formulation,
    pub epochs: usize,
    pub epoch_ms: u64,
    pub seed: u64,
}

impl Default for NewOrderFitConfig {
    fn default() -> Self {
        NewOrderFitConfig {
            scale_factor: 4,
            remote_pct: 100.0,
            formulation: Formulation::Async,
            epochs: 20,
            epoch_ms: 100,
            seed: 42,
        }
    }
}

fn new_order_run(cfg: &NewOrderFitConfig, shape: Option<(usize, usize)>) -> Result<RunReport, HarnessError> {
    let spec = WorkloadSpec {
        scale_factor: cfg.scale_factor,
        mix: parse_mix("new_order=100")?,
        formulation: cfg.formulation,
        remote_pct: Some(cfg.remote_pct),
        new_order_shape: shape,
        seed: cfg.seed,
        ..WorkloadSpec::new(Benchmark::Tpcc)
    };
    let plan = default_plan(&spec, Strategy::S3, cfg.scale_factor)?;
    let mut rc = RunConfig::new(spec, plan);
    rc.epochs = cfg.epochs;
    rc.epoch_ms = cfg.epoch_ms;
    rc.profile = true;
    rc.keep_profiles = true;
    Ok(run(&rc)?.report)
}

/// Calibrates on new-orders with one local and one remote item, then
/// predicts every measured new-order from its own shape.
pub fn new_order_fit(cfg: &NewOrderFitConfig) -> Result<NewOrderFit, HarnessError> {
    let cal_run = new_order_run(cfg, Some((1, 1)))?;
    let cal = calibrate(&cal_run.profiles).map_err(|e| HarnessError::Fit(e.to_string()))?;
    let costs = NewOrderCosts::from_calibration(&cal);
    let r = new_order_run(cfg, None)?;
    let committed: Vec<&TxnProfile> = r.profiles.iter().filter(|p| p.committed).collect();
    if committed.is_empty() {
        return Err(HarnessError::Fit("no committed new-order transactions".into()));
    }
    let total: u128 = committed
        .iter()
        .map(|p| {
            let (tree, params) = costs.tree(&new_order_shape(p), p.root.container, &cal.params);
            estimate_latency(&tree, &params) as u128
        })
        .sum();
    Ok(NewOrderFit {
        remote_pct: cfg.remote_pct,
        costs,
        pred_us: total as f64 / committed.len() as f64 / 1000.0,
        commit_inputgen_us: r.breakdown.unwrap_or_default().commit_inputgen_us,
        observed_us: r.mean_latency_us,
        samples: committed.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn cal() -> Calibration {
        Calibration {
            params: CostParams::uniform(10, 20),
            processing: BTreeMap::from([
                ("multi_transfer_sync".to_string(), 5),
                ("transfer".to_string(), 3),
                ("transact_saving".to_string(), 7),
            ]),
            ..Default::default()
        }
    }

    #[test]
    fn fully_sync_tree_pays_communication_per_credit() {
        let (t, p) = smallbank_tree(&cal(), Formulation::FullySync, 2, 7);
        // Root, then per transfer: its processing, a remote credit with
        // both directions of communication and a local debit.
        assert_eq!(estimate_latency(&t, &p), 5 + 2 * (3 + 7 + 10 + 20 + 7));
    }

    #[test]
    fn opt_tree_overlaps_credits_with_one_debit() {
        let (t, p) = smallbank_tree(&cal(), Formulation::Opt, 3, 7);
        // Sends are serialized: the last credit starts after three sends and
        // outlasts the overlapped debit.
        assert_eq!(estimate_latency(&t, &p), 5 + 3 * 10 + 7 + 20);
    }

    #[test]
    fn single_container_destination_has_no_communication() {
        let (t, p) = smallbank_tree(&cal(), Formulation::Opt, 1, 1);
        let mut p = p;
        p = p.place(1, 0);
        assert_eq!(estimate_latency(&t, &p), 5 + 7);
    }

    #[test]
    fn new_order_tree_from_shape() {
        let costs = NewOrderCosts {
            head: 100,
            item: 10,
            line: 5,
            local_stock: 8,
            remote_stock: 9,
            stock_update_fixed: 4,
        };
        let shape = NewOrderShape {
            lines: 3,
            local_stock: 1,
            remote: vec![(1, 2, false)],
        };
        let (t, p) = costs.tree(&shape, 0, &CostParams::uniform(30, 40));
        assert_eq!(estimate_latency(&t, &p), 100 + 3 * 15 + 4 + 2 * 9 + 30 + 40);
    }
}

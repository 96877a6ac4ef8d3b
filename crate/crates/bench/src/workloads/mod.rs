//! Benchmark workloads: reactor types, initial data, transaction input
//! generators and consistency checks.

use std::sync::Arc;

use rand::Rng;
use reactordb_core::{Database, Datum, ReactorId, ReactorType, TxnError};

use crate::spec::{Benchmark, SpecError, WorkloadSpec};

pub mod exchange;
pub mod noop;
pub mod smallbank;
pub mod tpcc;
pub mod ycsb;

/// One root transaction invocation.
#[derive(Clone, Debug, PartialEq)]
pub struct Request {
    pub reactor: ReactorId,
    pub procedure: &'static str,
    pub args: Vec<Datum>,
    /// Position of the transaction in the benchmark's transaction list.
    pub kind: usize,
}

pub trait Generator: Send {
    fn next(&mut self) -> Request;
}

pub trait Workload: Send + Sync {
    fn spec(&self) -> &WorkloadSpec;

    /// Reactor names and type names, in declaration order.
    fn reactors(&self) -> Vec<(String, String)>;

    fn types(&self) -> Vec<ReactorType>;

    fn load(&self, db: &Database) -> Result<(), TxnError>;

    /// Input generator for closed-loop worker `worker`.
    fn generator(&self, db: &Database, worker: usize) -> Box<dyn Generator>;

    /// Sees the outcome of every finished transaction.
    fn observe(&self, _kind: usize, _result: &Result<Datum, TxnError>) {}

    /// Consistency checks over the database after a run.
    fn check(&self, db: &Database) -> Result<(), String>;
}

pub fn build(spec: &WorkloadSpec, partitions: usize) -> Result<Arc<dyn Workload>, SpecError> {
    spec.validate()?;
    let partitions = partitions.max(1);
    Ok(match spec.benchmark {
        Benchmark::Smallbank => Arc::new(smallbank::Smallbank::new(spec.clone(), partitions)),
        Benchmark::Tpcc => Arc::new(tpcc::Tpcc::new(spec.clone())),
        Benchmark::Ycsb => Arc::new(ycsb::Ycsb::new(spec.clone(), partitions)),
        Benchmark::Exchange => Arc::new(exchange::Exchange::new(spec.clone())),
        Benchmark::Noop => Arc::new(noop::Noop::new(spec.clone())),
    })
}

/// Picks a transaction by mix percentage.
#[derive(Clone, Debug)]
pub struct Mix {
    /// (transaction index, cumulative percentage).
    table: Vec<(usize, u32)>,
}

impl Mix {
    pub fn new(spec: &WorkloadSpec) -> Self {
        let names = spec.benchmark.transactions();
        let mut acc = 0;
        let table = spec
            .mix
            .iter()
            .filter(|(_, p)| *p > 0)
            .map(|(n, p)| {
                acc += p;
                (names.iter().position(|x| x == n).expect("validated mix"), acc)
            })
            .collect();
        Mix { table }
    }

    pub fn pick<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let x = rng.gen_range(0..100);
        self.table.iter().find(|(_, c)| x < *c).expect("mix sums to 100").0
    }
}

/// Reactors `[lo, hi)` of `n` that fall in partition `p` of `parts` when
/// reactor `i` is assigned to partition `i * parts / n`.
pub fn partition_range(p: usize, n: usize, parts: usize) -> std::ops::Range<usize> {
    let first = |q: usize| (q * n).div_ceil(parts);
    first(p)..first(p + 1).min(n)
}

pub fn partition_of(i: usize, n: usize, parts: usize) -> usize {
    i * parts / n
}

fn reactor_ids(db: &Database, names: impl Iterator<Item = String>) -> Vec<ReactorId> {
    names
        .map(|n| db.reactor_id(&n).unwrap_or_else(|| panic!("reactor {n} not declared")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn partition_ranges_invert_assignment() {
        for (n, parts) in [(7000, 7), (10, 3), (4, 4), (5, 8), (40_000, 4)] {
            for i in 0..n {
                assert!(partition_range(partition_of(i, n, parts), n, parts).contains(&i));
            }
        }
    }

    #[test]
    fn mix_follows_percentages() {
        let spec = WorkloadSpec::new(Benchmark::Tpcc);
        let mix = Mix::new(&spec);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut counts = [0; 5];
        for _ in 0..100_000 {
            counts[mix.pick(&mut rng)] += 1;
        }
        assert!((counts[0] as f64 / 1000.0 - 45.0).abs() < 1.0);
        assert!((counts[4] as f64 / 1000.0 - 4.0).abs() < 0.5);
    }
}

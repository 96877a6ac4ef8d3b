//! YCSB `multi_update`: every key is a reactor holding one 100-byte record.
//! A transaction updates ten keys chosen by a power-law distribution, rooted
//! at one of them. Keys living on other executors are called first and
//! asynchronously; the rest run in place.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reactordb_core::{Args, Database, Datum, ReactorId, ReactorType, TableSchema, TxnError};

use super::{partition_of, reactor_ids, Generator, Request, Workload};
use crate::spec::WorkloadSpec;
use crate::zipf::Zipf;

pub const KEYS_PER_SCALE: usize = 10_000;
pub const RECORD_SIZE: usize = 100;
pub const KEYS_PER_TXN: usize = 10;

pub fn key_name(i: usize) -> String {
    format!("key{i}")
}

/// Counter in the first eight bytes, filler derived from it in the rest.
fn record(counter: u64) -> Vec<u8> {
    let mut r = vec![(counter % 251) as u8; RECORD_SIZE];
    r[..8].copy_from_slice(&counter.to_le_bytes());
    r
}

pub fn counter(record: &[u8]) -> u64 {
    u64::from_le_bytes(record[..8].try_into().expect("record has a counter"))
}

pub fn key_type() -> ReactorType {
    ReactorType::new("key")
        .table(TableSchema::new("usertable", 1, &["field"]))
        .procedure("update", |tx, a| {
            let n = a.int(0)? as u64;
            let old = tx.read("usertable", &[0])?.map(|v| counter(&v)).unwrap_or(0);
            tx.write("usertable", &[0], record(old + n))?;
            Ok(Datum::Unit)
        })
        .procedure("multi_update", |tx, a| {
            let mut futures = Vec::new();
            for entry in a.list(0)? {
                let e = entry.as_list()?;
                let dest = tx.lookup(e.str(0)?)?;
                futures.push(tx.call(dest, "update", vec![e.arg(1)?.clone()])?);
            }
            for f in &futures {
                f.get(tx)?;
            }
            Ok(Datum::Unit)
        })
}

pub struct Ycsb {
    spec: WorkloadSpec,
    partitions: usize,
    keys: usize,
    committed: AtomicU64,
}

impl Ycsb {
    pub fn new(spec: WorkloadSpec, partitions: usize) -> Self {
        let keys = spec.scale_factor * KEYS_PER_SCALE;
        Ycsb {
            spec,
            partitions,
            keys,
            committed: AtomicU64::new(0),
        }
    }

    pub fn committed(&self) -> u64 {
        self.committed.load(Ordering::SeqCst)
    }

    pub fn counter_sum(&self, db: &Database) -> u64 {
        db.logical_state()
            .iter()
            .filter(|((_, t), _)| t == "usertable")
            .flat_map(|(_, rows)| rows.iter().map(|(_, v)| counter(v)))
            .sum()
    }
}

impl Workload for Ycsb {
    fn spec(&self) -> &WorkloadSpec {
        &self.spec
    }

    fn reactors(&self) -> Vec<(String, String)> {
        (0..self.keys).map(|i| (key_name(i), "key".to_string())).collect()
    }

    fn types(&self) -> Vec<ReactorType> {
        vec![key_type()]
    }

    fn load(&self, db: &Database) -> Result<(), TxnError> {
        for i in 0..self.keys {
            let r = db.reactor_id(&key_name(i)).expect("declared");
            db.load(r, "usertable", &[0], record(0))?;
        }
        Ok(())
    }

    fn generator(&self, db: &Database, worker: usize) -> Box<dyn Generator> {
        Box::new(YcsbGen {
            rng: ChaCha8Rng::seed_from_u64(self.spec.seed ^ (worker as u64).wrapping_mul(0x9e37_79b9)),
            zipf: Zipf::new(self.keys, self.spec.zipfian),
            ids: reactor_ids(db, (0..self.keys).map(key_name)),
            keys: self.keys,
            partitions: self.partitions,
        })
    }

    fn observe(&self, _kind: usize, result: &Result<Datum, TxnError>) {
        if result.is_ok() {
            self.committed.fetch_add(1, Ordering::SeqCst);
        }
    }

    fn check(&self, db: &Database) -> Result<(), String> {
        let (sum, expected) = (self.counter_sum(db), KEYS_PER_TXN as u64 * self.committed());
        if sum != expected {
            return Err(format!("ycsb counters sum to {sum}, expected {expected}"));
        }
        Ok(())
    }
}

pub struct YcsbGen {
    rng: ChaCha8Rng,
    zipf: Zipf,
    ids: Vec<ReactorId>,
    keys: usize,
    partitions: usize,
}

impl YcsbGen {
    /// Root key and the update list: distinct keys with their multiplicity,
    /// keys on other partitions first.
    pub fn plan(&mut self) -> (usize, Vec<(usize, u64)>) {
        let picked: Vec<usize> = (0..KEYS_PER_TXN).map(|_| self.zipf.sample(&mut self.rng)).collect();
        let root = picked[self.rng.gen_range(0..KEYS_PER_TXN)];
        let mut counts: Vec<(usize, u64)> = Vec::new();
        for k in picked {
            match counts.iter_mut().find(|(x, _)| *x == k) {
                Some(e) => e.1 += 1,
                None => counts.push((k, 1)),
            }
        }
        let home = partition_of(root, self.keys, self.partitions);
        counts.sort_by_key(|&(k, _)| (partition_of(k, self.keys, self.partitions) == home, k));
        (root, counts)
    }
}

impl Generator for YcsbGen {
    fn next(&mut self) -> Request {
        let (root, counts) = self.plan();
        let list: Vec<Datum> = counts
            .iter()
            .map(|&(k, n)| Datum::List(vec![key_name(k).into(), (n as i64).into()]))
            .collect();
        Request {
            reactor: self.ids[root],
            procedure: "multi_update",
            args: vec![list.into()],
            kind: 0,
        }
    }
}

/// Update plan of one transaction; exposed for tests.
pub fn sample_plan(spec: &WorkloadSpec, partitions: usize, seed: u64) -> (usize, Vec<(usize, u64)>) {
    let keys = spec.scale_factor * KEYS_PER_SCALE;
    let mut g = YcsbGen {
        rng: ChaCha8Rng::seed_from_u64(seed),
        zipf: Zipf::new(keys, spec.zipfian),
        ids: Vec::new(),
        keys,
        partitions,
    };
    g.plan()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec::Benchmark;

    #[test]
    fn remote_keys_come_first() {
        let spec = WorkloadSpec::new(Benchmark::Ycsb);
        let keys = spec.scale_factor * KEYS_PER_SCALE;
        for seed in 0..50 {
            let (root, plan) = sample_plan(&spec, 4, seed);
            let home = partition_of(root, keys, 4);
            let local: Vec<bool> = plan.iter().map(|&(k, _)| partition_of(k, keys, 4) == home).collect();
            assert!(local.windows(2).all(|w| w[0] <= w[1]));
            assert_eq!(plan.iter().map(|p| p.1).sum::<u64>(), KEYS_PER_TXN as u64);
            assert!(plan.iter().any(|&(k, _)| k == root));
        }
    }

    #[test]
    fn extreme_skew_mostly_touches_one_reactor() {
        let spec = WorkloadSpec {
            zipfian: 5.0,
            ..WorkloadSpec::new(Benchmark::Ycsb)
        };
        // All ten draws hit the first key with probability pmf(0)^10.
        let p0 = Zipf::new(spec.scale_factor * KEYS_PER_SCALE, 5.0).pmf(0);
        let expected = p0.powi(KEYS_PER_TXN as i32);
        let n = 2000;
        let single = (0..n).filter(|&s| sample_plan(&spec, 4, s).1.len() == 1).count();
        assert!((single as f64 / n as f64 - expected).abs() < 0.04, "{single} of {n}, expected {expected}");
    }

    #[test]
    fn records_keep_their_size() {
        assert_eq!(record(7).len(), RECORD_SIZE);
        assert_eq!(counter(&record(12345)), 12345);
    }
}

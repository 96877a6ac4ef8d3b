//! Smallbank with the transfer and multi-transfer extensions. Each customer
//! is a reactor holding `account` (name to customer id), `savings` and
//! `checking`.

use std::sync::atomic::{AtomicI64, Ordering};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reactordb_core::{Args, Database, Datum, ReactorId, ReactorType, TableSchema, Tx, TxnError};

use super::{partition_of, partition_range, reactor_ids, Generator, Mix, Request, Workload};
use crate::spec::{DestStrategy, Formulation, WorkloadSpec};

pub const CUSTOMERS_PER_SCALE: usize = 1000;
pub const INITIAL_BALANCE: i64 = 1_000_000_000;

pub fn customer_name(i: usize) -> String {
    format!("cust{i}")
}

fn id_key(id: i64) -> [u8; 8] {
    id.to_be_bytes()
}

fn customer_id(tx: &mut Tx<'_>) -> Result<i64, TxnError> {
    let name = tx.reactor_name().to_string();
    match tx.read_row::<i64>("account", name.as_bytes())? {
        Some(id) => Ok(id),
        None => tx.abort(format!("no account for {name}")),
    }
}

fn balance(tx: &mut Tx<'_>, table: &str, id: i64) -> Result<i64, TxnError> {
    Ok(tx.read_row::<i64>(table, &id_key(id))?.unwrap_or(0))
}

fn transact_saving(tx: &mut Tx<'_>, amount: i64) -> Result<Datum, TxnError> {
    let id = customer_id(tx)?;
    let b = balance(tx, "savings", id)? + amount;
    if b < 0 {
        return tx.abort("insufficient funds");
    }
    tx.write_row("savings", &id_key(id), &b)?;
    Ok(amount.into())
}

fn deposit_checking(tx: &mut Tx<'_>, amount: i64) -> Result<Datum, TxnError> {
    if amount < 0 {
        return tx.abort("negative deposit");
    }
    let id = customer_id(tx)?;
    let b = balance(tx, "checking", id)? + amount;
    tx.write_row("checking", &id_key(id), &b)?;
    Ok(amount.into())
}

fn destinations(a: &[Datum]) -> Result<Vec<String>, TxnError> {
    a.list(0)?.iter().map(|d| d.as_str().map(str::to_string)).collect()
}

/// The customer reactor type. With `seq_transfer` the credit inside
/// `transfer` is awaited before the debit; without, it overlaps it.
pub fn customer_type(seq_transfer: bool) -> ReactorType {
    ReactorType::new("customer")
        .table(TableSchema::new("account", 1, &["cust_id"]))
        .table(TableSchema::new("savings", 1, &["bal"]))
        .table(TableSchema::new("checking", 1, &["bal"]))
        .procedure("transact_saving", |tx, a| transact_saving(tx, a.int(0)?))
        .procedure("deposit_checking", |tx, a| deposit_checking(tx, a.int(0)?))
        .procedure("balance", |tx, _| {
            let id = customer_id(tx)?;
            let total = balance(tx, "savings", id)? + balance(tx, "checking", id)?;
            Ok(total.into())
        })
        .procedure("write_check", |tx, a| {
            let amount = a.int(0)?;
            let id = customer_id(tx)?;
            let total = balance(tx, "savings", id)? + balance(tx, "checking", id)?;
            let charge = if total < amount { amount + 1 } else { amount };
            let c = balance(tx, "checking", id)? - charge;
            tx.write_row("checking", &id_key(id), &c)?;
            Ok((-charge).into())
        })
        .procedure("amalgamate", |tx, a| {
            let dest = tx.lookup(a.str(0)?)?;
            let id = customer_id(tx)?;
            let total = balance(tx, "savings", id)? + balance(tx, "checking", id)?;
            tx.write_row("savings", &id_key(id), &0i64)?;
            tx.write_row("checking", &id_key(id), &0i64)?;
            let f = tx.call(dest, "deposit_checking", vec![total.into()])?;
            f.get(tx)?;
            Ok(0i64.into())
        })
        .procedure("send_payment", |tx, a| {
            let dest = tx.lookup(a.str(0)?)?;
            let amount = a.int(1)?;
            let id = customer_id(tx)?;
            let c = balance(tx, "checking", id)? - amount;
            if c < 0 {
                return tx.abort("insufficient funds");
            }
            tx.write_row("checking", &id_key(id), &c)?;
            let f = tx.call(dest, "deposit_checking", vec![amount.into()])?;
            f.get(tx)?;
            Ok(0i64.into())
        })
        .procedure("transfer", move |tx, a| {
            let dest = tx.lookup(a.str(0)?)?;
            let amount = a.int(1)?;
            let me = tx.reactor_id();
            let credit = tx.call(dest, "transact_saving", vec![amount.into()])?;
            if seq_transfer {
                credit.get(tx)?;
            }
            let debit = tx.call(me, "transact_saving", vec![(-amount).into()])?;
            debit.get(tx)?;
            if !seq_transfer {
                credit.get(tx)?;
            }
            Ok(Datum::Unit)
        })
        .procedure("multi_transfer_sync", |tx, a| {
            let amount = a.int(1)?;
            let me = tx.reactor_id();
            for d in destinations(a)? {
                let f = tx.call(me, "transfer", vec![d.into(), amount.into()])?;
                f.get(tx)?;
            }
            Ok(0i64.into())
        })
        .procedure("multi_transfer_fully_async", |tx, a| {
            let amount = a.int(1)?;
            let me = tx.reactor_id();
            let mut credits = Vec::new();
            let dests = destinations(a)?;
            for d in &dests {
                let dest = tx.lookup(d)?;
                credits.push(tx.call(dest, "transact_saving", vec![amount.into()])?);
            }
            for _ in &dests {
                let f = tx.call(me, "transact_saving", vec![(-amount).into()])?;
                f.get(tx)?;
            }
            for f in &credits {
                f.get(tx)?;
            }
            Ok(0i64.into())
        })
        .procedure("multi_transfer_opt", |tx, a| {
            let amount = a.int(1)?;
            let me = tx.reactor_id();
            let mut credits = Vec::new();
            let dests = destinations(a)?;
            for d in &dests {
                let dest = tx.lookup(d)?;
                credits.push(tx.call(dest, "transact_saving", vec![amount.into()])?);
            }
            let total = amount * dests.len() as i64;
            let f = tx.call(me, "transact_saving", vec![(-total).into()])?;
            f.get(tx)?;
            for f in &credits {
                f.get(tx)?;
            }
            Ok(0i64.into())
        })
}

/// Root procedure implementing `formulation`.
pub fn multi_transfer_procedure(formulation: Formulation) -> &'static str {
    match formulation {
        Formulation::FullySync | Formulation::PartiallyAsync => "multi_transfer_sync",
        Formulation::FullyAsync => "multi_transfer_fully_async",
        _ => "multi_transfer_opt",
    }
}

pub struct Smallbank {
    spec: WorkloadSpec,
    partitions: usize,
    customers: usize,
    /// Net money added by committed deposits and checks.
    external: AtomicI64,
}

impl Smallbank {
    pub fn new(spec: WorkloadSpec, partitions: usize) -> Self {
        let customers = spec.scale_factor * CUSTOMERS_PER_SCALE;
        Smallbank {
            spec,
            partitions,
            customers,
            external: AtomicI64::new(0),
        }
    }

    pub fn customers(&self) -> usize {
        self.customers
    }

    pub fn expected_total(&self) -> i64 {
        2 * INITIAL_BALANCE * self.customers as i64 + self.external.load(Ordering::SeqCst)
    }

    pub fn total(&self, db: &Database) -> i64 {
        (0..self.customers)
            .map(|i| {
                let r = db.reactor_id(&customer_name(i)).expect("customer");
                let key = id_key(i as i64);
                let s = db.peek_row::<i64>(r, "savings", &key).ok().flatten().unwrap_or(0);
                let c = db.peek_row::<i64>(r, "checking", &key).ok().flatten().unwrap_or(0);
                s + c
            })
            .sum()
    }
}

impl Workload for Smallbank {
    fn spec(&self) -> &WorkloadSpec {
        &self.spec
    }

    fn reactors(&self) -> Vec<(String, String)> {
        (0..self.customers)
            .map(|i| (customer_name(i), "customer".to_string()))
            .collect()
    }

    fn types(&self) -> Vec<ReactorType> {
        vec![customer_type(self.spec.formulation != Formulation::PartiallyAsync)]
    }

    fn load(&self, db: &Database) -> Result<(), TxnError> {
        for i in 0..self.customers {
            let name = customer_name(i);
            let r = db.reactor_id(&name).expect("declared");
            db.load_row(r, "account", name.as_bytes(), &(i as i64))?;
            db.load_row(r, "savings", &id_key(i as i64), &INITIAL_BALANCE)?;
            db.load_row(r, "checking", &id_key(i as i64), &INITIAL_BALANCE)?;
        }
        Ok(())
    }

    fn generator(&self, db: &Database, worker: usize) -> Box<dyn Generator> {
        Box::new(SmallbankGen {
            rng: ChaCha8Rng::seed_from_u64(self.spec.seed ^ (worker as u64).wrapping_mul(0x9e37_79b9)),
            mix: Mix::new(&self.spec),
            ids: reactor_ids(db, (0..self.customers).map(customer_name)),
            customers: self.customers,
            partitions: self.partitions,
            size: self.spec.txn_size,
            strategy: self.spec.dest_strategy,
            span: self.spec.span.unwrap_or(self.partitions).min(self.partitions),
            procedure: multi_transfer_procedure(self.spec.formulation),
        })
    }

    fn observe(&self, _kind: usize, result: &Result<Datum, TxnError>) {
        if let Ok(Datum::Int(delta)) = result {
            self.external.fetch_add(*delta, Ordering::SeqCst);
        }
    }

    fn check(&self, db: &Database) -> Result<(), String> {
        let (actual, expected) = (self.total(db), self.expected_total());
        if actual != expected {
            return Err(format!("smallbank balances sum to {actual}, expected {expected}"));
        }
        Ok(())
    }
}

pub struct SmallbankGen {
    rng: ChaCha8Rng,
    mix: Mix,
    ids: Vec<ReactorId>,
    customers: usize,
    partitions: usize,
    size: usize,
    strategy: DestStrategy,
    span: usize,
    procedure: &'static str,
}

impl SmallbankGen {
    fn in_partition(&mut self, p: usize, exclude: &[usize]) -> usize {
        let range = partition_range(p % self.partitions, self.customers, self.partitions);
        let candidates = range.len().saturating_sub(exclude.len());
        assert!(candidates > 0, "partition {p} has too few customers");
        loop {
            let c = self.rng.gen_range(range.clone());
            if !exclude.contains(&c) {
                return c;
            }
        }
    }

    fn other(&mut self, exclude: &[usize]) -> usize {
        loop {
            let c = self.rng.gen_range(0..self.customers);
            if !exclude.contains(&c) {
                return c;
            }
        }
    }

    /// Source in the first partition and `size` distinct destinations.
    pub fn transfer_parties(&mut self) -> (usize, Vec<usize>) {
        let src = self.in_partition(0, &[]);
        let mut taken = vec![src];
        let remote = self.partitions.max(2) - 1;
        let span = self.span.max(1);
        for i in 0..self.size {
            let p = match self.strategy {
                DestStrategy::AllRemote if self.partitions > 1 => 1 + i % remote,
                DestStrategy::RoundRobinRemote if span > 1 => {
                    let remote_calls = span - 1;
                    if i < self.size.saturating_sub(remote_calls) {
                        0
                    } else {
                        1 + (i - (self.size - remote_calls)) % remote_calls
                    }
                }
                DestStrategy::RoundRobinAll => i % span,
                DestStrategy::Random => {
                    let c = self.other(&taken);
                    taken.push(c);
                    continue;
                }
                _ => 0,
            };
            let c = self.in_partition(p, &taken);
            taken.push(c);
        }
        (src, taken[1..].to_vec())
    }

    fn name(&self, i: usize) -> Datum {
        customer_name(i).into()
    }
}

impl Generator for SmallbankGen {
    fn next(&mut self) -> Request {
        let kind = self.mix.pick(&mut self.rng);
        let amount: i64 = self.rng.gen_range(1..=10);
        let (reactor, procedure, args) = match kind {
            0 => {
                let (src, dests) = self.transfer_parties();
                let names: Vec<Datum> = dests.iter().map(|&d| self.name(d)).collect();
                (src, self.procedure, vec![names.into(), 1i64.into()])
            }
            1 => (self.other(&[]), "balance", vec![]),
            2 => (self.other(&[]), "deposit_checking", vec![amount.into()]),
            3 => (self.other(&[]), "transact_saving", vec![amount.into()]),
            4 | 6 => {
                let a = self.other(&[]);
                let b = self.other(&[a]);
                if kind == 4 {
                    (a, "amalgamate", vec![self.name(b)])
                } else {
                    (a, "send_payment", vec![self.name(b), amount.into()])
                }
            }
            _ => (self.other(&[]), "write_check", vec![amount.into()]),
        };
        Request {
            reactor: self.ids[reactor],
            procedure,
            args,
            kind,
        }
    }
}

/// Destination partitions chosen for one multi-transfer; exposed for tests.
pub fn sample_parties(spec: &WorkloadSpec, partitions: usize, seed: u64) -> (usize, Vec<usize>) {
    let customers = spec.scale_factor * CUSTOMERS_PER_SCALE;
    let mut g = SmallbankGen {
        rng: ChaCha8Rng::seed_from_u64(seed),
        mix: Mix::new(spec),
        ids: Vec::new(),
        customers,
        partitions,
        size: spec.txn_size,
        strategy: spec.dest_strategy,
        span: spec.span.unwrap_or(partitions).min(partitions),
        procedure: multi_transfer_procedure(spec.formulation),
    };
    let (src, dests) = g.transfer_parties();
    let mut parts: Vec<usize> = dests.iter().map(|&d| partition_of(d, customers, partitions)).collect();
    parts.shuffle(&mut g.rng);
    (partition_of(src, customers, partitions), parts)
}

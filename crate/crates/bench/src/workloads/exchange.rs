//! Digital currency exchange. An `exchange` reactor authorizes payments
//! against settlement limits; `provider{i}` reactors hold a cached risk and
//! their fragment of the orders relation.
//!
//! `auth_pay` fans `calc_risk` out to every provider and then adds the
//! order. `auth_pay_classic` is the single-procedure program: it only
//! parallelizes the per-provider exposure scans and runs the risk
//! simulation at the exchange, one provider after another.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reactordb_core::{Args, Database, Datum, KeyBuf, ReactorId, ReactorType, TableSchema, Tx, TxnError};
use serde::{Deserialize, Serialize};

use super::{reactor_ids, Generator, Request, Workload};
use crate::spec::{Formulation, WorkloadSpec};
use crate::spin;

pub const EXCHANGE: &str = "exchange";
const NO_LIMIT: i64 = i64::MAX / 4;
const FIRST_TS: u64 = 1 << 40;

pub fn provider_name(i: usize) -> String {
    format!("provider{i}")
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct Limits {
    pub p_exposure: i64,
    pub g_risk: i64,
}

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct RiskCache {
    pub risk: i64,
    pub computed_at: Option<u64>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct PaymentOrder {
    pub wallet: u32,
    pub value: i64,
    pub settled: bool,
}

/// Knobs shared by both reactor types.
#[derive(Clone, Copy, Debug)]
pub struct RiskParams {
    pub window: usize,
    pub load: u64,
    pub cache_period: u64,
}

fn sim_risk(exposure: i64, load: u64, seed: u64) -> i64 {
    exposure / 100 + (spin::generate(seed, load) % 10) as i64
}

fn exposure(tx: &mut Tx<'_>, window: usize) -> Result<i64, TxnError> {
    let recent: Vec<(Vec<u8>, PaymentOrder)> = tx.scan_rows("orders", &[], &[0xff; 9], window, true)?;
    Ok(recent.iter().filter(|(_, o)| !o.settled).map(|(_, o)| o.value).sum())
}

/// Cached risk if fresh at `ts`, otherwise simulated and stored.
fn risk(tx: &mut Tx<'_>, table: &str, key: &[u8], exposure: i64, ts: u64, p: RiskParams) -> Result<i64, TxnError> {
    let cache: RiskCache = tx.read_row(table, key)?.unwrap_or_default();
    if let Some(at) = cache.computed_at {
        if ts < at.saturating_add(p.cache_period) {
            return Ok(cache.risk);
        }
    }
    let seed = ts ^ (tx.reactor_id() as u64).rotate_left(17) ^ key.len() as u64;
    let risk = tx.timed("sim_risk", |_| sim_risk(exposure, p.load, seed));
    tx.write_row(
        table,
        key,
        &RiskCache {
            risk,
            computed_at: Some(ts),
        },
    )?;
    Ok(risk)
}

fn limits(tx: &mut Tx<'_>) -> Result<Limits, TxnError> {
    match tx.read_row("settlement_risk", &[0])? {
        Some(l) => Ok(l),
        None => tx.abort("no settlement limits"),
    }
}

fn provider_names(tx: &mut Tx<'_>) -> Result<Vec<String>, TxnError> {
    let rows = tx.scan("provider_names", &[], &[0xff], usize::MAX, false)?.entries;
    Ok(rows
        .into_iter()
        .map(|(k, _)| String::from_utf8_lossy(&k[..k.len() - 1]).into_owned())
        .collect())
}

fn add_order(tx: &mut Tx<'_>, a: &[Datum], total: i64, g_risk: i64) -> Result<Datum, TxnError> {
    let value = a.int(2)?;
    if total + value > g_risk {
        return Ok(false.into());
    }
    let dest = tx.lookup(a.str(0)?)?;
    tx.call(dest, "add_entry", vec![a.arg(1)?.clone(), value.into(), a.arg(3)?.clone()])?;
    Ok(true.into())
}

pub fn exchange_type(p: RiskParams) -> ReactorType {
    ReactorType::new("exchange")
        .table(TableSchema::new("provider_names", 1, &[]))
        .table(TableSchema::new("settlement_risk", 1, &["p_exposure", "g_risk"]))
        .table(TableSchema::new("providers", 1, &["risk", "computed_at"]))
        .procedure("auth_pay", |tx, a| {
            let lim = limits(tx)?;
            let ts = a.int(3)?;
            let mut results = Vec::new();
            for name in provider_names(tx)? {
                let dest = tx.lookup(&name)?;
                results.push(tx.call(dest, "calc_risk", vec![lim.p_exposure.into(), ts.into()])?);
            }
            let mut total = 0;
            for f in &results {
                total += f.get(tx)?.as_int()?;
            }
            add_order(tx, a, total, lim.g_risk)
        })
        .procedure("auth_pay_classic", move |tx, a| {
            let lim = limits(tx)?;
            let ts = a.int(3)? as u64;
            let names = provider_names(tx)?;
            let mut scans = Vec::new();
            for name in &names {
                let dest = tx.lookup(name)?;
                scans.push(tx.call(dest, "exposure", vec![])?);
            }
            let mut total = 0;
            for (name, f) in names.iter().zip(&scans) {
                let e = f.get(tx)?.as_int()?;
                if e > lim.p_exposure {
                    return tx.abort(format!("{name} exposure {e} over limit"));
                }
                total += risk(tx, "providers", &KeyBuf::new().str(name).finish(), e, ts, p)?;
            }
            add_order(tx, a, total, lim.g_risk)
        })
        .procedure("set_limits", |tx, a| {
            let l = Limits {
                p_exposure: a.int(0)?,
                g_risk: a.int(1)?,
            };
            tx.write_row("settlement_risk", &[0], &l)?;
            Ok(Datum::Unit)
        })
}

pub fn provider_type(p: RiskParams) -> ReactorType {
    ReactorType::new("provider")
        .table(TableSchema::new("risk", 1, &["risk", "computed_at"]))
        .table(TableSchema::new("orders", 1, &["wallet", "value", "settled"]))
        .procedure("calc_risk", move |tx, a| {
            let p_exposure = a.int(0)?;
            let e = exposure(tx, p.window)?;
            if e > p_exposure {
                return tx.abort(format!("{} exposure {e} over limit", tx.reactor_name()));
            }
            Ok(risk(tx, "risk", &[0], e, a.int(1)? as u64, p)?.into())
        })
        .procedure("exposure", move |tx, _| Ok(exposure(tx, p.window)?.into()))
        .procedure("add_entry", |tx, a| {
            let order = PaymentOrder {
                wallet: a.int(0)? as u32,
                value: a.int(1)?,
                settled: false,
            };
            tx.insert_row("orders", &KeyBuf::new().u64(a.int(2)? as u64).finish(), &order)?;
            Ok(Datum::Unit)
        })
}

pub struct Exchange {
    spec: WorkloadSpec,
    accepted: AtomicU64,
}

impl Exchange {
    pub fn new(spec: WorkloadSpec) -> Self {
        Exchange {
            spec,
            accepted: AtomicU64::new(0),
        }
    }

    fn params(&self) -> RiskParams {
        RiskParams {
            window: self.spec.scan_window,
            load: self.spec.simrisk_load,
            cache_period: self.spec.risk_cache_period,
        }
    }

    pub fn accepted(&self) -> u64 {
        self.accepted.load(Ordering::SeqCst)
    }

    pub fn root_procedure(&self) -> &'static str {
        match self.spec.formulation {
            Formulation::ProcedureParallelism => "auth_pay",
            _ => "auth_pay_classic",
        }
    }
}

impl Workload for Exchange {
    fn spec(&self) -> &WorkloadSpec {
        &self.spec
    }

    fn reactors(&self) -> Vec<(String, String)> {
        std::iter::once((EXCHANGE.to_string(), "exchange".to_string()))
            .chain((0..self.spec.providers).map(|i| (provider_name(i), "provider".to_string())))
            .collect()
    }

    fn types(&self) -> Vec<ReactorType> {
        vec![exchange_type(self.params()), provider_type(self.params())]
    }

    fn load(&self, db: &Database) -> Result<(), TxnError> {
        let ex = db.reactor_id(EXCHANGE).expect("declared");
        db.load_row(
            ex,
            "settlement_risk",
            &[0],
            &Limits {
                p_exposure: NO_LIMIT,
                g_risk: NO_LIMIT,
            },
        )?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.spec.seed);
        for i in 0..self.spec.providers {
            let name = provider_name(i);
            db.load_row(ex, "provider_names", &KeyBuf::new().str(&name).finish(), &())?;
            db.load_row(ex, "providers", &KeyBuf::new().str(&name).finish(), &RiskCache::default())?;
            let r = db.reactor_id(&name).expect("declared");
            db.load_row(r, "risk", &[0], &RiskCache::default())?;
            for t in 1..=self.spec.orders_per_provider as u64 {
                let order = PaymentOrder {
                    wallet: rng.gen_range(0..10_000),
                    value: rng.gen_range(1..=100),
                    settled: false,
                };
                db.load_row(r, "orders", &KeyBuf::new().u64(t).finish(), &order)?;
            }
        }
        Ok(())
    }

    fn generator(&self, db: &Database, worker: usize) -> Box<dyn Generator> {
        Box::new(ExchangeGen {
            rng: ChaCha8Rng::seed_from_u64(self.spec.seed ^ (worker as u64).wrapping_mul(0x9e37_79b9)),
            exchange: reactor_ids(db, std::iter::once(EXCHANGE.to_string()))[0],
            providers: self.spec.providers,
            procedure: self.root_procedure(),
            ts: FIRST_TS + ((worker as u64) << 32),
        })
    }

    fn observe(&self, _kind: usize, result: &Result<Datum, TxnError>) {
        if let Ok(Datum::Bool(true)) = result {
            self.accepted.fetch_add(1, Ordering::SeqCst);
        }
    }

    fn check(&self, db: &Database) -> Result<(), String> {
        let orders: u64 = db
            .logical_state()
            .iter()
            .filter(|((_, t), _)| t == "orders")
            .map(|(_, rows)| rows.len() as u64)
            .sum();
        let expected = self.spec.providers as u64 * self.spec.orders_per_provider as u64 + self.accepted();
        if orders != expected {
            return Err(format!("{orders} orders stored, expected {expected}"));
        }
        Ok(())
    }
}

struct ExchangeGen {
    rng: ChaCha8Rng,
    exchange: ReactorId,
    providers: usize,
    procedure: &'static str,
    ts: u64,
}

impl Generator for ExchangeGen {
    fn next(&mut self) -> Request {
        self.ts += 1;
        let provider = provider_name(self.rng.gen_range(0..self.providers));
        let wallet: i64 = self.rng.gen_range(0..10_000);
        let value: i64 = self.rng.gen_range(1..=100);
        Request {
            reactor: self.exchange,
            procedure: self.procedure,
            args: vec![provider.into(), wallet.into(), value.into(), (self.ts as i64).into()],
            kind: 0,
        }
    }
}

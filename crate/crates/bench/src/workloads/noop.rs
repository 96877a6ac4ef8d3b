//! Empty transactions, used to measure the fixed cost of an invocation.
//! Meant to run with concurrency control disabled.

use reactordb_core::{Database, Datum, ReactorId, ReactorType, TxnError};

use super::{reactor_ids, Generator, Request, Workload};
use crate::spec::WorkloadSpec;

pub fn noop_name(i: usize) -> String {
    format!("noop{i}")
}

pub struct Noop {
    spec: WorkloadSpec,
}

impl Noop {
    pub fn new(spec: WorkloadSpec) -> Self {
        Noop { spec }
    }
}

impl Workload for Noop {
    fn spec(&self) -> &WorkloadSpec {
        &self.spec
    }

    fn reactors(&self) -> Vec<(String, String)> {
        (0..self.spec.scale_factor)
            .map(|i| (noop_name(i), "noop".to_string()))
            .collect()
    }

    fn types(&self) -> Vec<ReactorType> {
        vec![ReactorType::new("noop").procedure("noop", |_, _| Ok(Datum::Unit))]
    }

    fn load(&self, _db: &Database) -> Result<(), TxnError> {
        Ok(())
    }

    fn generator(&self, db: &Database, worker: usize) -> Box<dyn Generator> {
        let ids = reactor_ids(db, (0..self.spec.scale_factor).map(noop_name));
        Box::new(NoopGen {
            target: ids[worker % ids.len()],
        })
    }

    fn check(&self, _db: &Database) -> Result<(), String> {
        Ok(())
    }
}

struct NoopGen {
    target: ReactorId,
}

impl Generator for NoopGen {
    fn next(&mut self) -> Request {
        Request {
            reactor: self.target,
            procedure: "noop",
            args: Vec::new(),
            kind: 0,
        }
    }
}

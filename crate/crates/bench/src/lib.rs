//! Benchmarks, measurement harness and cost-model fits for reactordb.

pub mod fit;
pub mod harness;
pub mod spec;
pub mod spin;
pub mod workloads;
pub mod zipf;

//! In-memory database engine built around reactors: application-defined
//! actors that encapsulate relations and exchange asynchronous procedure
//! calls, with serializable transactions spanning any number of them.
//!
//! Reactors are placed on containers (shared-nothing storage partitions)
//! served by executors, as described by a [`DeploymentPlan`]. Each root
//! transaction is validated with optimistic concurrency control per
//! container and committed atomically across containers.

mod coordinator;
pub mod datum;
pub mod db;
pub mod deploy;
pub mod error;
pub mod executor;
pub mod future;
pub mod key;
pub mod occ;
pub mod profile;
pub mod runtime;
pub mod storage;
pub mod trace;

pub use datum::{Args, Datum};
pub use db::{Database, DbOptions, LogicalState, TraceTarget};
pub use deploy::{build_strategy, parse_plan, DeploymentPlan, RouterPolicy, Strategy};
pub use error::{ConfigError, TxnError};
pub use executor::ExecutorStats;
pub use future::{ClientFuture, Fut, TxnOutcome};
pub use key::KeyBuf;
pub use profile::{CallMode, CallProfile, Section, SubTxnProfile, TxnProfile};
pub use runtime::{Procedure, ReactorId, ReactorType, ScanResult, Tx};
pub use storage::{TableSchema, Value};

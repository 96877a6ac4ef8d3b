use thiserror::Error;

/// Why a transaction (or one of its sub-transactions) did not commit.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TxnError {
    #[error("user abort: {0}")]
    User(String),
    #[error("validation conflict: {0}")]
    Conflict(&'static str),
    #[error("duplicate key on insert into {0}")]
    DuplicateKey(String),
    #[error("dangerous structure: reactor {reactor} already runs a sub-transaction of txn {txn}")]
    DangerousStructure { reactor: String, txn: u64 },
    #[error("unknown reactor {0}")]
    UnknownReactor(String),
    #[error("unknown procedure {procedure} on reactor type {reactor_type}")]
    UnknownProcedure {
        reactor_type: String,
        procedure: String,
    },
    #[error("unknown table {table} on reactor type {reactor_type}")]
    UnknownTable { reactor_type: String, table: String },
    #[error("bad argument: {0}")]
    BadArgument(String),
    #[error("row encoding: {0}")]
    Codec(String),
    #[error("executor shut down")]
    Shutdown,
    #[error("procedure panicked: {0}")]
    Panic(String),
}

impl TxnError {
    pub fn user(msg: impl Into<String>) -> Self {
        TxnError::User(msg.into())
    }

    pub fn is_conflict(&self) -> bool {
        matches!(self, TxnError::Conflict(_) | TxnError::DuplicateKey(_))
    }
}

/// Errors raised while building or configuring a database.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("plan schema error: {0}")]
    Schema(String),
    #[error("reactor {0} is mapped more than once")]
    DoubleMapping(String),
    #[error("executor {executor} is not part of container {container}")]
    DanglingExecutor { container: u32, executor: u32 },
    #[error("unknown reactor type {0}")]
    UnknownType(String),
    #[error("reactor {0} is not mapped to any container")]
    UnmappedReactor(String),
    #[error("reactor {0} declared twice")]
    DuplicateReactor(String),
    #[error("table {0} already exists in this container")]
    DuplicateTable(String),
    #[error("i/o: {0}")]
    Io(String),
}

use serde::{Deserialize, Serialize};

use crate::error::TxnError;

/// Procedure arguments and results. Values are passed by value between
/// reactors; nothing is shared by reference across containers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
pub enum Datum {
    #[default]
    Unit,
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
    Bytes(Vec<u8>),
    List(Vec<Datum>),
}

fn wrong(expected: &str, got: &Datum) -> TxnError {
    TxnError::BadArgument(format!("expected {expected}, got {got:?}"))
}

impl Datum {
    pub fn as_int(&self) -> Result<i64, TxnError> {
        match self {
            Datum::Int(v) => Ok(*v),
            other => Err(wrong("int", other)),
        }
    }

    pub fn as_float(&self) -> Result<f64, TxnError> {
        match self {
            Datum::Float(v) => Ok(*v),
            Datum::Int(v) => Ok(*v as f64),
            other => Err(wrong("float", other)),
        }
    }

    pub fn as_bool(&self) -> Result<bool, TxnError> {
        match self {
            Datum::Bool(v) => Ok(*v),
            other => Err(wrong("bool", other)),
        }
    }

    pub fn as_str(&self) -> Result<&str, TxnError> {
        match self {
            Datum::Str(v) => Ok(v),
            other => Err(wrong("string", other)),
        }
    }

    pub fn as_bytes(&self) -> Result<&[u8], TxnError> {
        match self {
            Datum::Bytes(v) => Ok(v),
            other => Err(wrong("bytes", other)),
        }
    }

    pub fn as_list(&self) -> Result<&[Datum], TxnError> {
        match self {
            Datum::List(v) => Ok(v),
            other => Err(wrong("list", other)),
        }
    }
}

impl From<i64> for Datum {
    fn from(v: i64) -> Self {
        Datum::Int(v)
    }
}

impl From<u32> for Datum {
    fn from(v: u32) -> Self {
        Datum::Int(v as i64)
    }
}

impl From<usize> for Datum {
    fn from(v: usize) -> Self {
        Datum::Int(v as i64)
    }
}

impl From<f64> for Datum {
    fn from(v: f64) -> Self {
        Datum::Float(v)
    }
}

impl From<bool> for Datum {
    fn from(v: bool) -> Self {
        Datum::Bool(v)
    }
}

impl From<&str> for Datum {
    fn from(v: &str) -> Self {
        Datum::Str(v.to_string())
    }
}

impl From<String> for Datum {
    fn from(v: String) -> Self {
        Datum::Str(v)
    }
}

impl From<Vec<Datum>> for Datum {
    fn from(v: Vec<Datum>) -> Self {
        Datum::List(v)
    }
}

impl From<()> for Datum {
    fn from(_: ()) -> Self {
        Datum::Unit
    }
}

/// Positional access to a procedure's argument list.
pub trait Args {
    fn arg(&self, idx: usize) -> Result<&Datum, TxnError>;
    fn int(&self, idx: usize) -> Result<i64, TxnError> {
        self.arg(idx)?.as_int()
    }
    fn float(&self, idx: usize) -> Result<f64, TxnError> {
        self.arg(idx)?.as_float()
    }
    fn str(&self, idx: usize) -> Result<&str, TxnError> {
        self.arg(idx)?.as_str()
    }
    fn list(&self, idx: usize) -> Result<&[Datum], TxnError> {
        self.arg(idx)?.as_list()
    }
}

impl Args for [Datum] {
    fn arg(&self, idx: usize) -> Result<&Datum, TxnError> {
        self.get(idx)
            .ok_or_else(|| TxnError::BadArgument(format!("missing argument {idx}")))
    }
}

impl Args for Vec<Datum> {
    fn arg(&self, idx: usize) -> Result<&Datum, TxnError> {
        self.as_slice().arg(idx)
    }
}

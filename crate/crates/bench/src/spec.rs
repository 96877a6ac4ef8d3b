use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum SpecError {
    #[error("unknown {kind} {value:?}")]
    Unknown { kind: &'static str, value: String },
    #[error("mix percentages sum to {0}, not 100")]
    MixSum(u32),
    #[error("mix entry {0:?} is not a transaction of this benchmark")]
    MixEntry(String),
    #[error("{0}")]
    Invalid(String),
}

macro_rules! named_enum {
    ($(#[$m:meta])* $name:ident, $kind:literal, { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$m])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
        pub enum $name { $($variant),+ }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn name(self) -> &'static str {
                match self { $($name::$variant => $text),+ }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }

        impl FromStr for $name {
            type Err = SpecError;
            fn from_str(s: &str) -> Result<Self, SpecError> {
                match s.to_ascii_lowercase().as_str() {
                    $($text => Ok($name::$variant),)+
                    _ => Err(SpecError::Unknown { kind: $kind, value: s.to_string() }),
                }
            }
        }
    };
}

named_enum!(Benchmark, "benchmark", {
    Smallbank => "smallbank",
    Tpcc => "tpcc",
    Ycsb => "ycsb",
    Exchange => "exchange",
    Noop => "noop",
});

named_enum!(
    /// Program formulation. Smallbank uses the first four, TPC-C the sync
    /// and async pair, the exchange its three execution strategies.
    Formulation, "formulation", {
    FullySync => "fully-sync",
    PartiallyAsync => "partially-async",
    FullyAsync => "fully-async",
    Opt => "opt",
    Sync => "sync",
    Async => "async",
    Sequential => "sequential",
    QueryParallelism => "query-parallelism",
    ProcedureParallelism => "procedure-parallelism",
});

named_enum!(
    /// How Smallbank multi-transfer destinations are placed relative to the
    /// source's partition.
    DestStrategy, "destination strategy", {
    AllRemote => "all-remote",
    Local => "local",
    RoundRobinRemote => "round-robin-remote",
    RoundRobinAll => "round-robin-all",
    Random => "random",
});

impl Benchmark {
    pub fn formulations(self) -> &'static [Formulation] {
        use Formulation::*;
        match self {
            Benchmark::Smallbank => &[FullySync, PartiallyAsync, FullyAsync, Opt],
            Benchmark::Tpcc => &[Async, Sync],
            Benchmark::Ycsb | Benchmark::Noop => &[Async],
            Benchmark::Exchange => &[ProcedureParallelism, QueryParallelism, Sequential],
        }
    }

    /// Transaction names accepted in `--mix`.
    pub fn transactions(self) -> &'static [&'static str] {
        match self {
            Benchmark::Smallbank => &[
                "multi_transfer",
                "balance",
                "deposit_checking",
                "transact_savings",
                "amalgamate",
                "write_check",
                "send_payment",
            ],
            Benchmark::Tpcc => &["new_order", "payment", "order_status", "delivery", "stock_level"],
            Benchmark::Ycsb => &["multi_update"],
            Benchmark::Exchange => &["auth_pay"],
            Benchmark::Noop => &["noop"],
        }
    }

    pub fn default_mix(self) -> Vec<(String, u32)> {
        let m: &[(&str, u32)] = match self {
            Benchmark::Smallbank => &[("multi_transfer", 100)],
            Benchmark::Tpcc => &[
                ("new_order", 45),
                ("payment", 43),
                ("order_status", 4),
                ("delivery", 4),
                ("stock_level", 4),
            ],
            Benchmark::Ycsb => &[("multi_update", 100)],
            Benchmark::Exchange => &[("auth_pay", 100)],
            Benchmark::Noop => &[("noop", 100)],
        };
        m.iter().map(|(n, p)| (n.to_string(), *p)).collect()
    }
}

/// Parses `name=pct,name=pct`.
pub fn parse_mix(s: &str) -> Result<Vec<(String, u32)>, SpecError> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            let (name, pct) = p
                .split_once('=')
                .ok_or_else(|| SpecError::Invalid(format!("mix entry {p:?} is not name=percent")))?;
            let pct = pct
                .trim()
                .parse()
                .map_err(|_| SpecError::Invalid(format!("bad percentage in {p:?}")))?;
            Ok((name.trim().to_string(), pct))
        })
        .collect()
}

/// Parses `lo:hi` microseconds.
pub fn parse_range(s: &str) -> Result<(u64, u64), SpecError> {
    let bad = || SpecError::Invalid(format!("range {s:?} is not lo:hi"));
    let (lo, hi) = s.split_once(':').ok_or_else(bad)?;
    let lo = lo.trim().parse().map_err(|_| bad())?;
    let hi = hi.trim().parse().map_err(|_| bad())?;
    if lo > hi {
        return Err(bad());
    }
    Ok((lo, hi))
}

/// TPC-C population per warehouse. The standard sizes are large; smaller
/// ones keep load times short while preserving ten districts per warehouse.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TpccPopulation {
    pub items: u32,
    pub customers_per_district: u32,
    pub orders_per_district: u32,
}

impl TpccPopulation {
    pub const STANDARD: TpccPopulation = TpccPopulation {
        items: 100_000,
        customers_per_district: 3000,
        orders_per_district: 3000,
    };
    pub const REDUCED: TpccPopulation = TpccPopulation {
        items: 10_000,
        customers_per_district: 300,
        orders_per_district: 300,
    };
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub benchmark: Benchmark,
    pub scale_factor: usize,
    pub n_workers: usize,
    pub mix: Vec<(String, u32)>,
    pub formulation: Formulation,
    /// Smallbank destinations per multi-transfer.
    pub txn_size: usize,
    /// TPC-C probability, in percent, that a stock item is supplied by a
    /// remote warehouse. Unset means the standard 1%.
    pub remote_pct: Option<f64>,
    /// TPC-C probability of a remote customer in payment, in percent.
    pub remote_customer_pct: f64,
    pub dest_strategy: DestStrategy,
    /// Partitions spanned by round-robin destination strategies; defaults to
    /// all of them.
    pub span: Option<usize>,
    pub zipfian: f64,
    /// Per stock-update spin in TPC-C, in microseconds.
    pub delay_us: Option<(u64, u64)>,
    /// Random numbers generated by the exchange's risk simulation.
    pub simrisk_load: u64,
    /// Exchange providers, orders per provider and scan window.
    pub providers: usize,
    pub orders_per_provider: u32,
    pub scan_window: usize,
    /// Logical time for which a provider's cached risk stays valid.
    pub risk_cache_period: u64,
    pub tpcc: TpccPopulation,
    /// Fixed new-order shape (local items, remote items) without rollbacks.
    pub new_order_shape: Option<(usize, usize)>,
    pub seed: u64,
}

impl WorkloadSpec {
    pub fn new(benchmark: Benchmark) -> Self {
        WorkloadSpec {
            benchmark,
            scale_factor: match benchmark {
                Benchmark::Smallbank => 7,
                Benchmark::Tpcc | Benchmark::Ycsb => 4,
                Benchmark::Exchange | Benchmark::Noop => 1,
            },
            n_workers: 1,
            mix: benchmark.default_mix(),
            formulation: benchmark.formulations()[0],
            txn_size: 1,
            remote_pct: None,
            remote_customer_pct: 15.0,
            dest_strategy: DestStrategy::AllRemote,
            span: None,
            zipfian: 0.0,
            delay_us: None,
            simrisk_load: 0,
            providers: 15,
            orders_per_provider: 30_000,
            scan_window: 800,
            risk_cache_period: 0,
            tpcc: TpccPopulation::REDUCED,
            new_order_shape: None,
            seed: 42,
        }
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        let sum: u32 = self.mix.iter().map(|(_, p)| p).sum();
        if sum != 100 {
            return Err(SpecError::MixSum(sum));
        }
        let known = self.benchmark.transactions();
        if let Some((n, _)) = self.mix.iter().find(|(n, _)| !known.contains(&n.as_str())) {
            return Err(SpecError::MixEntry(n.clone()));
        }
        if self.txn_size < 1 {
            return Err(SpecError::Invalid("txn_size must be at least 1".into()));
        }
        if self.scale_factor < 1 {
            return Err(SpecError::Invalid("scale factor must be at least 1".into()));
        }
        if self.n_workers < 1 {
            return Err(SpecError::Invalid("at least one worker is needed".into()));
        }
        if !self.benchmark.formulations().contains(&self.formulation) {
            return Err(SpecError::Invalid(format!(
                "formulation {} does not apply to {}",
                self.formulation, self.benchmark
            )));
        }
        if let Some(p) = self.remote_pct {
            if !(0.0..=100.0).contains(&p) {
                return Err(SpecError::Invalid(format!("remote percentage {p} out of range")));
            }
        }
        if !(0.0..=100.0).contains(&self.remote_customer_pct) {
            return Err(SpecError::Invalid("remote customer percentage out of range".into()));
        }
        if self.zipfian < 0.0 || !self.zipfian.is_finite() {
            return Err(SpecError::Invalid("zipfian exponent must be non-negative".into()));
        }
        if self.span == Some(0) {
            return Err(SpecError::Invalid("span must be at least 1".into()));
        }
        if self.benchmark == Benchmark::Ycsb && self.scale_factor * 10_000 < 10 {
            return Err(SpecError::Invalid("ycsb needs at least 10 keys".into()));
        }
        if self.benchmark == Benchmark::Exchange && self.providers == 0 {
            return Err(SpecError::Invalid("exchange needs at least one provider".into()));
        }
        if self.benchmark == Benchmark::Tpcc && self.tpcc.items < 15 {
            return Err(SpecError::Invalid("tpcc needs at least 15 items".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for f in Formulation::ALL {
            assert_eq!(f.name().parse::<Formulation>().unwrap(), *f);
        }
        for d in DestStrategy::ALL {
            assert_eq!(d.to_string().parse::<DestStrategy>().unwrap(), *d);
        }
        assert!("bogus".parse::<Benchmark>().is_err());
    }

    #[test]
    fn default_specs_are_valid() {
        for b in Benchmark::ALL {
            WorkloadSpec::new(*b).validate().unwrap();
        }
    }

    #[test]
    fn mix_must_sum_to_100() {
        let mut s = WorkloadSpec::new(Benchmark::Tpcc);
        s.mix = parse_mix("new_order=50,payment=40").unwrap();
        assert_eq!(s.validate(), Err(SpecError::MixSum(90)));
        s.mix = parse_mix("new_order=50,bogus=50").unwrap();
        assert_eq!(s.validate(), Err(SpecError::MixEntry("bogus".into())));
    }

    #[test]
    fn txn_size_at_least_one() {
        let mut s = WorkloadSpec::new(Benchmark::Smallbank);
        s.txn_size = 0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn formulation_must_fit_benchmark() {
        let mut s = WorkloadSpec::new(Benchmark::Tpcc);
        s.formulation = Formulation::Opt;
        assert!(s.validate().is_err());
    }

    #[test]
    fn ranges() {
        assert_eq!(parse_range("300:400").unwrap(), (300, 400));
        assert!(parse_range("400:300").is_err());
        assert!(parse_range("300").is_err());
    }
}

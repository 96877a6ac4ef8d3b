//! Deployment plans: how reactors map onto containers and executors.
//!
//! Plans are JSON documents. Unknown fields are rejected.
//!
//! ```json
//! {
//!   "strategy_label": "s3",
//!   "router": "affinity",
//!   "containers": [
//!     { "id": 0, "executors": [ { "id": 0, "mpl": 1 } ] },
//!     { "id": 1, "executors": [ { "id": 1, "mpl": 1, "core": 1 } ] }
//!   ],
//!   "reactor_map": [
//!     { "prefix": "customer-", "from": 0, "to": 1000, "container": 0, "executor": 0 },
//!     { "reactor": "exchange", "container": 1 }
//!   ]
//! }
//! ```
//!
//! A `reactor_map` entry names either one reactor (`reactor`) or the
//! reactors `prefix` + n for n in `from..to`. Executor ids are unique across
//! the whole plan. Without an `executor`, a reactor's root transactions under
//! the affinity router go to executor `index mod n` of its container, where
//! `index` is the reactor's declaration position.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RouterPolicy {
    RoundRobin,
    Affinity,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExecutorSpec {
    pub id: u32,
    #[serde(default = "default_mpl")]
    pub mpl: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub core: Option<usize>,
}

fn default_mpl() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContainerSpec {
    pub id: u32,
    pub executors: Vec<ExecutorSpec>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReactorMapping {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reactor: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prefix: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to: Option<u64>,
    pub container: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub executor: Option<u32>,
}

impl ReactorMapping {
    fn names(&self) -> Result<Vec<String>, ConfigError> {
        match (&self.reactor, &self.prefix, self.from, self.to) {
            (Some(name), None, None, None) => Ok(vec![name.clone()]),
            (None, Some(prefix), Some(from), Some(to)) if from < to => {
                Ok((from..to).map(|n| format!("{prefix}{n}")).collect())
            }
            _ => Err(ConfigError::Schema(
                "reactor_map entry needs either `reactor` or `prefix`+`from`<`to`".into(),
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeploymentPlan {
    #[serde(default)]
    pub strategy_label: String,
    pub router: RouterPolicy,
    pub containers: Vec<ContainerSpec>,
    pub reactor_map: Vec<ReactorMapping>,
}

/// Where one reactor lives.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Placement {
    /// Position of the container in `containers`.
    pub container: usize,
    /// Position of the executor within its container, if pinned.
    pub executor: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Strategy {
    /// One container, round-robin routing.
    S1,
    /// One container, affinity routing.
    S2,
    /// One container per executor.
    S3,
}

impl std::str::FromStr for Strategy {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "s1" | "shared-everything-without-affinity" => Ok(Strategy::S1),
            "s2" | "shared-everything-with-affinity" => Ok(Strategy::S2),
            "s3" | "shared-nothing" => Ok(Strategy::S3),
            other => Err(ConfigError::Schema(format!("unknown strategy {other}"))),
        }
    }
}

pub fn parse_plan(doc: &str) -> Result<DeploymentPlan, ConfigError> {
    let plan: DeploymentPlan =
        serde_json::from_str(doc).map_err(|e| ConfigError::Schema(e.to_string()))?;
    plan.validate()?;
    Ok(plan)
}

impl DeploymentPlan {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.containers.is_empty() {
            return Err(ConfigError::Schema("plan has no containers".into()));
        }
        let mut container_ids = HashSet::new();
        let mut executor_ids = HashSet::new();
        for c in &self.containers {
            if !container_ids.insert(c.id) {
                return Err(ConfigError::Schema(format!("duplicate container id {}", c.id)));
            }
            if c.executors.is_empty() {
                return Err(ConfigError::Schema(format!("container {} has no executors", c.id)));
            }
            for e in &c.executors {
                if !executor_ids.insert(e.id) {
                    return Err(ConfigError::Schema(format!("duplicate executor id {}", e.id)));
                }
                if e.mpl == 0 {
                    return Err(ConfigError::Schema(format!("executor {} has mpl 0", e.id)));
                }
            }
        }
        self.placements().map(|_| ())
    }

    fn container_index(&self, id: u32) -> Option<usize> {
        self.containers.iter().position(|c| c.id == id)
    }

    /// Expands `reactor_map` into per-name placements.
    pub fn placements(&self) -> Result<HashMap<String, Placement>, ConfigError> {
        let mut out = HashMap::new();
        for m in &self.reactor_map {
            let container = self.container_index(m.container).ok_or_else(|| {
                ConfigError::Schema(format!("reactor_map refers to unknown container {}", m.container))
            })?;
            let executor = match m.executor {
                None => None,
                Some(eid) => Some(
                    self.containers[container]
                        .executors
                        .iter()
                        .position(|e| e.id == eid)
                        .ok_or(ConfigError::DanglingExecutor {
                            container: m.container,
                            executor: eid,
                        })?,
                ),
            };
            for name in m.names()? {
                if out
                    .insert(name.clone(), Placement { container, executor })
                    .is_some()
                {
                    return Err(ConfigError::DoubleMapping(name));
                }
            }
        }
        Ok(out)
    }

    pub fn executor_count(&self) -> usize {
        self.containers.iter().map(|c| c.executors.len()).sum()
    }

    pub fn with_mpl(mut self, mpl: usize) -> Self {
        for c in &mut self.containers {
            for e in &mut c.executors {
                e.mpl = mpl.max(1);
            }
        }
        self
    }

    /// Pins executor `n` (in plan order) to core `n mod cores`.
    pub fn with_pinning(mut self, cores: usize) -> Self {
        let mut n = 0;
        for c in &mut self.containers {
            for e in &mut c.executors {
                e.core = Some(n % cores.max(1));
                n += 1;
            }
        }
        self
    }
}

/// Splits `name` into a prefix and a decimal suffix without leading zeros.
fn split_numbered(name: &str) -> Option<(&str, u64)> {
    let digits = name.len() - name.bytes().rev().take_while(u8::is_ascii_digit).count();
    let (prefix, num) = name.split_at(digits);
    if num.is_empty() || (num.len() > 1 && num.starts_with('0')) {
        return None;
    }
    num.parse().ok().map(|n| (prefix, n))
}

/// Emits compact map entries, merging runs of `prefix{n}` names with
/// consecutive n and identical placement.
fn compress(assign: &[(&str, u32, Option<u32>)]) -> Vec<ReactorMapping> {
    let mut out: Vec<ReactorMapping> = Vec::new();
    for &(name, container, executor) in assign {
        if let Some((prefix, n)) = split_numbered(name) {
            if let Some(last) = out.last_mut() {
                if last.prefix.as_deref() == Some(prefix)
                    && last.to == Some(n)
                    && last.container == container
                    && last.executor == executor
                {
                    last.to = Some(n + 1);
                    continue;
                }
            }
            out.push(ReactorMapping {
                reactor: None,
                prefix: Some(prefix.to_string()),
                from: Some(n),
                to: Some(n + 1),
                container,
                executor,
            });
        } else {
            out.push(ReactorMapping {
                reactor: Some(name.to_string()),
                prefix: None,
                from: None,
                to: None,
                container,
                executor,
            });
        }
    }
    // Single-name ranges read better as plain names.
    for m in &mut out {
        if let (Some(p), Some(f), Some(t)) = (&m.prefix, m.from, m.to) {
            if t == f + 1 {
                m.reactor = Some(format!("{p}{f}"));
                m.prefix = None;
                m.from = None;
                m.to = None;
            }
        }
    }
    out
}

/// Canonical plans for the three deployment strategies. Reactors are
/// range-partitioned in declaration order: reactor i of n goes to partition
/// `i * parts / n`.
pub fn build_strategy(strategy: Strategy, n_executors: usize, reactors: &[String]) -> DeploymentPlan {
    let n = n_executors.max(1);
    let part = |i: usize| (i * n / reactors.len().max(1)) as u32;
    let (containers, assign, router, label): (Vec<ContainerSpec>, Vec<_>, _, _) = match strategy {
        Strategy::S1 | Strategy::S2 => {
            let executors = (0..n as u32)
                .map(|id| ExecutorSpec { id, mpl: 1, core: None })
                .collect();
            let affinity = strategy == Strategy::S2;
            let assign = reactors
                .iter()
                .enumerate()
                .map(|(i, r)| (r.as_str(), 0, affinity.then(|| part(i))))
                .collect();
            let (router, label) = if affinity {
                (RouterPolicy::Affinity, "shared-everything-with-affinity")
            } else {
                (RouterPolicy::RoundRobin, "shared-everything-without-affinity")
            };
            (vec![ContainerSpec { id: 0, executors }], assign, router, label)
        }
        Strategy::S3 => {
            let containers = (0..n as u32)
                .map(|id| ContainerSpec {
                    id,
                    executors: vec![ExecutorSpec { id, mpl: 1, core: None }],
                })
                .collect();
            let assign = reactors
                .iter()
                .enumerate()
                .map(|(i, r)| (r.as_str(), part(i), Some(part(i))))
                .collect();
            (containers, assign, RouterPolicy::Affinity, "shared-nothing")
        }
    };
    DeploymentPlan {
        strategy_label: label.to_string(),
        router,
        containers,
        reactor_map: compress(&assign),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i}")).collect()
    }

    #[test]
    fn s3_partitions_ranges() {
        let plan = build_strategy(Strategy::S3, 7, &names("customer-", 7000));
        assert_eq!(plan.containers.len(), 7);
        assert!(plan.containers.iter().all(|c| c.executors.len() == 1));
        assert_eq!(plan.reactor_map.len(), 7);
        assert_eq!(plan.reactor_map[3].from, Some(3000));
        assert_eq!(plan.reactor_map[3].to, Some(4000));
        let p = plan.placements().unwrap();
        assert_eq!(p["customer-6999"].container, 6);
        assert_eq!(p["customer-1000"].container, 1);
    }

    #[test]
    fn s2_maps_warehouse_to_executor() {
        let plan = build_strategy(Strategy::S2, 4, &names("warehouse-", 4));
        assert_eq!(plan.router, RouterPolicy::Affinity);
        assert_eq!(plan.containers.len(), 1);
        let p = plan.placements().unwrap();
        for i in 0..4 {
            assert_eq!(p[&format!("warehouse-{i}")].executor, Some(i));
        }
    }

    #[test]
    fn s1_is_round_robin_single_container() {
        let plan = build_strategy(Strategy::S1, 1, &names("x", 3));
        assert_eq!(plan.router, RouterPolicy::RoundRobin);
        assert_eq!(plan.executor_count(), 1);
        assert!(plan.placements().unwrap().values().all(|p| p.executor.is_none()));
    }

    #[test]
    fn round_trip() {
        let mut reactors = vec!["exchange".to_string()];
        reactors.extend(names("provider-", 15));
        for s in [Strategy::S1, Strategy::S2, Strategy::S3] {
            let plan = build_strategy(s, 16, &reactors);
            assert_eq!(parse_plan(&plan.to_json()).unwrap(), plan);
        }
    }

    #[test]
    fn rejects_bad_documents() {
        let double = r#"{"router":"affinity","containers":[{"id":0,"executors":[{"id":0}]},{"id":1,"executors":[{"id":1}]}],
            "reactor_map":[{"reactor":"a","container":0},{"prefix":"a","from":0,"to":1,"container":1},{"reactor":"a0","container":0}]}"#;
        assert_eq!(parse_plan(double), Err(ConfigError::DoubleMapping("a0".into())));
        let dangling = r#"{"router":"affinity","containers":[{"id":0,"executors":[{"id":0}]},{"id":1,"executors":[{"id":1}]}],
            "reactor_map":[{"reactor":"a","container":0,"executor":1}]}"#;
        assert_eq!(
            parse_plan(dangling),
            Err(ConfigError::DanglingExecutor { container: 0, executor: 1 })
        );
        let unknown = r#"{"router":"affinity","containers":[{"id":0,"executors":[{"id":0}]}],"reactor_map":[],"extra":1}"#;
        assert!(matches!(parse_plan(unknown), Err(ConfigError::Schema(_))));
        let unknown_nested = r#"{"router":"affinity","containers":[{"id":0,"executors":[{"id":0,"threads":2}]}],"reactor_map":[]}"#;
        assert!(matches!(parse_plan(unknown_nested), Err(ConfigError::Schema(_))));
    }

    #[test]
    fn numbered_names_split() {
        assert_eq!(split_numbered("customer-12"), Some(("customer-", 12)));
        assert_eq!(split_numbered("w0"), Some(("w", 0)));
        assert_eq!(split_numbered("w01"), None);
        assert_eq!(split_numbered("exchange"), None);
    }
}

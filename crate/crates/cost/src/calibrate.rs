use std::collections::BTreeMap;

use reactordb_core::{CallMode, SubTxnProfile, TxnProfile};
use serde::{Deserialize, Serialize};

use crate::breakdown::decompose;
use crate::model::{CostParams, Link, Nanos};
use crate::CostError;

/// Parameters extracted from profiled runs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    /// Communication costs between containers; placement is left empty.
    pub params: CostParams,
    /// Mean processing time of each procedure, excluding its calls.
    pub processing: BTreeMap<String, Nanos>,
    /// Mean duration of each named timed section.
    pub sections: BTreeMap<String, Nanos>,
    /// Mean measured commit plus input-generation time.
    pub commit_plus_inputgen: Nanos,
    pub samples: usize,
}

impl Calibration {
    pub fn processing_of(&self, procedure: &str) -> Nanos {
        self.processing.get(procedure).copied().unwrap_or(0)
    }
}

#[derive(Default)]
struct Mean {
    sum: u128,
    n: u64,
}

impl Mean {
    fn add(&mut self, v: u64) {
        self.sum += v as u128;
        self.n += 1;
    }

    fn get(&self) -> Nanos {
        if self.n == 0 {
            0
        } else {
            (self.sum / self.n as u128) as Nanos
        }
    }
}

#[derive(Default)]
struct Acc {
    send: BTreeMap<(usize, usize), Mean>,
    recv: BTreeMap<(usize, usize), Mean>,
    processing: BTreeMap<String, Mean>,
    sections: BTreeMap<String, Mean>,
}

/// Averages communication and processing costs over committed profiles.
/// Processing time of a sub-transaction excludes its callees, the time spent
/// handing off remote calls and the time spent waiting for their results.
pub fn calibrate(profiles: &[TxnProfile]) -> Result<Calibration, CostError> {
    let mut acc = Acc::default();
    let mut cpi = Mean::default();
    for p in profiles.iter().filter(|p| p.committed) {
        cpi.add(decompose(p)?.commit_plus_inputgen);
        visit(&p.root, &mut acc);
    }
    if cpi.n == 0 {
        return Err(CostError::InsufficientSamples(format!(
            "{} profiles, none committed",
            profiles.len()
        )));
    }
    let links = |m: &BTreeMap<(usize, usize), Mean>| {
        m.iter()
            .map(|(&(from, to), v)| Link { from, to, ns: v.get() })
            .collect::<Vec<_>>()
    };
    let overall = |m: &BTreeMap<(usize, usize), Mean>| {
        let mut all = Mean::default();
        for v in m.values() {
            all.sum += v.sum;
            all.n += v.n;
        }
        all.get()
    };
    Ok(Calibration {
        params: CostParams {
            placement: BTreeMap::new(),
            default_send: overall(&acc.send),
            default_recv: overall(&acc.recv),
            send: links(&acc.send),
            recv: links(&acc.recv),
        },
        processing: acc.processing.iter().map(|(k, v)| (k.clone(), v.get())).collect(),
        sections: acc.sections.iter().map(|(k, v)| (k.clone(), v.get())).collect(),
        commit_plus_inputgen: cpi.get(),
        samples: cpi.n as usize,
    })
}

fn visit(p: &SubTxnProfile, acc: &mut Acc) {
    let mut excluded = 0u64;
    let mut measurable = true;
    for c in &p.calls {
        let Some(child) = c.child.as_deref() else {
            measurable = false;
            continue;
        };
        match c.mode {
            CallMode::Remote => {
                if c.get_start == 0 || c.resume < c.get_start {
                    measurable = false;
                } else {
                    // Samples are taken only while the caller was waiting,
                    // so that its own work does not delay the callee.
                    if c.awaited_immediately || c.get_start <= child.start {
                        acc.send
                            .entry((p.container, child.container))
                            .or_default()
                            .add(child.start.saturating_sub(c.call_start));
                    }
                    if c.get_start <= child.end {
                        acc.recv
                            .entry((child.container, p.container))
                            .or_default()
                            .add(c.resume.saturating_sub(child.end));
                    }
                    excluded += c.send_done.saturating_sub(c.call_start) + (c.resume - c.get_start);
                }
            }
            CallMode::Local | CallMode::Inline => excluded += child.end.saturating_sub(child.start),
        }
        visit(child, acc);
    }
    if measurable {
        acc.processing
            .entry(p.procedure.clone())
            .or_default()
            .add(p.end.saturating_sub(p.start).saturating_sub(excluded));
    }
    for s in &p.sections {
        acc.sections
            .entry(s.name.clone())
            .or_default()
            .add(s.end.saturating_sub(s.start));
    }
}

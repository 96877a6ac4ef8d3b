use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Durations are integral nanoseconds so that estimates are exact.
pub type Nanos = u64;

/// A fork-join sub-transaction: sequential logic with synchronous calls,
/// then one point at which `async_children` are sent in order, overlapped
/// with `p_ovp` and the `sync_ovp` calls, and finally a join.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForkJoinNode {
    pub reactor: usize,
    #[serde(default)]
    pub p_seq: Nanos,
    #[serde(default)]
    pub p_ovp: Nanos,
    #[serde(default)]
    pub sync_seq: Vec<ForkJoinNode>,
    #[serde(default, rename = "async")]
    pub async_children: Vec<ForkJoinNode>,
    #[serde(default)]
    pub sync_ovp: Vec<ForkJoinNode>,
}

impl ForkJoinNode {
    pub fn leaf(reactor: usize, p_seq: Nanos) -> Self {
        ForkJoinNode {
            reactor,
            p_seq,
            ..Default::default()
        }
    }

    pub fn seq(mut self, child: ForkJoinNode) -> Self {
        self.sync_seq.push(child);
        self
    }

    pub fn fork(mut self, child: ForkJoinNode) -> Self {
        self.async_children.push(child);
        self
    }

    pub fn ovp(mut self, child: ForkJoinNode) -> Self {
        self.sync_ovp.push(child);
        self
    }

    pub fn with_ovp(mut self, p_ovp: Nanos) -> Self {
        self.p_ovp = p_ovp;
        self
    }

    pub fn size(&self) -> usize {
        1 + self
            .sync_seq
            .iter()
            .chain(&self.async_children)
            .chain(&self.sync_ovp)
            .map(ForkJoinNode::size)
            .sum::<usize>()
    }

    pub fn depth(&self) -> usize {
        1 + self
            .sync_seq
            .iter()
            .chain(&self.async_children)
            .chain(&self.sync_ovp)
            .map(ForkJoinNode::depth)
            .max()
            .unwrap_or(0)
    }
}

/// Directed cost between two containers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Link {
    pub from: usize,
    pub to: usize,
    pub ns: Nanos,
}

/// Communication costs. `send` links are keyed caller to callee, `recv`
/// links callee to caller. Reactors in the same container communicate for
/// free; a reactor without a placement is alone in its own container.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostParams {
    #[serde(default)]
    pub placement: BTreeMap<usize, usize>,
    #[serde(default)]
    pub default_send: Nanos,
    #[serde(default)]
    pub default_recv: Nanos,
    #[serde(default)]
    pub send: Vec<Link>,
    #[serde(default)]
    pub recv: Vec<Link>,
}

impl CostParams {
    pub fn uniform(send: Nanos, recv: Nanos) -> Self {
        CostParams {
            default_send: send,
            default_recv: recv,
            ..Default::default()
        }
    }

    pub fn place(mut self, reactor: usize, container: usize) -> Self {
        self.placement.insert(reactor, container);
        self
    }

    pub fn container_of(&self, reactor: usize) -> ContainerRef {
        match self.placement.get(&reactor) {
            Some(&c) => ContainerRef::Placed(c),
            None => ContainerRef::Own(reactor),
        }
    }

    fn same_container(&self, a: usize, b: usize) -> bool {
        a == b || self.container_of(a) == self.container_of(b)
    }

    fn link(links: &[Link], from: ContainerRef, to: ContainerRef) -> Option<Nanos> {
        let (ContainerRef::Placed(f), ContainerRef::Placed(t)) = (from, to) else {
            return None;
        };
        links.iter().find(|l| l.from == f && l.to == t).map(|l| l.ns)
    }

    /// Cost for reactor `k` to send a call to reactor `to`.
    pub fn c_send(&self, k: usize, to: usize) -> Nanos {
        if self.same_container(k, to) {
            return 0;
        }
        Self::link(&self.send, self.container_of(k), self.container_of(to)).unwrap_or(self.default_send)
    }

    /// Cost for the result of a call on `from` to reach its caller `k`.
    pub fn c_recv(&self, from: usize, k: usize) -> Nanos {
        if self.same_container(from, k) {
            return 0;
        }
        Self::link(&self.recv, self.container_of(from), self.container_of(k)).unwrap_or(self.default_recv)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ContainerRef {
    Placed(usize),
    Own(usize),
}

pub fn estimate_latency(node: &ForkJoinNode, params: &CostParams) -> Nanos {
    predict_breakdown(node, params).total()
}

/// The terms of the latency equation for one node.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Prediction {
    /// Sequential processing plus the latency of synchronous sequential
    /// children.
    pub sync_execution: Nanos,
    pub c_s: Nanos,
    pub c_r: Nanos,
    /// The larger of the asynchronous branches and the overlapped work.
    pub async_execution: Nanos,
}

impl Prediction {
    pub fn total(&self) -> Nanos {
        self.sync_execution + self.c_s + self.c_r + self.async_execution
    }
}

/// Splits the estimate for `node` into its terms. Synchronous children are
/// expanded so that their own communication costs land in `c_s` and `c_r`
/// rather than in `sync_execution`.
pub fn predict_breakdown(node: &ForkJoinNode, params: &CostParams) -> Prediction {
    let k = node.reactor;
    let mut p = Prediction {
        sync_execution: node.p_seq,
        ..Default::default()
    };
    for c in &node.sync_seq {
        let sub = predict_breakdown(c, params);
        p.sync_execution += sub.sync_execution;
        p.async_execution += sub.async_execution;
        p.c_s += sub.c_s + params.c_send(k, c.reactor);
        p.c_r += sub.c_r + params.c_recv(c.reactor, k);
    }
    p.async_execution += overlap_max(node, params);
    p
}

fn overlap_max(node: &ForkJoinNode, params: &CostParams) -> Nanos {
    let k = node.reactor;
    let mut overlap = node.p_ovp;
    for c in &node.sync_ovp {
        overlap += estimate_latency(c, params) + params.c_send(k, c.reactor) + params.c_recv(c.reactor, k);
    }
    let mut sent = 0;
    let mut max = overlap;
    for c in &node.async_children {
        sent += params.c_send(k, c.reactor);
        max = max.max(estimate_latency(c, params) + params.c_recv(c.reactor, k) + sent);
    }
    max
}

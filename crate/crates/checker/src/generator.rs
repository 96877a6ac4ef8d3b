use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::history::{History, Item, Model, OpKind, SubTxnId, TraceOp, TxnId};

#[derive(Clone, Debug)]
pub struct GenConfig {
    pub max_txns: usize,
    pub max_reactors: usize,
    pub max_items: usize,
    pub max_depth: usize,
    pub max_top_level: usize,
    pub max_children: usize,
    pub max_ops_per_subtxn: usize,
    pub abort_prob: f64,
    /// Probability of interleaving individual operations rather than whole
    /// top-level sub-transactions.
    pub op_interleave_prob: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            max_txns: 5,
            max_reactors: 3,
            max_items: 4,
            max_depth: 2,
            max_top_level: 2,
            max_children: 2,
            max_ops_per_subtxn: 3,
            abort_prob: 0.1,
            op_interleave_prob: 0.5,
        }
    }
}

/// Random reactor-model histories.
///
/// Each transaction is a forest of sub-transactions executed depth first;
/// a transaction never performs two operations of the same kind on the same
/// item. Transactions are then interleaved either at the granularity of
/// top-level sub-transactions or of single operations.
pub struct HistoryGenerator {
    rng: ChaCha8Rng,
    cfg: GenConfig,
}

struct Step {
    kind: OpKind,
    sub: SubTxnId,
    reactor: usize,
    key: usize,
}

struct TxnPlan {
    /// Blocks of steps, one per top-level sub-transaction.
    blocks: Vec<Vec<Step>>,
    committed: bool,
}

impl HistoryGenerator {
    pub fn new(seed: u64, cfg: GenConfig) -> Self {
        HistoryGenerator {
            rng: ChaCha8Rng::seed_from_u64(seed),
            cfg,
        }
    }

    pub fn generate(&mut self) -> History {
        let n_txns = self.rng.gen_range(1..=self.cfg.max_txns);
        let n_reactors = self.rng.gen_range(1..=self.cfg.max_reactors);
        let n_items = self.rng.gen_range(1..=self.cfg.max_items);
        let mut parents = BTreeMap::new();
        let plans: Vec<TxnPlan> = (0..n_txns)
            .map(|t| self.plan_txn(t as TxnId + 1, n_reactors, n_items, &mut parents))
            .collect();

        let by_op = self.rng.gen_bool(self.cfg.op_interleave_prob);
        // Each transaction contributes a queue of units; a unit is a block or
        // a single step. The terminal is the final unit.
        let mut queues: Vec<Vec<Vec<&Step>>> = plans
            .iter()
            .map(|p| {
                if by_op {
                    p.blocks.iter().flatten().map(|s| vec![s]).collect()
                } else {
                    p.blocks.iter().map(|b| b.iter().collect()).collect()
                }
            })
            .collect();
        for q in &mut queues {
            q.reverse();
        }
        let mut done = vec![false; n_txns];
        let mut ops = Vec::new();
        let mut seq = 0u64;
        loop {
            let live: Vec<usize> = (0..n_txns).filter(|&t| !done[t]).collect();
            let Some(&t) = live.choose(&mut self.rng) else {
                break;
            };
            let txn = t as TxnId + 1;
            match queues[t].pop() {
                Some(unit) => {
                    for s in unit {
                        seq += 1;
                        ops.push(TraceOp::access(
                            seq,
                            s.kind,
                            txn,
                            s.sub,
                            s.reactor.to_string(),
                            Item::new("t", format!("x{}", s.key)),
                        ));
                    }
                }
                None => {
                    seq += 1;
                    ops.push(TraceOp::terminal(seq, txn, plans[t].committed));
                    done[t] = true;
                }
            }
        }
        History {
            ops,
            model: Model::Reactor,
            parents,
        }
    }

    fn plan_txn(
        &mut self,
        txn: TxnId,
        n_reactors: usize,
        n_items: usize,
        parents: &mut BTreeMap<(TxnId, SubTxnId), SubTxnId>,
    ) -> TxnPlan {
        let mut used = HashSet::new();
        let mut next_sub: SubTxnId = 0;
        let n_top = self.rng.gen_range(1..=self.cfg.max_top_level);
        let mut blocks = Vec::new();
        for _ in 0..n_top {
            let reactor = self.rng.gen_range(0..n_reactors);
            let mut steps = Vec::new();
            self.plan_sub(
                txn, None, reactor, 0, n_reactors, n_items, &mut next_sub, &mut used, parents,
                &mut steps,
            );
            if !steps.is_empty() {
                blocks.push(steps);
            }
        }
        TxnPlan {
            blocks,
            committed: !self.rng.gen_bool(self.cfg.abort_prob),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn plan_sub(
        &mut self,
        txn: TxnId,
        parent: Option<SubTxnId>,
        reactor: usize,
        depth: usize,
        n_reactors: usize,
        n_items: usize,
        next_sub: &mut SubTxnId,
        used: &mut HashSet<(usize, usize, OpKind)>,
        parents: &mut BTreeMap<(TxnId, SubTxnId), SubTxnId>,
        out: &mut Vec<Step>,
    ) {
        let sub = *next_sub;
        *next_sub += 1;
        if let Some(p) = parent {
            parents.insert((txn, sub), p);
        }
        let n_ops = self.rng.gen_range(0..=self.cfg.max_ops_per_subtxn);
        let n_children = if depth < self.cfg.max_depth {
            self.rng.gen_range(0..=self.cfg.max_children)
        } else {
            0
        };
        // true = own op, false = child call
        let mut actions: Vec<bool> = std::iter::repeat_n(true, n_ops)
            .chain(std::iter::repeat_n(false, n_children))
            .collect();
        actions.shuffle(&mut self.rng);
        for own in actions {
            if own {
                let key = self.rng.gen_range(0..n_items);
                let kind = if self.rng.gen_bool(0.5) {
                    OpKind::Read
                } else {
                    OpKind::Write
                };
                if used.insert((reactor, key, kind)) {
                    out.push(Step {
                        kind,
                        sub,
                        reactor,
                        key,
                    });
                }
            } else {
                let child = self.rng.gen_range(0..n_reactors);
                self.plan_sub(
                    txn,
                    Some(sub),
                    child,
                    depth + 1,
                    n_reactors,
                    n_items,
                    next_sub,
                    used,
                    parents,
                    out,
                );
            }
        }
    }
}

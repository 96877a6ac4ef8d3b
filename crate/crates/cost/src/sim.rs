//! Discrete-event execution of a fork-join tree under unlimited
//! parallelism. Each node has a main thread for its sequential part, an
//! overlap thread for the work done after the fork, and one sender that
//! dispatches asynchronous children one after another.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::model::{CostParams, ForkJoinNode, Nanos};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Role {
    Seq(usize),
    Ovp(usize),
    Async,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Event {
    Start(usize),
    SeqStep(usize, usize),
    OvpStep(usize, usize),
    Send(usize, usize),
    Joined(usize),
    Done(usize),
}

struct Flat<'a> {
    node: &'a ForkJoinNode,
    parent: Option<(usize, Role)>,
    seq: Vec<usize>,
    ovp: Vec<usize>,
    asyncs: Vec<usize>,
    pending: usize,
}

fn flatten<'a>(node: &'a ForkJoinNode, parent: Option<(usize, Role)>, out: &mut Vec<Flat<'a>>) -> usize {
    let id = out.len();
    out.push(Flat {
        node,
        parent,
        seq: Vec::new(),
        ovp: Vec::new(),
        asyncs: Vec::new(),
        pending: node.async_children.len() + 1,
    });
    for (i, c) in node.sync_seq.iter().enumerate() {
        let cid = flatten(c, Some((id, Role::Seq(i))), out);
        out[id].seq.push(cid);
    }
    for (i, c) in node.sync_ovp.iter().enumerate() {
        let cid = flatten(c, Some((id, Role::Ovp(i))), out);
        out[id].ovp.push(cid);
    }
    for c in &node.async_children {
        let cid = flatten(c, Some((id, Role::Async)), out);
        out[id].asyncs.push(cid);
    }
    id
}

/// Completion time of `node` started at time zero.
pub fn simulate_forkjoin(node: &ForkJoinNode, params: &CostParams) -> Nanos {
    let mut nodes = Vec::new();
    flatten(node, None, &mut nodes);
    let mut queue = BinaryHeap::new();
    let mut order = 0u64;
    let mut push = |q: &mut BinaryHeap<_>, t: Nanos, e: Event| {
        order += 1;
        q.push(Reverse((t, order, e)));
    };
    push(&mut queue, 0, Event::Start(0));
    let reactor = |nodes: &[Flat], i: usize| nodes[i].node.reactor;

    while let Some(Reverse((now, _, ev))) = queue.pop() {
        match ev {
            Event::Start(n) => push(&mut queue, now + nodes[n].node.p_seq, Event::SeqStep(n, 0)),
            Event::SeqStep(n, i) => match nodes[n].seq.get(i) {
                Some(&c) => {
                    let cost = params.c_send(reactor(&nodes, n), reactor(&nodes, c));
                    push(&mut queue, now + cost, Event::Start(c));
                }
                None => {
                    push(&mut queue, now, Event::Send(n, 0));
                    push(&mut queue, now + nodes[n].node.p_ovp, Event::OvpStep(n, 0));
                }
            },
            Event::OvpStep(n, i) => match nodes[n].ovp.get(i) {
                Some(&c) => {
                    let cost = params.c_send(reactor(&nodes, n), reactor(&nodes, c));
                    push(&mut queue, now + cost, Event::Start(c));
                }
                None => push(&mut queue, now, Event::Joined(n)),
            },
            Event::Send(n, i) => {
                if let Some(&c) = nodes[n].asyncs.get(i) {
                    let at = now + params.c_send(reactor(&nodes, n), reactor(&nodes, c));
                    push(&mut queue, at, Event::Start(c));
                    push(&mut queue, at, Event::Send(n, i + 1));
                }
            }
            Event::Joined(n) => {
                nodes[n].pending -= 1;
                if nodes[n].pending == 0 {
                    push(&mut queue, now, Event::Done(n));
                }
            }
            Event::Done(n) => {
                let Some((p, role)) = nodes[n].parent else {
                    return now;
                };
                let at = now + params.c_recv(reactor(&nodes, n), reactor(&nodes, p));
                let next = match role {
                    Role::Seq(i) => Event::SeqStep(p, i + 1),
                    Role::Ovp(i) => Event::OvpStep(p, i + 1),
                    Role::Async => Event::Joined(p),
                };
                push(&mut queue, at, next);
            }
        }
    }
    unreachable!("the root always completes")
}

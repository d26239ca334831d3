//! Random small histories for oracle and property tests.
//!
//! Read values come from replaying the transactions in a random serial
//! order, then some reads are perturbed to older or foreign values, and the
//! operations are interleaved across processes at random. The mix yields
//! serializable, non-strict, and non-serializable histories.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::history::{Event, EventKind, History, ItemKind, Op, OpKind, TxnId};
use crate::value::Value;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorpusConfig {
    pub max_txns: usize,
    pub max_keys: usize,
    pub max_ops: usize,
    pub max_procs: usize,
    /// Probability that a read is replaced by a stale or foreign value.
    pub perturb: f64,
    /// Allow counter items alongside kv items.
    pub counters: bool,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig { max_txns: 6, max_keys: 3, max_ops: 3, max_procs: 3, perturb: 0.25, counters: true }
    }
}

impl CorpusConfig {
    /// Single-operation transactions over kv items.
    pub fn single_op() -> Self {
        CorpusConfig { max_ops: 1, counters: false, ..Self::default() }
    }
}

const VALUES: [&str; 3] = ["a", "b", "c"];

pub fn random_history(seed: u64, cfg: &CorpusConfig) -> History {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nkeys = rng.gen_range(1..=cfg.max_keys.max(1));
    let mut items = BTreeMap::new();
    for k in 0..nkeys {
        let kind = if cfg.counters && rng.gen_bool(0.4) { ItemKind::Counter } else { ItemKind::Kv };
        items.insert(format!("k{k}"), kind);
    }
    let keys: Vec<String> = items.keys().cloned().collect();
    let ntx = rng.gen_range(1..=cfg.max_txns.max(1));

    // Transaction bodies.
    let mut bodies: Vec<Vec<Op>> = Vec::new();
    for _ in 0..ntx {
        let nops = rng.gen_range(1..=cfg.max_ops.max(1));
        let mut ops = Vec::new();
        for _ in 0..nops {
            let key = keys[rng.gen_range(0..keys.len())].clone();
            let read = rng.gen_bool(0.5);
            let op = match (items[&key], read) {
                (ItemKind::Counter, true) => Op { kind: OpKind::Read, key, arg: None, ret: None },
                (ItemKind::Counter, false) => {
                    let kind = if rng.gen_bool(0.7) { OpKind::Inc } else { OpKind::Dec };
                    Op { kind, key, arg: None, ret: None }
                }
                (_, true) => Op { kind: OpKind::Get, key, arg: None, ret: None },
                (_, false) => {
                    let v = Value::text(VALUES[rng.gen_range(0..VALUES.len())]);
                    Op { kind: OpKind::Put, key, arg: Some(v), ret: None }
                }
            };
            ops.push(op);
        }
        bodies.push(ops);
    }

    // Read values from a random serial replay, with perturbations.
    let mut order: Vec<usize> = (0..ntx).collect();
    order.shuffle(&mut rng);
    let mut store: BTreeMap<String, Value> = items.iter().map(|(k, kind)| (k.clone(), kind.initial())).collect();
    let mut past: BTreeMap<String, Vec<Value>> = store.iter().map(|(k, v)| (k.clone(), vec![v.clone()])).collect();
    for &t in &order {
        for op in bodies[t].iter_mut() {
            let cur = store[&op.key].clone();
            match op.kind {
                OpKind::Read | OpKind::Get => {
                    let mut v = cur;
                    if rng.gen_bool(cfg.perturb) {
                        v = if items[&op.key] == ItemKind::Counter {
                            Value::Int(v.as_int().unwrap_or(0) + rng.gen_range(-1..=1))
                        } else {
                            let hist = &past[&op.key];
                            if rng.gen_bool(0.5) {
                                hist[rng.gen_range(0..hist.len())].clone()
                            } else {
                                Value::text(VALUES[rng.gen_range(0..VALUES.len())])
                            }
                        };
                    }
                    op.ret = Some(v);
                }
                OpKind::Put | OpKind::Write => {
                    store.insert(op.key.clone(), op.arg.clone().expect("put"));
                }
                OpKind::Inc | OpKind::Dec => {
                    store.insert(op.key.clone(), Value::Int(cur.as_int().unwrap_or(0) + op.kind.delta()));
                }
            }
            if op.kind.is_update() {
                past.get_mut(&op.key).expect("key").push(store[&op.key].clone());
            }
        }
    }

    // Assign transactions to processes and interleave their events.
    let nprocs = rng.gen_range(1..=cfg.max_procs.max(1));
    let mut queues: Vec<Vec<(usize, usize, EventKind)>> = vec![Vec::new(); nprocs];
    for (t, body) in bodies.iter().enumerate() {
        let p = rng.gen_range(0..nprocs);
        for i in 0..body.len() {
            queues[p].push((t, i, EventKind::Invocation));
            queues[p].push((t, i, EventKind::Response));
        }
    }
    for q in queues.iter_mut() {
        q.reverse();
    }
    let mut events = Vec::new();
    let mut seq = 0;
    loop {
        let live: Vec<usize> = (0..nprocs).filter(|&p| !queues[p].is_empty()).collect();
        let Some(&p) = live.choose(&mut rng) else { break };
        let (t, i, kind) = queues[p].pop().expect("live");
        seq += 1;
        let mut op = bodies[t][i].clone();
        if kind == EventKind::Invocation {
            op.ret = None;
        }
        events.push(Event { seq, kind, proc: format!("p{p}"), txn: TxnId(t as u64 + 1), op });
    }
    History::new(events, items).expect("generated histories are well formed")
}

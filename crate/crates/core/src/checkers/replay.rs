//! Compact sequential semantics shared by the search-based checkers.

use std::collections::HashMap;

use crate::history::{History, ItemKind, OpKind};
use crate::value::Value;

#[derive(Debug, Clone)]
enum Step {
    Read(usize, Value),
    Set(usize, Value),
    Add(usize, i64),
}

/// Item values indexed by key slot.
pub(crate) type State = Vec<Value>;

/// A history compiled to per-transaction step lists over key slots.
#[derive(Debug, Clone)]
pub(crate) struct Program {
    initial: State,
    steps: Vec<Vec<Step>>,
    /// Net effect per transaction: (slot, Some(value) for set | None, delta).
    effects: Vec<Vec<(usize, Option<Value>, i64)>>,
    /// Slots updated by each transaction.
    pub writes: Vec<Vec<usize>>,
    /// First external read of each slot with the value it must observe.
    pub ext_reads: Vec<Vec<(usize, Value)>>,
    /// Register slots whose written values are pairwise distinct and never
    /// equal to the initial value, so an overwritten value cannot reappear.
    pub unique_slot: Vec<bool>,
}

fn initial_of(keys: &[String], h: &History, k: usize) -> Value {
    h.item_kind(&keys[k]).initial()
}

impl Program {
    pub fn compile(h: &History) -> Program {
        let keys = h.keys();
        let slot: HashMap<&str, usize> = keys.iter().enumerate().map(|(i, k)| (k.as_str(), i)).collect();
        let initial = keys.iter().map(|k| h.item_kind(k).initial()).collect();
        let mut steps = Vec::new();
        let mut effects = Vec::new();
        let mut writes = Vec::new();
        let mut ext_reads = Vec::new();
        for t in h.txns() {
            let mut er: Vec<(usize, Value)> = Vec::new();
            let mut s = Vec::new();
            let mut eff: Vec<(usize, Option<Value>, i64)> = Vec::new();
            for op in &t.ops {
                let k = slot[op.key.as_str()];
                let counter = h.item_kind(&op.key) == ItemKind::Counter;
                match op.kind {
                    OpKind::Read | OpKind::Get => {
                        if !eff.iter().any(|e| e.0 == k) && !er.iter().any(|e| e.0 == k) {
                            er.push((k, op.ret.clone().expect("validated")));
                        }
                        s.push(Step::Read(k, op.ret.clone().expect("validated")));
                    }
                    OpKind::Inc | OpKind::Dec => {
                        s.push(Step::Add(k, op.kind.delta()));
                        match eff.iter_mut().find(|e| e.0 == k) {
                            Some(e) => e.2 += op.kind.delta(),
                            None => eff.push((k, None, op.kind.delta())),
                        }
                    }
                    OpKind::Write | OpKind::Put => {
                        debug_assert!(!counter);
                        let v = op.arg.clone().expect("validated");
                        s.push(Step::Set(k, v.clone()));
                        match eff.iter_mut().find(|e| e.0 == k) {
                            Some(e) => e.1 = Some(v),
                            None => eff.push((k, Some(v), 0)),
                        }
                    }
                }
            }
            let mut w: Vec<usize> = eff.iter().map(|e| e.0).collect();
            w.sort_unstable();
            steps.push(s);
            effects.push(eff);
            writes.push(w);
            ext_reads.push(er);
        }
        let unique_slot = (0..keys.len())
            .map(|k| {
                if h.item_kind(&keys[k]) == ItemKind::Counter {
                    return false;
                }
                let init = initial_of(&keys, h, k);
                let mut seen: Vec<&Value> = vec![&init];
                let mut ok = true;
                for eff in &effects {
                    for (slot, v, _) in eff {
                        if *slot == k {
                            let v = v.as_ref().expect("register effect");
                            if seen.contains(&v) {
                                ok = false;
                            }
                            seen.push(v);
                        }
                    }
                }
                ok
            })
            .collect();
        Program { initial, steps, effects, writes, ext_reads, unique_slot }
    }

    pub fn initial(&self) -> State {
        self.initial.clone()
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    /// True when every read of `txn`, executed against `snapshot` with its
    /// own earlier writes layered on top, returns the recorded value.
    pub fn reads_match(&self, txn: usize, snapshot: &State) -> bool {
        let mut local: Vec<(usize, Value)> = Vec::new();
        let lookup = |local: &Vec<(usize, Value)>, k: usize| -> Value {
            local.iter().rev().find(|(s, _)| *s == k).map_or_else(|| snapshot[k].clone(), |(_, v)| v.clone())
        };
        for step in &self.steps[txn] {
            match step {
                Step::Read(k, want) => {
                    if lookup(&local, *k) != *want {
                        return false;
                    }
                }
                Step::Set(k, v) => local.push((*k, v.clone())),
                Step::Add(k, d) => {
                    let cur = lookup(&local, *k).as_int().unwrap_or(0);
                    local.push((*k, Value::Int(cur + d)));
                }
            }
        }
        true
    }

    /// Applies the transaction's net effects to `state`.
    pub fn apply(&self, txn: usize, state: &mut State) {
        for (k, set, delta) in &self.effects[txn] {
            if let Some(v) = set {
                state[*k] = v.clone();
            } else {
                let cur = state[*k].as_int().unwrap_or(0);
                state[*k] = Value::Int(cur + delta);
            }
        }
    }
}

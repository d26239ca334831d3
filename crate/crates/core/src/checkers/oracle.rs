//! Exhaustive permutation oracle for serializability.
//!
//! Deliberately shares no code with the search checkers: it replays every
//! permutation op by op with its own tiny interpreter.

use std::collections::HashMap;

use crate::history::{derive_realtime, History, ItemKind, OpKind, Transaction};
use crate::value::Value;

pub const ORACLE_LIMIT: usize = 8;

fn legal(h: &History, order: &[&Transaction]) -> bool {
    let mut store: HashMap<&str, Value> = HashMap::new();
    for t in order {
        for op in &t.ops {
            let key = op.key.as_str();
            let cur = store.get(key).cloned().unwrap_or_else(|| match h.item_kind(key) {
                ItemKind::Counter => Value::Int(0),
                _ => Value::Nil,
            });
            match op.kind {
                OpKind::Read | OpKind::Get => {
                    if op.ret.as_ref() != Some(&cur) {
                        return false;
                    }
                }
                OpKind::Write | OpKind::Put => {
                    store.insert(key, op.arg.clone().unwrap_or(Value::Nil));
                }
                OpKind::Inc => {
                    store.insert(key, Value::Int(cur.as_int().unwrap_or(0) + 1));
                }
                OpKind::Dec => {
                    store.insert(key, Value::Int(cur.as_int().unwrap_or(0) - 1));
                }
            }
        }
    }
    true
}

/// First legal permutation in lexicographic index order, optionally
/// restricted to orders that extend real time.
pub(crate) fn first_legal(h: &History, realtime: bool) -> Option<Vec<usize>> {
    let n = h.txns().len();
    let rt = derive_realtime(h);
    let mut perm: Vec<usize> = (0..n).collect();
    loop {
        let respects =
            !realtime || (0..n).all(|i| (i + 1..n).all(|j| !rt.contains(h.txns()[perm[j]].id, h.txns()[perm[i]].id)));
        if respects {
            let order: Vec<&Transaction> = perm.iter().map(|&i| &h.txns()[i]).collect();
            if legal(h, &order) {
                return Some(perm);
            }
        }
        if !next_permutation(&mut perm) {
            return None;
        }
    }
}

fn next_permutation(p: &mut [usize]) -> bool {
    if p.len() < 2 {
        return false;
    }
    let Some(i) = (0..p.len() - 1).rev().find(|&i| p[i] < p[i + 1]) else { return false };
    let j = (i + 1..p.len()).rev().find(|&j| p[j] > p[i]).expect("exists");
    p.swap(i, j);
    p[i + 1..].reverse();
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn permutations_are_exhaustive() {
        let mut p = vec![0, 1, 2, 3];
        let mut count = 1;
        while next_permutation(&mut p) {
            count += 1;
        }
        assert_eq!(count, 24);
        assert_eq!(p, vec![3, 2, 1, 0]);
    }
}

//! Quiescent convergence on a finite history.

use std::collections::BTreeMap;

use crate::history::{History, TxnId};
use crate::value::Value;
use crate::verdict::{Anomaly, AnomalyKind};

/// For each key, the last read of every session invoked after the key's
/// final update response must return one common value.
pub(crate) fn quiescent_divergence(h: &History) -> Option<Anomaly> {
    let mut last_update: BTreeMap<&str, u64> = BTreeMap::new();
    for t in h.txns() {
        for op in t.ops.iter().filter(|o| o.kind.is_update()) {
            let e = last_update.entry(op.key.as_str()).or_insert(0);
            *e = (*e).max(op.res);
        }
    }
    // key -> proc -> (inv seq, txn, value) of the latest quiescent read
    let mut finals: BTreeMap<&str, BTreeMap<&str, (u64, TxnId, &Value)>> = BTreeMap::new();
    for t in h.txns() {
        for op in t.ops.iter().filter(|o| o.kind.is_read()) {
            let after = last_update.get(op.key.as_str()).copied().unwrap_or(0);
            if op.inv <= after {
                continue;
            }
            let ret = op.ret.as_ref().expect("validated");
            let slot = finals.entry(op.key.as_str()).or_default();
            match slot.get(t.proc.as_str()) {
                Some((inv, _, _)) if *inv > op.inv => {}
                _ => {
                    slot.insert(t.proc.as_str(), (op.inv, t.id, ret));
                }
            }
        }
    }
    for (key, per_proc) in finals {
        let mut it = per_proc.values();
        let Some(&(_, t0, v0)) = it.next() else { continue };
        if let Some(&(_, t1, v1)) = it.find(|(_, _, v)| *v != v0) {
            let narrative = format!("after updates to {key} cease, txn {t0} reads {v0} but txn {t1} reads {v1}");
            return Some(Anomaly::new(AnomalyKind::Divergence, [t0, t1], narrative).with_keys([key.to_string()]));
        }
    }
    None
}

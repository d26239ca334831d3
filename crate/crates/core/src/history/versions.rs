use std::collections::{BTreeMap, HashMap};

use super::{History, HistoryError, ItemKind, Relation, RelationKind, Transaction, TxnId};
use crate::value::Value;

/// The state of one item as produced by one update transaction.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Version {
    pub key: String,
    /// `None` for the initial version.
    pub writer: Option<TxnId>,
    /// Final written value for registers and kv cells, net delta for counters.
    pub value: Value,
}

/// What an external read observed, in terms of transaction indexes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Observation {
    /// The read returned the transaction's own latest write of the key.
    Internal,
    /// Register/kv read of one version; `None` is the initial version.
    Version(Option<usize>),
    /// Counter read explained by exactly this set of other transactions'
    /// updates; `own` records whether the reader had already updated the key.
    Counter { others: Vec<usize>, own: bool },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReadResolution {
    pub txn: usize,
    pub op: usize,
    pub key: String,
    pub observation: Observation,
}

/// Version inference result: versions, reads-from, and per-read resolution.
#[derive(Debug, Clone)]
pub struct Inference {
    pub versions: Vec<Version>,
    pub reads_from: Relation,
    pub reads: Vec<ReadResolution>,
    /// Reads of a register after the reader's own write that did not return
    /// that write, as (txn index, op index).
    pub internal_mismatches: Vec<(usize, usize)>,
    /// Update transactions per key, ascending by index.
    pub writers: BTreeMap<String, Vec<usize>>,
}

/// Net effect of a transaction on one key.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Effect {
    Set(Value),
    Add(i64),
}

pub fn txn_effects(h: &History, t: &Transaction) -> BTreeMap<String, Effect> {
    let mut out: BTreeMap<String, Effect> = BTreeMap::new();
    for op in t.ops.iter().filter(|o| o.kind.is_update()) {
        match h.item_kind(&op.key) {
            ItemKind::Counter => {
                let e = out.entry(op.key.clone()).or_insert(Effect::Add(0));
                if let Effect::Add(d) = e {
                    *d += op.kind.delta();
                }
            }
            _ => {
                out.insert(op.key.clone(), Effect::Set(op.arg.clone().unwrap_or(Value::Nil)));
            }
        }
    }
    out
}

/// Number of subsets of `deltas` summing to `target`, capped at 2, and the
/// unique subset when there is exactly one.
fn unique_subset(deltas: &[i64], target: i64) -> (u8, Option<Vec<usize>>) {
    let mut tables: Vec<HashMap<i64, u8>> = vec![HashMap::from([(0, 1)])];
    for &d in deltas {
        let prev = tables.last().expect("seeded");
        let mut next = prev.clone();
        for (&s, &c) in prev {
            let e = next.entry(s + d).or_insert(0);
            *e = (*e + c).min(2);
        }
        tables.push(next);
    }
    let count = tables.last().and_then(|t| t.get(&target)).copied().unwrap_or(0);
    if count != 1 {
        return (count, None);
    }
    let mut chosen = Vec::new();
    let mut t = target;
    for i in (0..deltas.len()).rev() {
        if tables[i].get(&t).copied().unwrap_or(0) == 0 {
            chosen.push(i);
            t -= deltas[i];
        }
    }
    chosen.reverse();
    (1, Some(chosen))
}

/// Matches each read to the version (or counter update set) it observed.
pub fn infer_versions(h: &History) -> Result<Inference, HistoryError> {
    let effects: Vec<_> = h.txns().iter().map(|t| txn_effects(h, t)).collect();
    let mut writers: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    let mut versions = Vec::new();
    for key in h.keys() {
        let kind = h.item_kind(&key);
        versions.push(Version { key: key.clone(), writer: None, value: kind.initial() });
        for (i, eff) in effects.iter().enumerate() {
            if let Some(e) = eff.get(&key) {
                writers.entry(key.clone()).or_default().push(i);
                let value = match e {
                    Effect::Set(v) => v.clone(),
                    Effect::Add(d) => Value::Int(*d),
                };
                versions.push(Version { key: key.clone(), writer: Some(h.txns()[i].id), value });
            }
        }
    }

    let mut reads_from = Relation::new(RelationKind::ReadsFrom);
    let mut reads = Vec::new();
    let mut internal_mismatches = Vec::new();
    let no_writers = Vec::new();

    for (ti, t) in h.txns().iter().enumerate() {
        let mut own_set: HashMap<&str, &Value> = HashMap::new();
        let mut own_delta: HashMap<&str, i64> = HashMap::new();
        for (oi, op) in t.ops.iter().enumerate() {
            let key = op.key.as_str();
            let kind = h.item_kind(key);
            if op.kind.is_update() {
                match kind {
                    ItemKind::Counter => *own_delta.entry(key).or_insert(0) += op.kind.delta(),
                    _ => {
                        own_set.insert(key, op.arg.as_ref().expect("validated"));
                    }
                }
                continue;
            }
            let ret = op.ret.as_ref().expect("validated");
            let ws = writers.get(key).unwrap_or(&no_writers);
            let observation = match kind {
                ItemKind::Counter => {
                    let own = own_delta.get(key).copied();
                    let target = ret.as_int().expect("validated") - own.unwrap_or(0);
                    let others: Vec<usize> = ws.iter().copied().filter(|&w| w != ti).collect();
                    let deltas: Vec<i64> = others
                        .iter()
                        .map(|&w| match effects[w][key] {
                            Effect::Add(d) => d,
                            Effect::Set(_) => 0,
                        })
                        .collect();
                    match unique_subset(&deltas, target) {
                        (0, _) => {
                            return Err(HistoryError::DanglingRead { txn: t.id, key: key.into(), value: ret.clone() })
                        }
                        (1, Some(sel)) => Observation::Counter {
                            others: sel.into_iter().map(|i| others[i]).collect(),
                            own: own.is_some(),
                        },
                        _ => {
                            return Err(HistoryError::AmbiguousVersion(format!(
                                "txn {} reads counter {key} = {ret}, explained by several update sets",
                                t.id
                            )))
                        }
                    }
                }
                _ => {
                    if let Some(mine) = own_set.get(key) {
                        if *mine != ret {
                            internal_mismatches.push((ti, oi));
                        }
                        Observation::Internal
                    } else {
                        let mut candidates: Vec<Option<usize>> = Vec::new();
                        if ret.is_nil() {
                            candidates.push(None);
                        }
                        candidates.extend(
                            ws.iter()
                                .filter(|&&w| w != ti && effects[w][key] == Effect::Set(ret.clone()))
                                .map(|&w| Some(w)),
                        );
                        match candidates[..] {
                            [] => {
                                return Err(HistoryError::DanglingRead {
                                    txn: t.id,
                                    key: key.into(),
                                    value: ret.clone(),
                                })
                            }
                            [one] => Observation::Version(one),
                            _ => {
                                return Err(HistoryError::AmbiguousVersion(format!(
                                    "txn {} reads {key} = {ret}, written by several transactions",
                                    t.id
                                )))
                            }
                        }
                    }
                }
            };
            match &observation {
                Observation::Version(Some(w)) => {
                    reads_from.edges.insert((h.txns()[*w].id, t.id));
                }
                Observation::Counter { others, .. } => {
                    for &w in others {
                        reads_from.edges.insert((h.txns()[w].id, t.id));
                    }
                }
                _ => {}
            }
            reads.push(ReadResolution { txn: ti, op: oi, key: key.to_string(), observation });
        }
    }

    Ok(Inference { versions, reads_from, reads, internal_mismatches, writers })
}

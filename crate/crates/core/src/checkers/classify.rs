//! Naming the anomaly behind a failed serial-order search.

use crate::history::{derive_realtime, History, Relation, Transaction};
use crate::value::Value;

fn concurrent(rt: &Relation, a: &Transaction, b: &Transaction) -> bool {
    !rt.contains(a.id, b.id) && !rt.contains(b.id, a.id)
}

fn final_value<'t>(t: &'t Transaction, key: &str) -> Option<&'t Value> {
    t.ops.iter().rev().find(|o| o.key == key && o.kind.is_update()).and_then(|o| o.arg.as_ref())
}

/// True when `t` reads `key` before writing it itself.
fn reads_externally(t: &Transaction, key: &str) -> bool {
    t.ops.iter().find(|o| o.key == key).is_some_and(|o| !o.kind.is_update())
}

/// `reader` read `key` without observing `writer`'s final register value.
fn misses(reader: &Transaction, writer: &Transaction, key: &str) -> bool {
    if !reads_externally(reader, key) || !writer.writes_key(key) {
        return false;
    }
    match final_value(writer, key) {
        Some(v) => reader.ops.iter().find(|o| o.key == key).and_then(|o| o.ret.as_ref()) != Some(v),
        None => true,
    }
}

fn write_keys(t: &Transaction) -> Vec<&str> {
    t.ops.iter().filter(|o| o.kind.is_update()).map(|o| o.key.as_str()).collect()
}

/// Concurrent pair, each reading a key the other writes without seeing
/// that write, with disjoint write sets.
pub(crate) fn is_write_skew(h: &History, a: &Transaction, b: &Transaction) -> bool {
    let rt = derive_realtime(h);
    let (wa, wb) = (write_keys(a), write_keys(b));
    concurrent(&rt, a, b)
        && !wa.is_empty()
        && !wb.is_empty()
        && wa.iter().all(|k| !wb.contains(k))
        && wb.iter().any(|k| misses(a, b, k))
        && wa.iter().any(|k| misses(b, a, k))
}

/// Concurrent pair that both read a key externally and then update it,
/// neither seeing the other's update.
pub(crate) fn is_lost_update(h: &History, a: &Transaction, b: &Transaction) -> bool {
    let rt = derive_realtime(h);
    concurrent(&rt, a, b) && write_keys(a).iter().any(|k| b.writes_key(k) && misses(a, b, k) && misses(b, a, k))
}

/// First pair (ascending ids) matching `pattern`.
pub(crate) fn find_pair(
    h: &History,
    pattern: fn(&History, &Transaction, &Transaction) -> bool,
) -> Option<(usize, usize)> {
    let n = h.txns().len();
    (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).find(|&(i, j)| pattern(h, &h.txns()[i], &h.txns()[j]))
}

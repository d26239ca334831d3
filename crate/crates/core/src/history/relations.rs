use std::collections::BTreeSet;

use super::{History, TxnId};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum RelationKind {
    Realtime,
    Session,
    ReadsFrom,
    VersionOrder(String),
}

/// A binary relation over transactions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Relation {
    pub kind: RelationKind,
    pub edges: BTreeSet<(TxnId, TxnId)>,
}

impl Relation {
    pub fn new(kind: RelationKind) -> Self {
        Relation { kind, edges: BTreeSet::new() }
    }

    pub fn contains(&self, a: TxnId, b: TxnId) -> bool {
        self.edges.contains(&(a, b))
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn is_subset(&self, other: &Relation) -> bool {
        self.edges.is_subset(&other.edges)
    }

    /// Returns the transitive closure.
    pub fn closure(&self) -> Relation {
        let mut edges = self.edges.clone();
        loop {
            let mut added = Vec::new();
            for &(a, b) in &edges {
                for &(_, c) in edges.range((b, TxnId(0))..=(b, TxnId(u64::MAX))) {
                    if !edges.contains(&(a, c)) {
                        added.push((a, c));
                    }
                }
            }
            if added.is_empty() {
                break;
            }
            edges.extend(added);
        }
        Relation { kind: self.kind.clone(), edges }
    }
}

/// `T ≺ T'` iff the last response of `T` precedes the first invocation of `T'`.
///
/// Interval orders are transitive, so the result is already closed.
pub fn derive_realtime(h: &History) -> Relation {
    let mut rel = Relation::new(RelationKind::Realtime);
    for a in h.txns() {
        for b in h.txns() {
            if a.last_res() < b.first_inv() {
                rel.edges.insert((a.id, b.id));
            }
        }
    }
    rel
}

/// Per-process order, transitively closed.
pub fn derive_session(h: &History) -> Relation {
    let mut rel = Relation::new(RelationKind::Session);
    for a in h.txns() {
        for b in h.txns() {
            if a.id != b.id && a.proc == b.proc && a.first_inv() < b.first_inv() {
                rel.edges.insert((a.id, b.id));
            }
        }
    }
    rel
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closure_adds_paths() {
        let mut r = Relation::new(RelationKind::ReadsFrom);
        r.edges.extend([(TxnId(1), TxnId(2)), (TxnId(2), TxnId(3)), (TxnId(3), TxnId(4))]);
        let c = r.closure();
        assert!(c.contains(TxnId(1), TxnId(4)));
        assert_eq!(c.len(), 6);
    }
}

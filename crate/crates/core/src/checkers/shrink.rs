//! Witness minimization for search-based rejections.

use crate::history::History;

/// The sub-history holding only the transactions at `keep` (sorted indexes).
pub(crate) fn restrict(h: &History, keep: &[usize]) -> History {
    let ids: Vec<_> = keep.iter().map(|&i| h.txns()[i].id).collect();
    let events = h.events().iter().filter(|e| ids.contains(&e.txn)).cloned().collect();
    History::new(events, h.declared_items().clone()).expect("restriction of a valid history is valid")
}

/// Drops transactions one at a time while `fails` still holds for the
/// remainder, until no single transaction can be dropped.
pub(crate) fn minimal_core(h: &History, fails: impl Fn(&History) -> bool) -> Vec<usize> {
    let mut keep: Vec<usize> = (0..h.len()).collect();
    loop {
        let mut changed = false;
        for pos in (0..keep.len()).rev() {
            let mut candidate = keep.clone();
            candidate.remove(pos);
            if fails(&restrict(h, &candidate)) {
                keep = candidate;
                changed = true;
            }
        }
        if !changed {
            return keep;
        }
    }
}

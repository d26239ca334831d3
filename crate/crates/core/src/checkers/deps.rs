//! Version-order constraint solving for the dependency-based models.
//!
//! Each model contributes constraints "version of writer `a` is at or
//! before the version observed by some read" per key. Register keys need an
//! acyclic precedence graph over their writers; counter reads are exact
//! update sets, so their constraints are plain membership tests.

use std::collections::{BTreeMap, BTreeSet};

use crate::history::{derive_realtime, derive_session, History, Inference, ItemKind, Observation, TxnId};
use crate::verdict::{Anomaly, AnomalyKind, Certificate, SessionGuarantee};

/// What a read saw of one key, in a form the constraints can compare.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Seen {
    /// Register version; `None` is the initial version.
    Version(Option<usize>),
    /// Counter update set, including the reader's own updates.
    Set(BTreeSet<usize>),
}

#[derive(Debug, Clone)]
struct Reason {
    kind: AnomalyKind,
    participants: Vec<usize>,
    keys: Vec<String>,
    narrative: String,
}

/// Per-key precedence edges among register writers plus immediate failures.
pub(crate) struct Constraints<'h> {
    h: &'h History,
    inf: &'h Inference,
    edges: BTreeMap<String, BTreeMap<(usize, usize), Reason>>,
    failure: Option<Reason>,
}

#[derive(Debug, Clone)]
enum SessionStep {
    Read(usize, Seen),
    Write(usize),
}

impl SessionStep {
    fn txn(&self) -> usize {
        match self {
            SessionStep::Read(t, _) | SessionStep::Write(t) => *t,
        }
    }
}

/// One external read of a transaction.
pub(crate) struct ReadView {
    pub txn: usize,
    pub op: usize,
    pub key: String,
    pub seen: Seen,
}

pub(crate) fn read_views(inf: &Inference) -> Vec<ReadView> {
    inf.reads
        .iter()
        .map(|r| {
            let seen = match &r.observation {
                Observation::Internal => Seen::Version(Some(r.txn)),
                Observation::Version(v) => Seen::Version(*v),
                Observation::Counter { others, own } => {
                    let mut s: BTreeSet<usize> = others.iter().copied().collect();
                    if *own {
                        s.insert(r.txn);
                    }
                    Seen::Set(s)
                }
            };
            ReadView { txn: r.txn, op: r.op, key: r.key.clone(), seen }
        })
        .collect()
}

impl<'h> Constraints<'h> {
    pub fn new(h: &'h History, inf: &'h Inference) -> Self {
        Constraints { h, inf, edges: BTreeMap::new(), failure: None }
    }

    fn id(&self, t: usize) -> TxnId {
        self.h.txns()[t].id
    }

    fn fail(&mut self, reason: Reason) {
        if self.failure.is_none() {
            self.failure = Some(reason);
        }
    }

    /// Requires writer `w`'s version of `key` to be at or before `seen`.
    fn at_or_before(&mut self, key: &str, w: usize, seen: &Seen, reason: Reason) {
        match seen {
            Seen::Set(set) => {
                if !set.contains(&w) {
                    self.fail(reason);
                }
            }
            Seen::Version(None) => self.fail(reason),
            Seen::Version(Some(v)) => {
                if *v != w {
                    self.edges.entry(key.to_string()).or_default().entry((w, *v)).or_insert(reason);
                }
            }
        }
    }

    /// Requires version `a` to be at or before version `b` of a register key.
    fn version_le(&mut self, key: &str, a: Option<usize>, b: Option<usize>, reason: Reason) {
        match (a, b) {
            (None, _) => {}
            (Some(_), None) => self.fail(reason),
            (Some(a), Some(b)) if a == b => {}
            (Some(a), Some(b)) => {
                self.edges.entry(key.to_string()).or_default().entry((a, b)).or_insert(reason);
            }
        }
    }

    fn reason(&self, kind: AnomalyKind, participants: Vec<usize>, keys: &[&str], narrative: String) -> Reason {
        Reason { kind, participants, keys: keys.iter().map(|k| k.to_string()).collect(), narrative }
    }

    /// All-or-nothing visibility of each observed writer.
    pub fn atomic_visibility(&mut self) {
        let views = read_views(self.inf);
        for r in &views {
            let observed: Vec<usize> = match &r.seen {
                Seen::Version(Some(w)) if *w != r.txn => vec![*w],
                Seen::Set(s) => s.iter().copied().filter(|&w| w != r.txn).collect(),
                _ => continue,
            };
            for w in observed {
                for r2 in views.iter().filter(|r2| r2.txn == r.txn && r2.key != r.key) {
                    if !self.h.txns()[w].writes_key(&r2.key) || self.h.txns()[r.txn].writes_key(&r2.key) {
                        continue;
                    }
                    let narrative = format!(
                        "txn {} observes txn {}'s update of {} but not its update of {}",
                        self.id(r.txn),
                        self.id(w),
                        r.key,
                        r2.key
                    );
                    let reason = self.reason(AnomalyKind::FracturedRead, vec![r.txn, w], &[&r.key, &r2.key], narrative);
                    self.at_or_before(&r2.key, w, &r2.seen, reason);
                }
            }
        }
    }

    /// Every read must include each writer of its key that the reader
    /// transitively depends on through `past`.
    fn snapshot_over(&mut self, past: &BTreeMap<usize, BTreeSet<usize>>, kind: AnomalyKind, what: &str) {
        let views = read_views(self.inf);
        for r in &views {
            if matches!(r.seen, Seen::Version(Some(w)) if w == r.txn) {
                continue;
            }
            let Some(deps) = past.get(&r.txn) else { continue };
            for &k in deps {
                if k == r.txn || !self.h.txns()[k].writes_key(&r.key) {
                    continue;
                }
                let narrative = format!(
                    "txn {} {} txn {} yet its read of {} misses txn {}'s update",
                    self.id(r.txn),
                    what,
                    self.id(k),
                    r.key,
                    self.id(k)
                );
                let reason = self.reason(kind, vec![r.txn, k], &[&r.key], narrative);
                self.at_or_before(&r.key, k, &r.seen, reason);
            }
        }
    }

    /// Consistent snapshots over the reads-from closure.
    pub fn consistent_snapshot(&mut self) {
        let idx = self.index_pairs(self.inf.reads_from.closure().edges.iter().copied());
        self.snapshot_over(&idx, AnomalyKind::SnapshotViolation, "depends on");
    }

    /// Consistent snapshots over the closure of session order and reads-from.
    pub fn causal_snapshot(&mut self) {
        let mut rel = derive_session(self.h);
        rel.edges.extend(self.inf.reads_from.edges.iter().copied());
        let idx = self.index_pairs(rel.closure().edges.iter().copied());
        self.snapshot_over(&idx, AnomalyKind::CausalityViolation, "causally follows");
    }

    /// Writers of one key ordered in real time keep that order.
    pub fn realtime_writes(&mut self) {
        let rt = derive_realtime(self.h);
        for (key, ws) in &self.inf.writers {
            if self.h.item_kind(key) == ItemKind::Counter {
                continue;
            }
            for &a in ws {
                for &b in ws {
                    if rt.contains(self.id(a), self.id(b)) {
                        let narrative = format!(
                            "txn {} completes before txn {} starts, so its update of {key} is older",
                            self.id(a),
                            self.id(b)
                        );
                        let reason = self.reason(AnomalyKind::CausalityViolation, vec![a, b], &[key], narrative);
                        self.edges.entry(key.clone()).or_default().entry((a, b)).or_insert(reason);
                    }
                }
            }
        }
    }

    fn index_pairs(&self, pairs: impl Iterator<Item = (TxnId, TxnId)>) -> BTreeMap<usize, BTreeSet<usize>> {
        let mut out: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
        for (a, b) in pairs {
            let (a, b) = (self.h.txn_index(a).expect("known"), self.h.txn_index(b).expect("known"));
            out.entry(b).or_default().insert(a);
        }
        out
    }

    /// One session guarantee over every process's operation sequence.
    pub fn session(&mut self, g: SessionGuarantee) {
        let views = read_views(self.inf);
        let mut by_proc: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, t) in self.h.txns().iter().enumerate() {
            by_proc.entry(t.proc.as_str()).or_default().push(i);
        }
        for (_, mut txns) in by_proc {
            txns.sort_by_key(|&t| self.h.txns()[t].first_inv());
            let mut per_key: BTreeMap<String, Vec<SessionStep>> = BTreeMap::new();
            for &t in &txns {
                let tx = &self.h.txns()[t];
                let mut wrote: BTreeSet<&str> = BTreeSet::new();
                for (oi, op) in tx.ops.iter().enumerate() {
                    if op.kind.is_update() {
                        if wrote.insert(op.key.as_str()) {
                            per_key.entry(op.key.clone()).or_default().push(SessionStep::Write(t));
                        }
                    } else if let Some(v) = views.iter().find(|v| v.txn == t && v.op == oi) {
                        if matches!(v.seen, Seen::Version(Some(w)) if w == t) {
                            continue;
                        }
                        per_key.entry(op.key.clone()).or_default().push(SessionStep::Read(t, v.seen.clone()));
                    }
                }
            }
            for (key, steps) in &per_key {
                for i in 0..steps.len() {
                    for j in i + 1..steps.len() {
                        self.session_pair(g, key, &steps[i], &steps[j]);
                    }
                }
            }
        }
    }

    fn session_pair(&mut self, g: SessionGuarantee, key: &str, first: &SessionStep, second: &SessionStep) {
        let kind =
            if g == SessionGuarantee::MR { AnomalyKind::NonMonotonicRead } else { AnomalyKind::SessionBreach(g) };
        let participants = vec![first.txn(), second.txn()];
        let mk = |this: &Self, what: &str| {
            let narrative = format!(
                "{} on {key}, txn {} then txn {}: {what}",
                g.name(),
                this.id(first.txn()),
                this.id(second.txn())
            );
            this.reason(kind, participants.clone(), &[key], narrative)
        };
        match (g, first, second) {
            (SessionGuarantee::MR, SessionStep::Read(_, a), SessionStep::Read(_, b)) => match (a, b) {
                (Seen::Version(a), Seen::Version(b)) => {
                    let r = mk(self, "the later read returns an older version");
                    self.version_le(key, *a, *b, r);
                }
                (Seen::Set(a), Seen::Set(b)) if !a.is_subset(b) => {
                    let r = mk(self, "the later read misses updates the earlier one saw");
                    self.fail(r);
                }
                _ => {}
            },
            (SessionGuarantee::MW, SessionStep::Write(a), SessionStep::Write(b)) => {
                if self.h.item_kind(key) != ItemKind::Counter {
                    let r = mk(self, "the later write is ordered first");
                    self.version_le(key, Some(*a), Some(*b), r);
                }
            }
            (SessionGuarantee::RMW, SessionStep::Write(w), SessionStep::Read(_, seen)) => {
                let r = mk(self, "the read misses the session's own write");
                self.at_or_before(key, *w, seen, r);
            }
            (SessionGuarantee::WFR, SessionStep::Read(_, Seen::Version(v)), SessionStep::Write(w)) => {
                let r = mk(self, "the write is ordered before the version read earlier");
                self.version_le(key, *v, Some(*w), r);
            }
            _ => {}
        }
    }

    /// Writers concurrent in real time must not update a common key.
    pub fn write_conflicts(h: &History) -> Option<Anomaly> {
        let rt = derive_realtime(h);
        let txns = h.txns();
        for (i, a) in txns.iter().enumerate() {
            for b in &txns[i + 1..] {
                if rt.contains(a.id, b.id) || rt.contains(b.id, a.id) {
                    continue;
                }
                let shared: Vec<String> = a
                    .ops
                    .iter()
                    .filter(|o| o.kind.is_update() && b.writes_key(&o.key))
                    .map(|o| o.key.clone())
                    .collect();
                if let Some(k) = shared.first() {
                    let narrative = format!("txns {} and {} are concurrent and both update {k}", a.id, b.id);
                    return Some(Anomaly::new(AnomalyKind::WriteConflict, [a.id, b.id], narrative).with_keys(shared));
                }
            }
        }
        None
    }

    /// Solves the accumulated constraints: a certificate of per-key version
    /// orders, or the anomaly behind the first failure or cycle.
    pub fn solve(&self) -> Result<Certificate, Anomaly> {
        if let Some(r) = &self.failure {
            return Err(self.anomaly(r));
        }
        let mut orders = BTreeMap::new();
        for (key, ws) in &self.inf.writers {
            let edges = self.edges.get(key);
            match topo(ws, edges) {
                Ok(order) => {
                    orders.insert(key.clone(), order.into_iter().map(|t| self.id(t)).collect());
                }
                Err(cycle) => {
                    let edges = edges.expect("cycle needs edges");
                    let mut first = edges[&cycle[0]].clone();
                    let chain: Vec<String> =
                        cycle.iter().map(|&(a, b)| format!("{}<{}", self.id(a), self.id(b))).collect();
                    first.narrative =
                        format!("{}; version order of {key} would need a cycle {}", first.narrative, chain.join(" "));
                    return Err(self.anomaly(&first));
                }
            }
        }
        Ok(Certificate::VersionOrders(orders))
    }

    fn anomaly(&self, r: &Reason) -> Anomaly {
        let ids = r.participants.iter().map(|&t| self.id(t));
        Anomaly::new(r.kind, ids, r.narrative.clone()).with_keys(r.keys.clone())
    }
}

/// Kahn's algorithm taking the smallest ready writer first; on a cycle,
/// returns the cycle's edges in a deterministic order.
fn topo(nodes: &[usize], edges: Option<&BTreeMap<(usize, usize), Reason>>) -> Result<Vec<usize>, Vec<(usize, usize)>> {
    let empty = BTreeMap::new();
    let edges = edges.unwrap_or(&empty);
    let mut indeg: BTreeMap<usize, usize> = nodes.iter().map(|&n| (n, 0)).collect();
    for &(_, b) in edges.keys() {
        *indeg.entry(b).or_insert(0) += 1;
    }
    let mut ready: BTreeSet<usize> = indeg.iter().filter(|(_, &d)| d == 0).map(|(&n, _)| n).collect();
    let mut out = Vec::new();
    while let Some(n) = ready.pop_first() {
        out.push(n);
        for &(a, b) in edges.keys() {
            if a == n {
                let d = indeg.get_mut(&b).expect("node");
                *d -= 1;
                if *d == 0 {
                    ready.insert(b);
                }
            }
        }
    }
    if out.len() == indeg.len() {
        return Ok(out);
    }
    // Every remaining node has a remaining predecessor; walk back until one repeats.
    let rest: BTreeSet<usize> = indeg.keys().copied().filter(|n| !out.contains(n)).collect();
    let mut path = vec![*rest.iter().next().expect("nonempty")];
    loop {
        let cur = *path.last().expect("nonempty");
        let prev = edges.keys().find(|(a, b)| *b == cur && rest.contains(a)).map(|&(a, _)| a).expect("cycle");
        if let Some(pos) = path.iter().position(|&p| p == prev) {
            let mut cycle: Vec<(usize, usize)> = path[pos..].windows(2).map(|w| (w[1], w[0])).collect();
            cycle.push((prev, cur));
            cycle.sort_unstable();
            return Err(cycle);
        }
        path.push(prev);
    }
}

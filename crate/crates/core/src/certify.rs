//! Independent validation of verdict evidence.
//!
//! Certificates are replayed or re-evaluated against the history without the
//! checkers' search code; witnesses are checked for the structural pattern
//! their anomaly kind names.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::checkers::{is_lost_update, is_write_skew, read_views, Seen};
use crate::history::{derive_realtime, derive_session, infer_versions, History, ItemKind, OpKind, Relation, TxnId};
use crate::model::ModelId;
use crate::value::Value;
use crate::verdict::{Anomaly, AnomalyKind, Certificate, Outcome, Verdict};

/// Checks that `v`'s evidence holds on `h`. Inconclusive verdicts pass.
pub fn validate(h: &History, v: &Verdict) -> Result<(), String> {
    match &v.outcome {
        Outcome::Accepted(c) => validate_certificate(h, v.model, c),
        Outcome::Rejected(a) => validate_witness(h, v.model, a),
        Outcome::Inconclusive(_) => Ok(()),
    }
}

type Store = HashMap<String, Value>;

fn initial(h: &History, key: &str) -> Value {
    match h.item_kind(key) {
        ItemKind::Counter => Value::Int(0),
        _ => Value::Nil,
    }
}

fn read(h: &History, store: &Store, key: &str) -> Value {
    store.get(key).cloned().unwrap_or_else(|| initial(h, key))
}

/// Executes one transaction op by op on `store`, checking reads.
fn run_txn(h: &History, id: TxnId, store: &mut Store, writes_to: Option<&mut Store>) -> Result<(), String> {
    let t = h.txn(id).ok_or_else(|| format!("unknown txn {id}"))?;
    let mut local = store.clone();
    for op in &t.ops {
        let cur = read(h, &local, &op.key);
        match op.kind {
            OpKind::Read | OpKind::Get => {
                if op.ret.as_ref() != Some(&cur) {
                    return Err(format!(
                        "txn {id} reads {} = {} but replay gives {cur}",
                        op.key,
                        op.ret.as_ref().map_or("?".into(), Value::to_string)
                    ));
                }
            }
            OpKind::Write | OpKind::Put => {
                local.insert(op.key.clone(), op.arg.clone().unwrap_or(Value::Nil));
            }
            OpKind::Inc | OpKind::Dec => {
                let n = cur.as_int().unwrap_or(0) + if op.kind == OpKind::Inc { 1 } else { -1 };
                local.insert(op.key.clone(), Value::Int(n));
            }
        }
    }
    match writes_to {
        None => *store = local,
        Some(target) => {
            // Layer this transaction's net effect onto the commit state.
            let keys: BTreeSet<&str> = t.ops.iter().filter(|o| o.kind.is_update()).map(|o| o.key.as_str()).collect();
            for key in keys {
                let v = match h.item_kind(key) {
                    ItemKind::Counter => {
                        let before = read(h, store, key).as_int().unwrap_or(0);
                        let after = read(h, &local, key).as_int().unwrap_or(0);
                        Value::Int(read(h, target, key).as_int().unwrap_or(0) + after - before)
                    }
                    _ => read(h, &local, key),
                };
                target.insert(key.to_string(), v);
            }
        }
    }
    Ok(())
}

fn check_permutation(h: &History, order: &[TxnId]) -> Result<HashMap<TxnId, usize>, String> {
    let pos: HashMap<TxnId, usize> = order.iter().enumerate().map(|(i, t)| (*t, i)).collect();
    let all: BTreeSet<TxnId> = h.txns().iter().map(|t| t.id).collect();
    if pos.len() != order.len() || order.iter().copied().collect::<BTreeSet<_>>() != all {
        return Err("certificate order is not a permutation of the history's transactions".into());
    }
    Ok(pos)
}

fn check_extends(rel: &Relation, pos: &HashMap<TxnId, usize>, what: &str) -> Result<(), String> {
    for &(a, b) in &rel.edges {
        if pos[&a] > pos[&b] {
            return Err(format!("order puts txn {b} before txn {a}, against {what} order"));
        }
    }
    Ok(())
}

fn validate_certificate(h: &History, model: ModelId, c: &Certificate) -> Result<(), String> {
    match c {
        Certificate::SerialOrder(order) => {
            if !matches!(model, ModelId::SER | ModelId::SSER | ModelId::LIN | ModelId::SC) {
                return Err(format!("{model} does not produce serial orders"));
            }
            let pos = check_permutation(h, order)?;
            match model {
                ModelId::SSER | ModelId::LIN => check_extends(&derive_realtime(h), &pos, "real-time")?,
                ModelId::SC => check_extends(&derive_session(h), &pos, "session")?,
                _ => {}
            }
            let mut store = Store::new();
            for &t in order {
                run_txn(h, t, &mut store, None)?;
            }
            Ok(())
        }
        Certificate::Snapshots { order, snapshot } => validate_snapshots(h, model, order, snapshot),
        Certificate::VersionOrders(orders) => validate_version_orders(h, model, orders),
        Certificate::Direct => {
            if matches!(model, ModelId::RC_loose | ModelId::RC_strict | ModelId::EC_quiescent) {
                Ok(())
            } else {
                Err(format!("{model} needs replayable evidence"))
            }
        }
    }
}

fn validate_snapshots(
    h: &History,
    model: ModelId,
    order: &[TxnId],
    snapshot: &BTreeMap<TxnId, usize>,
) -> Result<(), String> {
    if !matches!(model, ModelId::SI | ModelId::SSI | ModelId::PSI) {
        return Err(format!("{model} does not produce snapshot certificates"));
    }
    let pos = check_permutation(h, order)?;
    let rt = derive_realtime(h);
    check_extends(&rt, &pos, "real-time")?;
    let session = derive_session(h);
    let mut prefixes = vec![Store::new()];
    for &t in order {
        let mut next = prefixes.last().expect("seeded").clone();
        let s = *snapshot.get(&t).ok_or_else(|| format!("no snapshot for txn {t}"))?;
        if s > pos[&t] {
            return Err(format!("txn {t}'s snapshot extends past its commit"));
        }
        let must: &Relation = if model == ModelId::SSI { &rt } else { &session };
        for &(a, b) in &must.edges {
            if b == t && pos[&a] >= s {
                return Err(format!("txn {t}'s snapshot misses predecessor {a}"));
            }
        }
        if model == ModelId::PSI {
            let me = h.txn(t).expect("known");
            for &o in &order[..s] {
                if h.txn(o).expect("known").last_res() >= me.first_inv() {
                    return Err(format!("txn {t}'s snapshot holds txn {o}, unfinished when {t} started"));
                }
            }
        }
        let mut snap = prefixes[s].clone();
        run_txn(h, t, &mut snap, Some(&mut next))?;
        prefixes.push(next);
    }
    for a in h.txns() {
        for b in h.txns() {
            if a.id < b.id && !rt.contains(a.id, b.id) && !rt.contains(b.id, a.id) {
                if let Some(op) = a.ops.iter().find(|o| o.kind.is_update() && b.writes_key(&o.key)) {
                    return Err(format!("concurrent txns {} and {} both update {}", a.id, b.id, op.key));
                }
            }
        }
    }
    Ok(())
}

/// Evaluates the model's version-order predicate directly on the given orders.
fn validate_version_orders(h: &History, model: ModelId, orders: &BTreeMap<String, Vec<TxnId>>) -> Result<(), String> {
    let inf = infer_versions(h).map_err(|e| e.to_string())?;
    let idx = |t: TxnId| h.txn_index(t).expect("known");
    for (key, ws) in &inf.writers {
        let listed: BTreeSet<usize> = orders.get(key).map(|o| o.iter().map(|&t| idx(t)).collect()).unwrap_or_default();
        if listed != ws.iter().copied().collect() || orders.get(key).map_or(0, Vec::len) != ws.len() {
            return Err(format!("version order of {key} does not list exactly its writers"));
        }
    }
    // Rank of a writer's version; the initial version ranks below all.
    let rank = |key: &str, w: Option<usize>| -> i64 {
        match w {
            None => -1,
            Some(w) => orders[key].iter().position(|&t| idx(t) == w).expect("listed") as i64,
        }
    };
    let at_or_before = |key: &str, w: usize, seen: &Seen| -> bool {
        match seen {
            Seen::Set(s) => s.contains(&w),
            Seen::Version(v) => rank(key, Some(w)) <= rank(key, *v),
        }
    };
    let views = read_views(&inf);
    let txns = h.txns();
    let fail = |what: &str| Err(format!("{model} certificate violates {what}"));

    let closure_of = |rel: Relation| -> Vec<BTreeSet<usize>> {
        let mut past = vec![BTreeSet::new(); txns.len()];
        for (a, b) in rel.closure().edges {
            past[idx(b)].insert(idx(a));
        }
        past
    };
    let snapshot_ok = |past: &[BTreeSet<usize>]| {
        views.iter().all(|r| {
            matches!(r.seen, Seen::Version(Some(w)) if w == r.txn)
                || past[r.txn]
                    .iter()
                    .all(|&k| k == r.txn || !txns[k].writes_key(&r.key) || at_or_before(&r.key, k, &r.seen))
        })
    };
    let ra_ok = || {
        views.iter().all(|r| {
            let observed: Vec<usize> = match &r.seen {
                Seen::Version(Some(w)) if *w != r.txn => vec![*w],
                Seen::Set(s) => s.iter().copied().filter(|&w| w != r.txn).collect(),
                _ => vec![],
            };
            observed.into_iter().all(|w| {
                views.iter().filter(|r2| r2.txn == r.txn && r2.key != r.key).all(|r2| {
                    !txns[w].writes_key(&r2.key)
                        || txns[r.txn].writes_key(&r2.key)
                        || at_or_before(&r2.key, w, &r2.seen)
                })
            })
        })
    };
    let session_ok = |g: ModelId| -> bool {
        let mut procs: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, t) in txns.iter().enumerate() {
            procs.entry(t.proc.as_str()).or_default().push(i);
        }
        for list in procs.values_mut() {
            list.sort_by_key(|&t| txns[t].first_inv());
        }
        for list in procs.values() {
            // (txn, Some(seen) for reads | None for writes, key)
            let mut steps: Vec<(usize, Option<&Seen>, &str)> = Vec::new();
            for &t in list {
                let mut wrote = BTreeSet::new();
                for (oi, op) in txns[t].ops.iter().enumerate() {
                    if op.kind.is_update() {
                        if wrote.insert(op.key.as_str()) {
                            steps.push((t, None, op.key.as_str()));
                        }
                    } else if let Some(v) = views.iter().find(|v| v.txn == t && v.op == oi) {
                        if !matches!(v.seen, Seen::Version(Some(w)) if w == t) {
                            steps.push((t, Some(&v.seen), op.key.as_str()));
                        }
                    }
                }
            }
            for i in 0..steps.len() {
                for j in i + 1..steps.len() {
                    let ((t1, s1, k), (t2, s2, k2)) = (steps[i], steps[j]);
                    if k != k2 {
                        continue;
                    }
                    let counter = h.item_kind(k) == ItemKind::Counter;
                    let ok = match (g, s1, s2) {
                        (ModelId::MR, Some(Seen::Set(a)), Some(Seen::Set(b))) => a.is_subset(b),
                        (ModelId::MR, Some(Seen::Version(a)), Some(Seen::Version(b))) => rank(k, *a) <= rank(k, *b),
                        (ModelId::MW, None, None) => counter || rank(k, Some(t1)) <= rank(k, Some(t2)),
                        (ModelId::RMW, None, Some(seen)) => at_or_before(k, t1, seen),
                        (ModelId::WFR, Some(Seen::Version(a)), None) => rank(k, *a) <= rank(k, Some(t2)),
                        _ => true,
                    };
                    if !ok {
                        return false;
                    }
                }
            }
        }
        true
    };
    let cm_ok = || [ModelId::MR, ModelId::MW, ModelId::RMW, ModelId::WFR].into_iter().all(session_ok);

    match model {
        ModelId::RA => ra_ok().then_some(()).map_or_else(|| fail("atomic visibility"), Ok),
        ModelId::CS | ModelId::NMSI => {
            if !snapshot_ok(&closure_of(inf.reads_from.clone())) {
                return fail("consistent snapshots");
            }
            Ok(())
        }
        ModelId::MR | ModelId::MW | ModelId::RMW | ModelId::WFR => {
            session_ok(model).then_some(()).map_or_else(|| fail("its session guarantee"), Ok)
        }
        ModelId::CM => cm_ok().then_some(()).map_or_else(|| fail("a session guarantee"), Ok),
        ModelId::CC => {
            let mut causal = derive_session(h);
            causal.edges.extend(inf.reads_from.edges.iter().copied());
            if !snapshot_ok(&closure_of(inf.reads_from.clone())) || !snapshot_ok(&closure_of(causal)) {
                return fail("causal snapshots");
            }
            if !cm_ok() {
                return fail("a session guarantee");
            }
            let rt = derive_realtime(h);
            for (key, ws) in orders {
                if h.item_kind(key) == ItemKind::Counter {
                    continue;
                }
                for (i, a) in ws.iter().enumerate() {
                    if ws[..i].iter().any(|b| rt.contains(*a, *b)) {
                        return fail("real-time order of writers");
                    }
                }
            }
            Ok(())
        }
        _ => Err(format!("{model} does not produce version-order certificates")),
    }
}

fn allowed_kinds(model: ModelId) -> &'static [AnomalyKind] {
    use crate::verdict::SessionGuarantee as G;
    use AnomalyKind::*;
    match model {
        ModelId::RC_strict | ModelId::RC_loose => &[DirtyValue],
        ModelId::RA => &[DirtyValue, FracturedRead],
        ModelId::MR => &[DirtyValue, NonMonotonicRead],
        ModelId::MW => &[DirtyValue, SessionBreach(G::MW)],
        ModelId::RMW => &[DirtyValue, SessionBreach(G::RMW)],
        ModelId::WFR => &[DirtyValue, SessionBreach(G::WFR)],
        ModelId::CM => {
            &[DirtyValue, NonMonotonicRead, SessionBreach(G::MW), SessionBreach(G::RMW), SessionBreach(G::WFR)]
        }
        ModelId::CS => &[DirtyValue, SnapshotViolation],
        ModelId::CC => &[
            DirtyValue,
            SnapshotViolation,
            CausalityViolation,
            NonMonotonicRead,
            SessionBreach(G::MW),
            SessionBreach(G::RMW),
            SessionBreach(G::WFR),
        ],
        ModelId::SI => &[DirtyValue, WriteConflict, SnapshotViolation],
        ModelId::SSI | ModelId::PSI => &[DirtyValue, WriteConflict, SnapshotViolation, StaleSnapshot],
        ModelId::NMSI => &[DirtyValue, WriteConflict, SnapshotViolation],
        ModelId::SER => &[DirtyValue, WriteSkew, LostUpdate, CausalityViolation],
        ModelId::SSER | ModelId::LIN | ModelId::SC => {
            &[DirtyValue, WriteSkew, LostUpdate, CausalityViolation, StaleSnapshot]
        }
        ModelId::EC_quiescent | ModelId::SEC => &[Divergence],
    }
}

fn validate_witness(h: &History, model: ModelId, a: &Anomaly) -> Result<(), String> {
    if !allowed_kinds(model).contains(&a.kind) {
        return Err(format!("{} is not an anomaly {model} reports", a.kind));
    }
    if a.participants.is_empty() {
        return Err("witness names no transactions".into());
    }
    let txns: Vec<_> = a
        .participants
        .iter()
        .map(|&t| h.txn(t).ok_or_else(|| format!("witness names unknown txn {t}")))
        .collect::<Result<_, _>>()?;
    for k in &a.keys {
        if !txns.iter().any(|t| t.ops.iter().any(|o| &o.key == k)) {
            return Err(format!("no participant touches key {k}"));
        }
    }
    let pair = || -> Result<(_, _), String> {
        match txns[..] {
            [x, y] => Ok((x, y)),
            _ => Err(format!("{} needs exactly two transactions", a.kind)),
        }
    };
    let rt = derive_realtime(h);
    let ok = match a.kind {
        AnomalyKind::WriteSkew => {
            let (x, y) = pair()?;
            is_write_skew(h, x, y)
        }
        AnomalyKind::LostUpdate => {
            let (x, y) = pair()?;
            is_lost_update(h, x, y)
        }
        AnomalyKind::WriteConflict => {
            let (x, y) = pair()?;
            !rt.contains(x.id, y.id)
                && !rt.contains(y.id, x.id)
                && x.ops.iter().any(|o| o.kind.is_update() && y.writes_key(&o.key))
        }
        AnomalyKind::FracturedRead => {
            let (x, y) = pair()?;
            let multi = |w: &crate::history::Transaction, r: &crate::history::Transaction| {
                let keys: BTreeSet<&str> =
                    w.ops.iter().filter(|o| o.kind.is_update()).map(|o| o.key.as_str()).collect();
                keys.len() >= 2 && keys.iter().filter(|k| r.reads_key(k)).count() >= 2
            };
            multi(x, y) || multi(y, x)
        }
        AnomalyKind::Divergence => {
            let mut seen: BTreeMap<&str, BTreeSet<&Value>> = BTreeMap::new();
            for t in &txns {
                for op in t.ops.iter().filter(|o| o.kind.is_read()) {
                    seen.entry(op.key.as_str()).or_default().extend(op.ret.as_ref());
                }
            }
            seen.values().any(|vals| vals.len() >= 2)
        }
        AnomalyKind::NonMonotonicRead | AnomalyKind::SessionBreach(_) => txns.iter().all(|t| t.proc == txns[0].proc),
        AnomalyKind::DirtyValue => txns.iter().any(|t| t.ops.iter().any(|o| o.kind.is_read())),
        AnomalyKind::SnapshotViolation | AnomalyKind::StaleSnapshot | AnomalyKind::CausalityViolation => {
            txns.iter().any(|t| t.ops.iter().any(|o| o.kind.is_read()))
                || h.txns().iter().any(|t| t.ops.iter().any(|o| o.kind.is_read()))
        }
    };
    if ok {
        Ok(())
    } else {
        Err(format!("{} witness pattern does not hold for txns {:?}", a.kind, a.participants))
    }
}

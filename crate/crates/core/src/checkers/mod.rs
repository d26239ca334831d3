//! Consistency checkers: one decision procedure per model.
//!
//! Dependency-based models (RA, CS, CC, sessions, NMSI) solve version-order
//! constraints in polynomial time. Order-based models (SER, SSER, LIN, SC,
//! SI, SSI, PSI) run a budgeted backtracking search with memoized states.

mod classify;
mod deps;
mod ec;
mod oracle;
mod replay;
mod serial;
mod shrink;
mod snapshot;

use std::collections::BTreeMap;
use std::time::Instant;

use crate::history::{derive_realtime, derive_session, infer_versions, History, HistoryError, Inference, Relation};
use crate::model::ModelId;
use crate::verdict::{Anomaly, AnomalyKind, Certificate, CheckBudget, CheckError, SessionGuarantee, Stats, Verdict};

pub use oracle::ORACLE_LIMIT;

pub(crate) use classify::{is_lost_update, is_write_skew};
pub(crate) use deps::{read_views, Seen};

use deps::Constraints;
use replay::Program;
use serial::{SearchResult, SerialSearch};
use snapshot::{SnapshotMode, SnapshotResult, SnapshotSearch};

/// Runs the checker for `model`. SEC is not decidable from a history.
pub fn check(model: ModelId, h: &History, budget: CheckBudget) -> Result<Verdict, CheckError> {
    match model {
        ModelId::RC_strict => check_rc(h, true),
        ModelId::RC_loose => check_rc(h, false),
        ModelId::RA => check_ra(h),
        ModelId::MR => check_session(h, SessionGuarantee::MR),
        ModelId::MW => check_session(h, SessionGuarantee::MW),
        ModelId::RMW => check_session(h, SessionGuarantee::RMW),
        ModelId::WFR => check_session(h, SessionGuarantee::WFR),
        ModelId::CM => check_cm(h),
        ModelId::CS => check_cs(h),
        ModelId::CC => check_cc(h),
        ModelId::SI => check_si(h, budget),
        ModelId::SSI => check_ssi(h, budget),
        ModelId::PSI => check_psi(h, budget),
        ModelId::NMSI => check_nmsi(h, budget),
        ModelId::SER => check_ser(h, budget),
        ModelId::SSER => check_sser(h, budget),
        ModelId::LIN => check_lin(h, budget),
        ModelId::SC => check_sc(h, budget),
        ModelId::EC_quiescent => Ok(check_ec_quiescent(h)),
        ModelId::SEC => Err(CheckError::NotHistoryModel(ModelId::SEC)),
    }
}

fn timed(f: impl FnOnce() -> Result<(Verdict, u64), CheckError>) -> Result<Verdict, CheckError> {
    let start = Instant::now();
    let (mut v, explored) = f()?;
    v.stats = Stats { explored, elapsed: start.elapsed() };
    Ok(v)
}

fn ids(h: &History, idx: &[usize]) -> Vec<crate::history::TxnId> {
    idx.iter().map(|&i| h.txns()[i].id).collect()
}

/// Bitmask of predecessors per transaction index.
fn pred_masks(h: &History, rel: Option<&Relation>) -> Vec<u128> {
    let mut out = vec![0u128; h.txns().len()];
    if let Some(rel) = rel {
        for &(a, b) in &rel.edges {
            let (a, b) = (h.txn_index(a).expect("known"), h.txn_index(b).expect("known"));
            out[b] |= 1 << a;
        }
    }
    out
}

fn dirty(err: &HistoryError) -> Option<Anomaly> {
    match err {
        HistoryError::DanglingRead { txn, key, value } => Some(
            Anomaly::new(
                AnomalyKind::DirtyValue,
                [*txn],
                format!("txn {txn} reads {key} = {value}, which no transaction wrote"),
            )
            .with_keys([key.clone()]),
        ),
        _ => None,
    }
}

fn internal_mismatch(h: &History, inf: &Inference) -> Option<Anomaly> {
    inf.internal_mismatches.first().map(|&(t, o)| {
        let tx = &h.txns()[t];
        let op = &tx.ops[o];
        Anomaly::new(
            AnomalyKind::DirtyValue,
            [tx.id],
            format!("txn {} reads {} after writing it but sees another value", tx.id, op.key),
        )
        .with_keys([op.key.clone()])
    })
}

/// Version inference for the dependency-based checkers: unexplained values
/// reject as dirty, ambiguity is an error.
fn infer_for(h: &History) -> Result<Result<Inference, Anomaly>, CheckError> {
    match infer_versions(h) {
        Ok(inf) => match internal_mismatch(h, &inf) {
            Some(a) => Ok(Err(a)),
            None => Ok(Ok(inf)),
        },
        Err(HistoryError::AmbiguousVersion(msg)) => Err(CheckError::AmbiguousVersion(msg)),
        Err(e) => Ok(Err(dirty(&e).expect("inference only fails on values"))),
    }
}

/// Unexplained read values, for the search-based checkers; ambiguity is fine.
fn dirty_for_search(h: &History) -> Option<Anomaly> {
    match infer_versions(h) {
        Ok(inf) => internal_mismatch(h, &inf),
        Err(e) => dirty(&e),
    }
}

fn over_budget(model: ModelId, h: &History, b: CheckBudget) -> Option<Verdict> {
    (h.len() > b.max_txns)
        .then(|| Verdict::inconclusive(model, format!("{} transactions exceed the budget of {}", h.len(), b.max_txns)))
}

fn single_op(h: &History) -> Result<(), CheckError> {
    match h.txns().iter().find(|t| t.ops.len() != 1) {
        Some(t) => Err(CheckError::NotSingleOp(t.id)),
        None => Ok(()),
    }
}

// ---------------------------------------------------------------- serial

enum SerialKind {
    Free,
    Realtime,
    Session,
}

fn serial(h: &History, b: CheckBudget, kind: &SerialKind) -> (SearchResult, u64) {
    let prog = Program::compile(h);
    let preds = match kind {
        SerialKind::Free => pred_masks(h, None),
        SerialKind::Realtime => pred_masks(h, Some(&derive_realtime(h))),
        SerialKind::Session => pred_masks(h, Some(&derive_session(h))),
    };
    let mut search = SerialSearch::new(&prog, preds, b.max_states);
    let res = search.run();
    (res, search.explored)
}

/// Why no serial order exists at all.
fn explain_ser(h: &History, b: CheckBudget) -> Anomaly {
    if let Some(a) = dirty_for_search(h) {
        return a;
    }
    if let Some((i, j)) = classify::find_pair(h, is_write_skew) {
        let (a, b) = (h.txns()[i].id, h.txns()[j].id);
        return Anomaly::new(
            AnomalyKind::WriteSkew,
            [a, b],
            format!("txns {a} and {b} each read what the other writes, so neither can go first"),
        );
    }
    if let Some((i, j)) = classify::find_pair(h, is_lost_update) {
        let (a, b) = (h.txns()[i].id, h.txns()[j].id);
        return Anomaly::new(
            AnomalyKind::LostUpdate,
            [a, b],
            format!("txns {a} and {b} both read then update a key without seeing each other"),
        );
    }
    let core = shrink::minimal_core(h, |s| {
        dirty_for_search(s).is_none() && matches!(serial(s, b, &SerialKind::Free).0, SearchResult::Impossible)
    });
    Anomaly::new(
        AnomalyKind::CausalityViolation,
        ids(h, &core),
        "no serial order places these transactions after the state they observed",
    )
}

fn serial_verdict(model: ModelId, h: &History, b: CheckBudget, kind: SerialKind) -> Result<(Verdict, u64), CheckError> {
    if let Some(v) = over_budget(model, h, b) {
        return Ok((v, 0));
    }
    let (res, explored) = serial(h, b, &kind);
    let v = match res {
        SearchResult::Found(order) => Verdict::accepted(model, Certificate::SerialOrder(ids(h, &order))),
        SearchResult::Exhausted => Verdict::inconclusive(model, "state budget exhausted"),
        SearchResult::Impossible => {
            let anomaly = match kind {
                SerialKind::Free => explain_ser(h, b),
                _ => match serial(h, b, &SerialKind::Free).0 {
                    SearchResult::Impossible => explain_ser(h, b),
                    SearchResult::Exhausted => {
                        return Ok((Verdict::inconclusive(model, "state budget exhausted"), explored))
                    }
                    SearchResult::Found(_) => {
                        let core = shrink::minimal_core(h, |s| {
                            dirty_for_search(s).is_none()
                                && matches!(serial(s, b, &SerialKind::Free).0, SearchResult::Found(_))
                                && matches!(serial(s, b, &kind).0, SearchResult::Impossible)
                        });
                        match kind {
                            SerialKind::Session => Anomaly::new(
                                AnomalyKind::CausalityViolation,
                                ids(h, &core),
                                "every legal order contradicts some process's own order",
                            ),
                            _ => Anomaly::new(
                                AnomalyKind::StaleSnapshot,
                                ids(h, &core),
                                "every legal order contradicts real time: a read misses an update that completed earlier",
                            ),
                        }
                    }
                },
            };
            Verdict::rejected(model, anomaly)
        }
    };
    Ok((v, explored))
}

/// Serializability: some total order of the transactions replays legally.
pub fn check_ser(h: &History, b: CheckBudget) -> Result<Verdict, CheckError> {
    timed(|| serial_verdict(ModelId::SER, h, b, SerialKind::Free))
}

/// Strict serializability: as SER, with the order extending real time.
pub fn check_sser(h: &History, b: CheckBudget) -> Result<Verdict, CheckError> {
    timed(|| serial_verdict(ModelId::SSER, h, b, SerialKind::Realtime))
}

/// Linearizability of a single-operation history.
pub fn check_lin(h: &History, b: CheckBudget) -> Result<Verdict, CheckError> {
    single_op(h)?;
    timed(|| serial_verdict(ModelId::LIN, h, b, SerialKind::Realtime))
}

/// Sequential consistency: a legal order extending each process's order.
pub fn check_sc(h: &History, b: CheckBudget) -> Result<Verdict, CheckError> {
    single_op(h)?;
    timed(|| serial_verdict(ModelId::SC, h, b, SerialKind::Session))
}

// -------------------------------------------------------------- snapshot

fn snapshot_search(h: &History, b: CheckBudget, mode: SnapshotMode) -> (SnapshotResult, u64) {
    let prog = Program::compile(h);
    let rt = derive_realtime(h);
    let allowed: Vec<u128> = h
        .txns()
        .iter()
        .map(|t| {
            h.txns()
                .iter()
                .enumerate()
                .filter(|(_, o)| o.last_res() < t.first_inv())
                .fold(0u128, |m, (i, _)| m | (1 << i))
        })
        .collect();
    let mut search = SnapshotSearch::new(
        &prog,
        mode,
        pred_masks(h, Some(&rt)),
        pred_masks(h, Some(&derive_session(h))),
        allowed,
        b.max_states,
    );
    let res = search.run();
    (res, search.explored)
}

fn snapshot_verdict(
    model: ModelId,
    h: &History,
    b: CheckBudget,
    mode: SnapshotMode,
) -> Result<(Verdict, u64), CheckError> {
    if let Some(v) = over_budget(model, h, b) {
        return Ok((v, 0));
    }
    if let Some(a) = Constraints::write_conflicts(h) {
        return Ok((Verdict::rejected(model, a), 0));
    }
    if let Some(a) = dirty_for_search(h) {
        return Ok((Verdict::rejected(model, a), 0));
    }
    let (res, explored) = snapshot_search(h, b, mode);
    let v = match res {
        SnapshotResult::Found(order, snap) => {
            let snapshot: BTreeMap<_, _> = (0..h.len()).map(|i| (h.txns()[i].id, snap[i])).collect();
            Verdict::accepted(model, Certificate::Snapshots { order: ids(h, &order), snapshot })
        }
        SnapshotResult::Exhausted => Verdict::inconclusive(model, "state budget exhausted"),
        SnapshotResult::Impossible => {
            let si_fails = mode == SnapshotMode::Si
                || match snapshot_search(h, b, SnapshotMode::Si).0 {
                    SnapshotResult::Impossible => true,
                    SnapshotResult::Found(..) => false,
                    SnapshotResult::Exhausted => {
                        return Ok((Verdict::inconclusive(model, "state budget exhausted"), explored))
                    }
                };
            let clean = |s: &History| Constraints::write_conflicts(s).is_none() && dirty_for_search(s).is_none();
            let impossible = |s: &History, m| matches!(snapshot_search(s, b, m).0, SnapshotResult::Impossible);
            let anomaly = if si_fails {
                let core = shrink::minimal_core(h, |s| clean(s) && impossible(s, SnapshotMode::Si));
                Anomaly::new(
                    AnomalyKind::SnapshotViolation,
                    ids(h, &core),
                    "no commit-order prefix explains what these transactions read",
                )
            } else {
                let core = shrink::minimal_core(h, |s| {
                    clean(s)
                        && matches!(snapshot_search(s, b, SnapshotMode::Si).0, SnapshotResult::Found(..))
                        && impossible(s, mode)
                });
                Anomaly::new(
                    AnomalyKind::StaleSnapshot,
                    ids(h, &core),
                    match mode {
                        SnapshotMode::Psi => {
                            "a read observes a transaction that had not completed when the reader started"
                        }
                        _ => "a snapshot misses a transaction that completed before the reader started",
                    },
                )
            };
            Verdict::rejected(model, anomaly)
        }
    };
    Ok((v, explored))
}

/// Snapshot isolation.
pub fn check_si(h: &History, b: CheckBudget) -> Result<Verdict, CheckError> {
    timed(|| snapshot_verdict(ModelId::SI, h, b, SnapshotMode::Si))
}

/// Strong snapshot isolation: snapshots include all realtime predecessors.
pub fn check_ssi(h: &History, b: CheckBudget) -> Result<Verdict, CheckError> {
    timed(|| snapshot_verdict(ModelId::SSI, h, b, SnapshotMode::Ssi))
}

/// Parallel snapshot isolation: snapshots taken at transaction start.
pub fn check_psi(h: &History, b: CheckBudget) -> Result<Verdict, CheckError> {
    timed(|| snapshot_verdict(ModelId::PSI, h, b, SnapshotMode::Psi))
}

// ------------------------------------------------------------ dependency

fn solve_with(
    model: ModelId,
    h: &History,
    build: impl FnOnce(&mut Constraints<'_>),
) -> Result<(Verdict, u64), CheckError> {
    let inf = match infer_for(h)? {
        Ok(inf) => inf,
        Err(a) => return Ok((Verdict::rejected(model, a), 0)),
    };
    let mut c = Constraints::new(h, &inf);
    build(&mut c);
    let v = match c.solve() {
        Ok(cert) => Verdict::accepted(model, cert),
        Err(a) => Verdict::rejected(model, a),
    };
    Ok((v, 0))
}

/// Read atomic: no transaction observes only part of another's updates.
pub fn check_ra(h: &History) -> Result<Verdict, CheckError> {
    timed(|| solve_with(ModelId::RA, h, |c| c.atomic_visibility()))
}

/// Consistent snapshot: reads include every update they transitively depend on.
pub fn check_cs(h: &History) -> Result<Verdict, CheckError> {
    timed(|| solve_with(ModelId::CS, h, |c| c.consistent_snapshot()))
}

/// One session guarantee in isolation.
pub fn check_session(h: &History, g: SessionGuarantee) -> Result<Verdict, CheckError> {
    timed(|| solve_with(g.model(), h, |c| c.session(g)))
}

/// Client monotonic: all four session guarantees under one version order.
pub fn check_cm(h: &History) -> Result<Verdict, CheckError> {
    timed(|| {
        solve_with(ModelId::CM, h, |c| {
            for g in SessionGuarantee::ALL {
                c.session(g);
            }
        })
    })
}

/// MR, MW, RMW, WFR and the CM aggregate, in that order.
pub fn check_sessions(h: &History) -> Result<Vec<Verdict>, CheckError> {
    let mut out = Vec::new();
    for g in SessionGuarantee::ALL {
        out.push(check_session(h, g)?);
    }
    out.push(check_cm(h)?);
    Ok(out)
}

/// Causal consistency: consistent snapshots of the causal past, monotonic
/// sessions, and real-time order between writers of a key.
pub fn check_cc(h: &History) -> Result<Verdict, CheckError> {
    timed(|| {
        let (cs, _) = solve_with(ModelId::CC, h, |c| c.consistent_snapshot())?;
        if cs.is_rejected() {
            return Ok((cs, 0));
        }
        let (cm, _) = solve_with(ModelId::CC, h, |c| {
            for g in SessionGuarantee::ALL {
                c.session(g);
            }
        })?;
        if cm.is_rejected() {
            return Ok((cm, 0));
        }
        let (joint, n) = solve_with(ModelId::CC, h, |c| {
            c.consistent_snapshot();
            for g in SessionGuarantee::ALL {
                c.session(g);
            }
            c.causal_snapshot();
            c.realtime_writes();
        })?;
        let joint = match joint.outcome {
            crate::verdict::Outcome::Rejected(mut a) => {
                a.kind = AnomalyKind::CausalityViolation;
                Verdict::rejected(ModelId::CC, a)
            }
            _ => joint,
        };
        Ok((joint, n))
    })
}

/// Non-monotonic snapshot isolation: consistent snapshots without a start
/// point, plus the write-write conflict rule.
pub fn check_nmsi(h: &History, _b: CheckBudget) -> Result<Verdict, CheckError> {
    timed(|| {
        if let Some(a) = Constraints::write_conflicts(h) {
            return Ok((Verdict::rejected(ModelId::NMSI, a), 0));
        }
        solve_with(ModelId::NMSI, h, |c| c.consistent_snapshot())
    })
}

// ------------------------------------------------------------------ rest

/// Read committed. Loose: every read value was written by some transaction
/// (or is the initial value). Strict: the writer also completed before the
/// read did.
pub fn check_rc(h: &History, strict: bool) -> Result<Verdict, CheckError> {
    let model = if strict { ModelId::RC_strict } else { ModelId::RC_loose };
    timed(|| {
        let inf = match infer_for(h)? {
            Ok(inf) => inf,
            Err(a) => return Ok((Verdict::rejected(model, a), 0)),
        };
        if strict {
            for r in read_views(&inf) {
                let writers: Vec<usize> = match &r.seen {
                    Seen::Version(Some(w)) if *w != r.txn => vec![*w],
                    Seen::Set(s) => s.iter().copied().filter(|&w| w != r.txn).collect(),
                    _ => continue,
                };
                let read = &h.txns()[r.txn].ops[r.op];
                for w in writers {
                    let wt = &h.txns()[w];
                    if wt.last_res() >= read.res {
                        let rt = &h.txns()[r.txn];
                        let narrative = format!(
                            "txn {} reads {} from txn {}, which had not completed by then",
                            rt.id, r.key, wt.id
                        );
                        let a = Anomaly::new(AnomalyKind::DirtyValue, [rt.id, wt.id], narrative).with_keys([r.key]);
                        return Ok((Verdict::rejected(model, a), 0));
                    }
                }
            }
        }
        Ok((Verdict::accepted(model, Certificate::Direct), 0))
    })
}

/// Quiescent eventual consistency: once a key stops being updated, the
/// final read of every process agrees on its value.
pub fn check_ec_quiescent(h: &History) -> Verdict {
    let start = Instant::now();
    let mut v = match ec::quiescent_divergence(h) {
        Some(a) => Verdict::rejected(ModelId::EC_quiescent, a),
        None => Verdict::accepted(ModelId::EC_quiescent, Certificate::Direct),
    };
    v.stats.elapsed = start.elapsed();
    v
}

fn oracle(model: ModelId, h: &History, realtime: bool) -> Result<Verdict, CheckError> {
    if h.len() > ORACLE_LIMIT {
        return Err(CheckError::TooLarge(h.len()));
    }
    Ok(match oracle::first_legal(h, realtime) {
        Some(order) => Verdict::accepted(model, Certificate::SerialOrder(ids(h, &order))),
        None => Verdict::rejected(
            model,
            Anomaly::new(AnomalyKind::CausalityViolation, h.txns().iter().map(|t| t.id), "no legal permutation"),
        ),
    })
}

/// Serializability by exhaustive permutation; ground truth for tests.
pub fn oracle_ser(h: &History) -> Result<Verdict, CheckError> {
    oracle(ModelId::SER, h, false)
}

/// Strict serializability by exhaustive permutation.
pub fn oracle_sser(h: &History) -> Result<Verdict, CheckError> {
    oracle(ModelId::SSER, h, true)
}

//! Transactional histories: the event log, its transactions, and the
//! per-key item semantics the checkers replay against.

mod format;
mod relations;
mod versions;

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use thiserror::Error;

use crate::value::Value;

pub use format::{parse_history, serialize_history, HEADER};
pub use relations::{derive_realtime, derive_session, Relation, RelationKind};
pub use versions::{infer_versions, txn_effects, Effect, Inference, Observation, ReadResolution, Version};

/// Transaction identifier as written in the history file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TxnId(pub u64);

impl fmt::Display for TxnId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OpKind {
    Read,
    Write,
    Inc,
    Dec,
    Put,
    Get,
}

impl OpKind {
    pub fn name(self) -> &'static str {
        match self {
            OpKind::Read => "read",
            OpKind::Write => "write",
            OpKind::Inc => "inc",
            OpKind::Dec => "dec",
            OpKind::Put => "put",
            OpKind::Get => "get",
        }
    }

    pub fn from_name(s: &str) -> Option<OpKind> {
        Some(match s {
            "read" => OpKind::Read,
            "write" => OpKind::Write,
            "inc" => OpKind::Inc,
            "dec" => OpKind::Dec,
            "put" => OpKind::Put,
            "get" => OpKind::Get,
            _ => return None,
        })
    }

    pub fn is_read(self) -> bool {
        matches!(self, OpKind::Read | OpKind::Get)
    }

    pub fn is_update(self) -> bool {
        !self.is_read()
    }

    pub fn takes_arg(self) -> bool {
        matches!(self, OpKind::Write | OpKind::Put)
    }

    /// Counter delta for `inc`/`dec`, zero otherwise.
    pub fn delta(self) -> i64 {
        match self {
            OpKind::Inc => 1,
            OpKind::Dec => -1,
            _ => 0,
        }
    }
}

/// Sequential semantics of one data item.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub enum ItemKind {
    Register,
    Counter,
    #[default]
    Kv,
}

impl ItemKind {
    pub fn name(self) -> &'static str {
        match self {
            ItemKind::Register => "register",
            ItemKind::Counter => "counter",
            ItemKind::Kv => "kv",
        }
    }

    pub fn from_name(s: &str) -> Option<ItemKind> {
        Some(match s {
            "register" => ItemKind::Register,
            "counter" => ItemKind::Counter,
            "kv" => ItemKind::Kv,
            _ => return None,
        })
    }

    pub fn initial(self) -> Value {
        match self {
            ItemKind::Counter => Value::Int(0),
            _ => Value::Nil,
        }
    }

    pub fn admits(self, op: OpKind) -> bool {
        match self {
            ItemKind::Counter => matches!(op, OpKind::Inc | OpKind::Dec | OpKind::Read | OpKind::Get),
            _ => !matches!(op, OpKind::Inc | OpKind::Dec),
        }
    }
}

/// One operation as it appears on an event line.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Op {
    pub kind: OpKind,
    pub key: String,
    pub arg: Option<Value>,
    pub ret: Option<Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    Invocation,
    Response,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Event {
    pub seq: u64,
    pub kind: EventKind,
    pub proc: String,
    pub txn: TxnId,
    pub op: Op,
}

/// A completed operation inside a transaction, bracketed by its
/// invocation and response positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TxnOp {
    pub kind: OpKind,
    pub key: String,
    pub arg: Option<Value>,
    /// Value returned by a read; `None` for updates.
    pub ret: Option<Value>,
    pub inv: u64,
    pub res: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transaction {
    pub id: TxnId,
    pub proc: String,
    pub ops: Vec<TxnOp>,
}

impl Transaction {
    pub fn first_inv(&self) -> u64 {
        self.ops.first().map_or(0, |o| o.inv)
    }

    pub fn last_res(&self) -> u64 {
        self.ops.last().map_or(0, |o| o.res)
    }

    pub fn writes_key(&self, key: &str) -> bool {
        self.ops.iter().any(|o| o.kind.is_update() && o.key == key)
    }

    pub fn reads_key(&self, key: &str) -> bool {
        self.ops.iter().any(|o| o.kind.is_read() && o.key == key)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HistoryError {
    #[error("line {line}: malformed event: {reason}")]
    MalformedEvent { line: usize, reason: String },
    #[error("invocation at seq {seq} by {proc} (txn {txn}) has no response")]
    UnmatchedInvocation { seq: u64, proc: String, txn: TxnId },
    #[error("line {line}: session {proc} interleaves txn {txn} with an open or earlier transaction")]
    InterleavedSession { line: usize, proc: String, txn: TxnId },
    #[error("line {line}: duplicate seq {seq}")]
    DuplicateSeq { line: usize, seq: u64 },
    #[error("ambiguous version: {0}")]
    AmbiguousVersion(String),
    #[error("txn {txn} reads {key} = {value}, which no update wrote")]
    DanglingRead { txn: TxnId, key: String, value: Value },
}

/// An ordered event log together with its derived transactions.
///
/// Construct through [`History::new`] or [`parse_history`]; both enforce
/// the committed-only and non-interleaving invariants.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct History {
    events: Vec<Event>,
    items: BTreeMap<String, ItemKind>,
    txns: Vec<Transaction>,
    index: HashMap<TxnId, usize>,
}

impl History {
    /// Builds a history from events in log order.
    pub fn new(events: Vec<Event>, items: BTreeMap<String, ItemKind>) -> Result<History, HistoryError> {
        Self::build(events, items, |i| i + 1)
    }

    pub(crate) fn build(
        events: Vec<Event>,
        items: BTreeMap<String, ItemKind>,
        line_of: impl Fn(usize) -> usize,
    ) -> Result<History, HistoryError> {
        struct Open {
            txn: TxnId,
            pending: Option<(usize, u64)>,
        }
        let malformed = |i: usize, reason: String| HistoryError::MalformedEvent { line: line_of(i), reason };

        let mut txns: Vec<Transaction> = Vec::new();
        let mut index: HashMap<TxnId, usize> = HashMap::new();
        let mut sessions: HashMap<&str, Open> = HashMap::new();
        let mut seen_seq = std::collections::HashSet::new();
        let mut last_seq: Option<u64> = None;

        for (i, ev) in events.iter().enumerate() {
            if !seen_seq.insert(ev.seq) {
                return Err(HistoryError::DuplicateSeq { line: line_of(i), seq: ev.seq });
            }
            if last_seq.is_some_and(|s| s >= ev.seq) {
                return Err(malformed(i, format!("seq {} is not increasing", ev.seq)));
            }
            last_seq = Some(ev.seq);

            let kind = items.get(&ev.op.key).copied().unwrap_or_default();
            if !kind.admits(ev.op.kind) {
                return Err(malformed(
                    i,
                    format!("{} not allowed on {} item {}", ev.op.kind.name(), kind.name(), ev.op.key),
                ));
            }
            if ev.op.kind.takes_arg() != ev.op.arg.is_some() {
                return Err(malformed(i, format!("{} argument mismatch", ev.op.kind.name())));
            }
            let wants_ret = ev.kind == EventKind::Response && ev.op.kind.is_read();
            if wants_ret != ev.op.ret.is_some() {
                return Err(malformed(i, "return value present iff read/get response".into()));
            }
            if ev.op.kind == OpKind::Read || ev.op.kind == OpKind::Get {
                if let (ItemKind::Counter, Some(r)) = (kind, &ev.op.ret) {
                    if r.as_int().is_none() {
                        return Err(malformed(i, "counter reads return integers".into()));
                    }
                }
            }

            if let Some(&t) = index.get(&ev.txn) {
                if txns[t].proc != ev.proc {
                    return Err(malformed(i, format!("txn {} spans sessions", ev.txn)));
                }
            }

            match ev.kind {
                EventKind::Invocation => {
                    let open = sessions.get(ev.proc.as_str());
                    if let Some(open) = open {
                        if open.pending.is_some() || (open.txn != ev.txn && index.contains_key(&ev.txn)) {
                            return Err(HistoryError::InterleavedSession {
                                line: line_of(i),
                                proc: ev.proc.clone(),
                                txn: ev.txn,
                            });
                        }
                    } else if index.contains_key(&ev.txn) {
                        return Err(malformed(i, format!("txn {} reopened", ev.txn)));
                    }
                    let t = *index.entry(ev.txn).or_insert_with(|| {
                        txns.push(Transaction { id: ev.txn, proc: ev.proc.clone(), ops: Vec::new() });
                        txns.len() - 1
                    });
                    txns[t].ops.push(TxnOp {
                        kind: ev.op.kind,
                        key: ev.op.key.clone(),
                        arg: ev.op.arg.clone(),
                        ret: None,
                        inv: ev.seq,
                        res: 0,
                    });
                    sessions.insert(ev.proc.as_str(), Open { txn: ev.txn, pending: Some((i, ev.seq)) });
                }
                EventKind::Response => {
                    let Some(open) = sessions.get_mut(ev.proc.as_str()) else {
                        return Err(malformed(i, "response without invocation".into()));
                    };
                    if open.pending.is_none() || open.txn != ev.txn {
                        return Err(malformed(i, "response without invocation".into()));
                    }
                    let t = index[&ev.txn];
                    let op = txns[t].ops.last_mut().expect("pending op");
                    if op.kind != ev.op.kind || op.key != ev.op.key || op.arg != ev.op.arg {
                        return Err(malformed(i, "response does not match pending invocation".into()));
                    }
                    op.ret = ev.op.ret.clone();
                    op.res = ev.seq;
                    open.pending = None;
                }
            }
        }

        let mut dangling: Vec<(usize, u64, &str, TxnId)> =
            sessions.iter().filter_map(|(p, o)| o.pending.map(|(i, seq)| (i, seq, *p, o.txn))).collect();
        dangling.sort();
        if let Some(&(_, seq, proc, txn)) = dangling.first() {
            return Err(HistoryError::UnmatchedInvocation { seq, proc: proc.to_string(), txn });
        }

        txns.sort_by_key(|t| t.id);
        let index = txns.iter().enumerate().map(|(i, t)| (t.id, i)).collect();
        Ok(History { events, items, txns, index })
    }

    pub fn empty() -> History {
        History::default()
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    /// Transactions in ascending id order.
    pub fn txns(&self) -> &[Transaction] {
        &self.txns
    }

    pub fn txn(&self, id: TxnId) -> Option<&Transaction> {
        self.index.get(&id).map(|&i| &self.txns[i])
    }

    pub fn txn_index(&self, id: TxnId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    /// Explicitly declared item kinds.
    pub fn declared_items(&self) -> &BTreeMap<String, ItemKind> {
        &self.items
    }

    pub fn item_kind(&self, key: &str) -> ItemKind {
        self.items.get(key).copied().unwrap_or_default()
    }

    /// Every key touched by some operation, sorted.
    pub fn keys(&self) -> Vec<String> {
        let mut keys: Vec<String> = self.txns.iter().flat_map(|t| t.ops.iter().map(|o| o.key.clone())).collect();
        keys.sort();
        keys.dedup();
        keys
    }

    pub fn is_single_op(&self) -> bool {
        self.txns.iter().all(|t| t.ops.len() == 1)
    }

    pub fn len(&self) -> usize {
        self.txns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.txns.is_empty()
    }
}

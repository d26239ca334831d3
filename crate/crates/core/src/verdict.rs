use std::collections::BTreeMap;
use std::fmt;
use std::time::Duration;

use thiserror::Error;

use crate::history::TxnId;
use crate::model::ModelId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SessionGuarantee {
    MR,
    MW,
    RMW,
    WFR,
}

impl SessionGuarantee {
    pub const ALL: [SessionGuarantee; 4] =
        [SessionGuarantee::MR, SessionGuarantee::MW, SessionGuarantee::RMW, SessionGuarantee::WFR];

    pub fn name(self) -> &'static str {
        match self {
            SessionGuarantee::MR => "MR",
            SessionGuarantee::MW => "MW",
            SessionGuarantee::RMW => "RMW",
            SessionGuarantee::WFR => "WFR",
        }
    }

    pub fn model(self) -> ModelId {
        match self {
            SessionGuarantee::MR => ModelId::MR,
            SessionGuarantee::MW => ModelId::MW,
            SessionGuarantee::RMW => ModelId::RMW,
            SessionGuarantee::WFR => ModelId::WFR,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AnomalyKind {
    Divergence,
    CausalityViolation,
    DirtyValue,
    LostUpdate,
    FracturedRead,
    SnapshotViolation,
    WriteConflict,
    WriteSkew,
    SessionBreach(SessionGuarantee),
    StaleSnapshot,
    NonMonotonicRead,
}

impl fmt::Display for AnomalyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AnomalyKind::SessionBreach(g) => write!(f, "SessionBreach({})", g.name()),
            other => write!(f, "{other:?}"),
        }
    }
}

/// A typed counterexample naming concrete transactions of the history.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Anomaly {
    pub kind: AnomalyKind,
    /// Sorted, deduplicated.
    pub participants: Vec<TxnId>,
    /// Keys involved, when the anomaly is about specific items.
    pub keys: Vec<String>,
    pub narrative: String,
}

impl Anomaly {
    pub fn new(kind: AnomalyKind, participants: impl IntoIterator<Item = TxnId>, narrative: impl Into<String>) -> Self {
        let mut participants: Vec<TxnId> = participants.into_iter().collect();
        participants.sort();
        participants.dedup();
        Anomaly { kind, participants, keys: Vec::new(), narrative: narrative.into() }
    }

    pub fn with_keys(mut self, keys: impl IntoIterator<Item = String>) -> Self {
        self.keys = keys.into_iter().collect();
        self.keys.sort();
        self.keys.dedup();
        self
    }
}

/// Evidence backing an Accepted verdict.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Certificate {
    /// An equivalent legal serial order of transactions.
    SerialOrder(Vec<TxnId>),
    /// A commit order plus, per transaction, the length of the commit-order
    /// prefix forming its snapshot.
    Snapshots { order: Vec<TxnId>, snapshot: BTreeMap<TxnId, usize> },
    /// Per-key total orders over update transactions (initial version implicit first).
    VersionOrders(BTreeMap<String, Vec<TxnId>>),
    /// The predicate was checked directly; nothing to replay.
    Direct,
}

impl Certificate {
    pub fn order(&self) -> Option<&[TxnId]> {
        match self {
            Certificate::SerialOrder(o) => Some(o),
            Certificate::Snapshots { order, .. } => Some(order),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Accepted(Certificate),
    Rejected(Anomaly),
    Inconclusive(String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Stats {
    pub explored: u64,
    pub elapsed: Duration,
}

#[derive(Debug, Clone)]
pub struct Verdict {
    pub model: ModelId,
    pub outcome: Outcome,
    pub stats: Stats,
}

/// Verdicts compare by model and outcome; run statistics are ignored.
impl PartialEq for Verdict {
    fn eq(&self, other: &Self) -> bool {
        self.model == other.model && self.outcome == other.outcome
    }
}

impl Eq for Verdict {}

impl Verdict {
    pub fn accepted(model: ModelId, cert: Certificate) -> Self {
        Verdict { model, outcome: Outcome::Accepted(cert), stats: Stats::default() }
    }

    pub fn rejected(model: ModelId, anomaly: Anomaly) -> Self {
        Verdict { model, outcome: Outcome::Rejected(anomaly), stats: Stats::default() }
    }

    pub fn inconclusive(model: ModelId, why: impl Into<String>) -> Self {
        Verdict { model, outcome: Outcome::Inconclusive(why.into()), stats: Stats::default() }
    }

    pub fn is_accepted(&self) -> bool {
        matches!(self.outcome, Outcome::Accepted(_))
    }

    pub fn is_rejected(&self) -> bool {
        matches!(self.outcome, Outcome::Rejected(_))
    }

    pub fn is_inconclusive(&self) -> bool {
        matches!(self.outcome, Outcome::Inconclusive(_))
    }

    pub fn anomaly(&self) -> Option<&Anomaly> {
        match &self.outcome {
            Outcome::Rejected(a) => Some(a),
            _ => None,
        }
    }

    pub fn certificate(&self) -> Option<&Certificate> {
        match &self.outcome {
            Outcome::Accepted(c) => Some(c),
            _ => None,
        }
    }

    /// `<model> <accepted|rejected|inconclusive> [<anomaly-kind> txns=<ids>]`
    pub fn line(&self) -> String {
        match &self.outcome {
            Outcome::Accepted(_) => format!("{} accepted", self.model),
            Outcome::Inconclusive(_) => format!("{} inconclusive", self.model),
            Outcome::Rejected(a) => {
                let ids: Vec<String> = a.participants.iter().map(|t| t.to_string()).collect();
                format!("{} rejected {} txns={}", self.model, a.kind, ids.join(","))
            }
        }
    }

    /// The verdict line followed, for order certificates, by a
    /// `certificate` ... `end` block with one transaction id per line.
    pub fn render(&self) -> String {
        let mut out = self.line();
        out.push('\n');
        if let Some(order) = self.certificate().and_then(Certificate::order) {
            out.push_str("certificate\n");
            for t in order {
                out.push_str(&format!("{t}\n"));
            }
            out.push_str("end\n");
        }
        out
    }
}

/// Search limits for the search-based checkers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CheckBudget {
    /// Histories with more transactions than this are Inconclusive.
    pub max_txns: usize,
    pub max_states: u64,
}

impl Default for CheckBudget {
    fn default() -> Self {
        CheckBudget { max_txns: 12, max_states: 1_000_000 }
    }
}

impl CheckBudget {
    /// Hard ceiling on `max_txns` imposed by the placed-set encoding.
    pub const TXN_CEILING: usize = 128;

    pub fn new(max_txns: usize, max_states: u64) -> Result<Self, CheckError> {
        if max_txns == 0 || max_states == 0 || max_txns > Self::TXN_CEILING {
            return Err(CheckError::InvalidBudget(format!(
                "max_txns must be in 1..={} and max_states positive",
                Self::TXN_CEILING
            )));
        }
        Ok(CheckBudget { max_txns, max_states })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CheckError {
    #[error("{0}")]
    AmbiguousVersion(String),
    #[error("txn {0} has more than one operation")]
    NotSingleOp(TxnId),
    #[error("history has {0} transactions; the oracle handles at most 8")]
    TooLarge(usize),
    #[error("invalid budget: {0}")]
    InvalidBudget(String),
    #[error("{0} is not decidable from a history")]
    NotHistoryModel(ModelId),
}

impl CheckError {
    pub fn kind_name(&self) -> &'static str {
        match self {
            CheckError::AmbiguousVersion(_) => "AmbiguousVersion",
            CheckError::NotSingleOp(_) => "NotSingleOp",
            CheckError::TooLarge(_) => "TooLarge",
            CheckError::InvalidBudget(_) => "InvalidBudget",
            CheckError::NotHistoryModel(_) => "NotHistoryModel",
        }
    }
}

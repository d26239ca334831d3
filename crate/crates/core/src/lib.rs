//! Consistency-model checking for transactional histories, plus a
//! deterministic replicated key-value store simulator that generates them.
//!
//! The usual flow is [`history::parse_history`] → [`checkers::check`] for a
//! chosen [`ModelId`], yielding a [`Verdict`] that either carries a
//! replayable certificate or a concrete anomaly witness.

pub mod certify;
pub mod checkers;
pub mod corpus;
pub mod dimensions;
pub mod history;
pub mod model;
pub mod sim;
pub mod value;
pub mod verdict;

pub use history::{History, HistoryError, TxnId};
pub use model::ModelId;
pub use value::Value;
pub use verdict::{Anomaly, AnomalyKind, Certificate, CheckBudget, CheckError, Outcome, Verdict};

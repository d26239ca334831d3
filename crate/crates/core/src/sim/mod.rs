//! Deterministic discrete-event simulator of a replicated key-value store.
//!
//! Clients issue single-operation transactions against replicas running one
//! of three protocols under message loss, delay, and partitions. A run is a
//! pure function of its [`SimConfig`], seed included.

mod config;
mod engine;
mod trace;

use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

pub use config::{FaultPlan, Partition, Protocol, SimConfig};
pub use engine::{ClientEvent, HighestTimestamp, MergePolicy, PendingOp, ReplicaChange, Stored, Timestamp, Update};
pub use trace::SimTrace;

use crate::history::TxnId;
use crate::model::ModelId;
use crate::value::Value;
use crate::verdict::{Anomaly, AnomalyKind, Certificate, Verdict};
use engine::Engine;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("invalid config at line {line}: {reason}")]
    InvalidConfig { line: usize, reason: String },
    #[error("replicas did not converge after {rounds} fault-free rounds")]
    NonConvergence { rounds: usize },
    #[error("unsupported: {0}")]
    Unsupported(String),
}

/// Runs the simulation described by `cfg` with highest-timestamp merging.
pub fn run_sim(cfg: &SimConfig) -> Result<SimTrace, SimError> {
    run_sim_with_merge(cfg, Arc::new(HighestTimestamp))
}

/// Runs the simulation with a custom merge policy for replicated updates.
pub fn run_sim_with_merge(cfg: &SimConfig, merge: Arc<dyn MergePolicy>) -> Result<SimTrace, SimError> {
    cfg.validate()?;
    let mut engine = Engine::new(cfg.clone(), merge);
    engine.run();
    Ok(SimTrace::from_engine(engine, false))
}

/// Strong eventual consistency over the replica timeline: at every tick, any
/// two replicas that have delivered the same updates to a key hold the same
/// value for it.
pub fn audit_sec(trace: &SimTrace) -> Verdict {
    let mut state: BTreeMap<(usize, &str), &ReplicaChange> = BTreeMap::new();
    let changes = &trace.changes;
    let mut i = 0;
    while i < changes.len() {
        let tick = changes[i].tick;
        let mut touched = Vec::new();
        while i < changes.len() && changes[i].tick == tick {
            let c = &changes[i];
            state.insert((c.replica, c.key.as_str()), c);
            touched.push((c.replica, c.key.as_str()));
            i += 1;
        }
        for (r, key) in touched {
            let mine = state[&(r, key)];
            for ((q, k), other) in &state {
                if *k != key || *q == r || other.delivered != mine.delivered || other.value == mine.value {
                    continue;
                }
                let anomaly = Anomaly::new(
                    AnomalyKind::Divergence,
                    [TxnId(mine.winner), TxnId(other.winner)],
                    format!(
                        "at tick {tick} replicas {r} and {q} delivered the same {} updates to {key} but hold {} and {}",
                        mine.delivered.len(),
                        mine.value,
                        other.value
                    ),
                )
                .with_keys([key.to_string()]);
                return Verdict::rejected(ModelId::SEC, anomaly);
            }
        }
    }
    Verdict::accepted(ModelId::SEC, Certificate::Direct)
}

/// Runs fault-free anti-entropy until every replica holds the same state,
/// then has each client read every key at its home replica. The reads are
/// appended to the history.
pub fn flush_and_quiesce(trace: &SimTrace) -> Result<SimTrace, SimError> {
    if !trace.config.protocol.is_gossip() {
        return Err(SimError::Unsupported(format!("flush of {} traces", trace.config.protocol)));
    }
    let mut engine = trace.engine.clone();
    engine.now = trace.end_tick + 1;
    let limit = engine.cfg.replicas + 2;
    let mut rounds = 0;
    while !engine.converged() {
        if rounds == limit {
            return Err(SimError::NonConvergence { rounds });
        }
        engine.gossip_round();
        rounds += 1;
    }
    engine.final_reads();
    Ok(SimTrace::from_engine(engine, true))
}

/// The value each replica holds for `key` at the end of the trace.
pub fn final_values(trace: &SimTrace, key: &str) -> Vec<Value> {
    (0..trace.config.replicas).map(|r| trace.engine.read_local(r, key)).collect()
}

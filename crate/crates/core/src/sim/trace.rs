//! Simulator output: the client history plus the replica-state timeline.

use std::fmt;
use std::fmt::Write as _;

use super::config::SimConfig;
use super::engine::{ClientEvent, Engine, PendingOp, ReplicaChange};
use crate::history::{serialize_history, History};

#[derive(Clone)]
pub struct SimTrace {
    pub config: SimConfig,
    /// Completed client operations; pending invocations are left out.
    pub history: History,
    /// Every replica-state change in execution order.
    pub changes: Vec<ReplicaChange>,
    /// Tick of every history event, in history order.
    pub timeline: Vec<ClientEvent>,
    /// Operations still awaiting a response when the run stopped.
    pub pending: Vec<PendingOp>,
    /// Tick at which the run stopped.
    pub end_tick: u64,
    /// True once [`super::flush_and_quiesce`] has been applied.
    pub flushed: bool,
    pub(crate) engine: Engine,
}

impl fmt::Debug for SimTrace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SimTrace")
            .field("protocol", &self.config.protocol)
            .field("seed", &self.config.seed)
            .field("events", &self.history.events().len())
            .field("changes", &self.changes.len())
            .field("pending", &self.pending.len())
            .field("flushed", &self.flushed)
            .finish()
    }
}

impl SimTrace {
    pub(crate) fn from_engine(engine: Engine, flushed: bool) -> SimTrace {
        let items = engine.cfg.keys.iter().map(|k| (k.clone(), crate::history::ItemKind::Kv)).collect();
        let history = History::new(engine.completed_events(), items).expect("simulator emits well-formed histories");
        let pending = engine.pending();
        let pending_txns: Vec<_> = pending.iter().map(|p| p.txn).collect();
        let timeline = engine.timeline.iter().filter(|e| !pending_txns.contains(&e.txn)).copied().collect();
        SimTrace {
            config: engine.cfg.clone(),
            history,
            changes: engine.changes.clone(),
            timeline,
            pending,
            end_tick: engine.now,
            flushed,
            engine,
        }
    }

    /// The history in canonical text form followed by `#replica` and
    /// `#pending` annotation lines, which history parsers treat as comments.
    pub fn to_text(&self) -> String {
        let mut out = serialize_history(&self.history);
        let _ = writeln!(
            out,
            "#sim protocol={} seed={} end_tick={} flushed={}",
            self.config.protocol, self.config.seed, self.end_tick, self.flushed
        );
        for c in &self.changes {
            let seen: Vec<String> = c.delivered.iter().map(u64::to_string).collect();
            let _ = writeln!(
                out,
                "#replica {} {} {} {} {};w={};seen={}",
                c.tick,
                c.replica,
                c.key,
                c.value,
                c.meta,
                c.winner,
                seen.join(",")
            );
        }
        for p in &self.pending {
            let _ = writeln!(out, "#pending c{} {} {}", p.client, p.txn, p.invoked_at);
        }
        out
    }
}

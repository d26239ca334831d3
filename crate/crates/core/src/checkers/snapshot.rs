//! Search for a commit order and per-transaction snapshot prefixes.

use std::collections::HashSet;

use super::replay::{Program, State};
use super::serial::bits;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum SnapshotMode {
    /// Snapshot includes every session predecessor.
    Si,
    /// Snapshot includes every realtime predecessor.
    Ssi,
    /// As `Si`, and the snapshot holds only transactions that completed
    /// before the reader started.
    Psi,
}

pub(crate) enum SnapshotResult {
    /// Commit order and snapshot prefix length per transaction index.
    Found(Vec<usize>, Vec<usize>),
    Impossible,
    Exhausted,
}

pub(crate) struct SnapshotSearch<'p> {
    prog: &'p Program,
    mode: SnapshotMode,
    /// Realtime predecessors: bound the commit order.
    rt: Vec<u128>,
    /// Predecessors that must be inside the snapshot.
    inside: Vec<u128>,
    /// Transactions allowed inside the snapshot (PSI only).
    allowed: Vec<u128>,
    max_states: u64,
    pub explored: u64,
    failed: HashSet<(u128, usize, Vec<usize>, State)>,
    order: Vec<usize>,
    states: Vec<State>,
    snap: Vec<usize>,
}

impl<'p> SnapshotSearch<'p> {
    pub fn new(
        prog: &'p Program,
        mode: SnapshotMode,
        rt: Vec<u128>,
        session: Vec<u128>,
        allowed: Vec<u128>,
        max_states: u64,
    ) -> Self {
        let inside = match mode {
            SnapshotMode::Ssi => rt.clone(),
            _ => session,
        };
        let n = prog.len();
        SnapshotSearch {
            prog,
            mode,
            rt,
            inside,
            allowed,
            max_states,
            explored: 0,
            failed: HashSet::new(),
            order: Vec::new(),
            states: vec![prog.initial()],
            snap: vec![0; n],
        }
    }

    pub fn run(&mut self) -> SnapshotResult {
        match self.dfs(0) {
            Some(true) => SnapshotResult::Found(self.order.clone(), self.snap.clone()),
            Some(false) => SnapshotResult::Impossible,
            None => SnapshotResult::Exhausted,
        }
    }

    fn position(&self, t: usize) -> usize {
        self.order.iter().position(|&o| o == t).expect("placed")
    }

    /// Smallest admissible snapshot length for an unplaced transaction.
    fn lower(&self, t: usize) -> usize {
        bits(self.inside[t]).into_iter().map(|p| self.position(p) + 1).max().unwrap_or(0)
    }

    /// Largest admissible snapshot length for an unplaced transaction.
    fn upper(&self, t: usize) -> usize {
        if self.mode != SnapshotMode::Psi {
            return self.order.len();
        }
        self.order.iter().position(|&o| self.allowed[t] & (1 << o) == 0).unwrap_or(self.order.len())
    }

    fn dfs(&mut self, placed: u128) -> Option<bool> {
        let n = self.prog.len();
        let depth = self.order.len();
        if depth == n {
            return Some(true);
        }
        let unplaced: Vec<usize> = (0..n).filter(|&t| placed & (1 << t) == 0).collect();
        // Snapshots of unplaced transactions never start before `floor`, so
        // only the state there and the order after it shape the future.
        let floor =
            unplaced.iter().filter(|&&t| self.inside[t] & !placed == 0).map(|&t| self.lower(t)).min().unwrap_or(depth);
        let key = (placed, floor, self.order[floor..].to_vec(), self.states[floor].clone());
        if self.failed.contains(&key) {
            return Some(false);
        }
        self.explored += 1;
        if self.explored > self.max_states {
            return None;
        }
        for &cand in &unplaced {
            let bit = 1u128 << cand;
            if self.rt[cand] & !placed != 0 || self.inside[cand] & !placed != 0 {
                continue;
            }
            let lo = self.lower(cand);
            let hi = self.upper(cand);
            let Some(s) = (lo..=hi).rev().find(|&s| self.prog.reads_match(cand, &self.states[s])) else {
                continue;
            };
            let mut next = self.states[depth].clone();
            self.prog.apply(cand, &mut next);
            self.order.push(cand);
            self.states.push(next);
            self.snap[cand] = s;
            match self.dfs(placed | bit) {
                Some(true) => return Some(true),
                None => return None,
                Some(false) => {}
            }
            self.order.pop();
            self.states.pop();
        }
        self.failed.insert(key);
        Some(false)
    }
}

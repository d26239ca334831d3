//! Backtracking search for a legal serial order of transactions.

use std::collections::HashSet;

use super::replay::{Program, State};

pub(crate) enum SearchResult {
    Found(Vec<usize>),
    Impossible,
    Exhausted,
}

pub(crate) struct SerialSearch<'p> {
    prog: &'p Program,
    /// Bitmask of transactions that must precede each transaction.
    preds: Vec<u128>,
    max_states: u64,
    pub explored: u64,
    failed: HashSet<(u128, State)>,
    order: Vec<usize>,
}

impl<'p> SerialSearch<'p> {
    pub fn new(prog: &'p Program, preds: Vec<u128>, max_states: u64) -> Self {
        SerialSearch { prog, preds, max_states, explored: 0, failed: HashSet::new(), order: Vec::new() }
    }

    pub fn run(&mut self) -> SearchResult {
        match self.dfs(0, self.prog.initial()) {
            Some(true) => SearchResult::Found(self.order.clone()),
            Some(false) => SearchResult::Impossible,
            None => SearchResult::Exhausted,
        }
    }

    /// A register write that would overwrite a value some unplaced reader
    /// still needs, when that value can never be restored.
    fn clobbers(&self, placed: u128, state: &State, cand: usize) -> bool {
        for &k in &self.prog.writes[cand] {
            if !self.prog.unique_slot[k] {
                continue;
            }
            for j in 0..self.prog.len() {
                if j == cand || placed & (1 << j) != 0 {
                    continue;
                }
                if self.prog.ext_reads[j].iter().any(|(s, v)| *s == k && *v == state[k]) {
                    return true;
                }
            }
        }
        false
    }

    fn dfs(&mut self, placed: u128, state: State) -> Option<bool> {
        let n = self.prog.len();
        if self.order.len() == n {
            return Some(true);
        }
        if self.failed.contains(&(placed, state.clone())) {
            return Some(false);
        }
        self.explored += 1;
        if self.explored > self.max_states {
            return None;
        }
        for cand in 0..n {
            let bit = 1u128 << cand;
            if placed & bit != 0 {
                continue;
            }
            if self.preds[cand] & !placed != 0
                || !self.prog.reads_match(cand, &state)
                || self.clobbers(placed, &state, cand)
            {
                continue;
            }
            let mut next = state.clone();
            self.prog.apply(cand, &mut next);
            self.order.push(cand);
            match self.dfs(placed | bit, next) {
                Some(true) => return Some(true),
                None => return None,
                Some(false) => {}
            }
            self.order.pop();
        }
        self.failed.insert((placed, state));
        Some(false)
    }
}

pub(crate) fn bits(mask: u128) -> Vec<usize> {
    (0..128).filter(|i| mask & (1u128 << i) != 0).collect()
}

//! Simulator determinism, protocol contracts, and fault behaviour.

mod common;

use std::collections::BTreeSet;
use std::sync::Arc;

use chist::checkers::{check, check_cc, check_ec_quiescent, check_lin, check_sser};
use chist::history::{parse_history, EventKind};
use chist::sim::*;
use chist::{certify, AnomalyKind, CheckBudget, ModelId, Value};
use common::fixture_text;

fn budget() -> CheckBudget {
    CheckBudget::new(64, 2_000_000).unwrap()
}

fn faulty(protocol: Protocol, seed: u64) -> SimConfig {
    let mut c = SimConfig::new(protocol, seed);
    c.faults.loss = 0.2;
    c.faults.delay_max = 6;
    if seed.is_multiple_of(2) {
        c.faults.partitions.push(Partition { start: 5, end: 40, side_a: [0].into(), side_b: [1, 2].into() });
    }
    c
}

/// Arrival order decides: whatever was delivered last wins.
struct LastArrival;

impl MergePolicy for LastArrival {
    fn replaces(&self, _: Option<&Stored>, _: &Update) -> bool {
        true
    }
}

#[test]
fn runs_are_byte_identical_per_seed() {
    for p in [Protocol::Sequencer, Protocol::CausalBroadcast, Protocol::LwwGossip] {
        for seed in 0..10 {
            let c = faulty(p, seed);
            assert_eq!(run_sim(&c).unwrap().to_text(), run_sim(&c).unwrap().to_text());
        }
        let a = run_sim(&faulty(p, 1)).unwrap().to_text();
        let b = run_sim(&faulty(p, 3)).unwrap().to_text();
        assert_ne!(a, b, "{p}: different seeds should differ");
    }
}

#[test]
fn traces_are_valid_histories() {
    for p in [Protocol::Sequencer, Protocol::CausalBroadcast, Protocol::LwwGossip] {
        for seed in 0..20 {
            let t = run_sim(&faulty(p, seed)).unwrap();
            assert!(t.pending.is_empty());
            let c = &t.config;
            assert_eq!(t.history.txns().len(), c.clients * c.ops);
            assert!(t.history.is_single_op());
            assert_eq!(parse_history(&t.to_text()).unwrap(), t.history);
            chist::history::infer_versions(&t.history).unwrap();
            let updates = t.history.txns().iter().filter(|x| x.ops[0].kind.is_update()).count();
            assert!(t.changes.iter().all(|ch| ch.delivered.len() <= updates));
        }
    }
}

#[test]
fn sequencer_histories_are_strictly_serializable() {
    for seed in 0..100 {
        let t = run_sim(&faulty(Protocol::Sequencer, seed)).unwrap();
        for v in [check_sser(&t.history, budget()).unwrap(), check_lin(&t.history, budget()).unwrap()] {
            assert!(v.is_accepted(), "seed {seed}: {}", v.line());
            certify::validate(&t.history, &v).unwrap();
        }
    }
}

#[test]
fn causal_histories_are_causally_consistent() {
    for seed in 0..100 {
        let t = run_sim(&faulty(Protocol::CausalBroadcast, seed)).unwrap();
        let v = check_cc(&t.history).unwrap();
        assert!(v.is_accepted(), "seed {seed}: {}", v.line());
        certify::validate(&t.history, &v).unwrap();
        assert!(audit_sec(&t).is_accepted());
    }
}

#[test]
fn recorded_causal_partition_run_is_not_linearizable() {
    let c = SimConfig::parse(&fixture_text("causal_partition.simcfg")).unwrap();
    let t = run_sim(&c).unwrap();
    assert!(check_cc(&t.history).unwrap().is_accepted());
    let v = check_lin(&t.history, budget()).unwrap();
    assert!(v.is_rejected(), "{}", v.line());
    certify::validate(&t.history, &v).unwrap();
}

#[test]
fn lww_converges_after_flush() {
    for seed in 0..100 {
        let t = run_sim(&faulty(Protocol::LwwGossip, seed)).unwrap();
        assert!(audit_sec(&t).is_accepted(), "seed {seed}");
        let f = flush_and_quiesce(&t).unwrap();
        let v = check_ec_quiescent(&f.history);
        assert!(v.is_accepted(), "seed {seed}: {}", v.line());
        assert!(audit_sec(&f).is_accepted());
        for k in &f.config.keys {
            let vals: BTreeSet<Value> = final_values(&f, k).into_iter().collect();
            assert_eq!(vals.len(), 1, "seed {seed} key {k}");
        }
    }
}

#[test]
fn concurrent_lww_puts_lose_one_update() {
    let mut c = SimConfig::new(Protocol::LwwGossip, 0);
    c.clients = 2;
    c.replicas = 2;
    c.ops = 1;
    c.keys = vec!["k".into()];
    c.read_ratio = 0.0;
    let t = flush_and_quiesce(&run_sim(&c).unwrap()).unwrap();
    let puts: Vec<Value> =
        t.history.txns().iter().filter(|x| x.ops[0].kind.is_update()).map(|x| x.ops[0].arg.clone().unwrap()).collect();
    assert_eq!(puts.len(), 2);
    let finals = final_values(&t, "k");
    assert!(finals.iter().all(|v| *v == finals[0]));
    assert!(puts.contains(&finals[0]));
    assert!(check_ec_quiescent(&t.history).is_accepted());
    let ser = check(ModelId::SER, &t.history, budget()).unwrap();
    assert!(ser.is_accepted(), "a lone winner is still serializable: {}", ser.line());
}

#[test]
fn order_sensitive_merge_is_caught() {
    let mut caught = 0;
    for seed in 0..20 {
        let t = run_sim_with_merge(&faulty(Protocol::LwwGossip, seed), Arc::new(LastArrival)).unwrap();
        if let Some(a) = audit_sec(&t).anomaly() {
            assert_eq!(a.kind, AnomalyKind::Divergence);
            assert_eq!(a.keys.len(), 1);
            caught += 1;
        }
    }
    assert!(caught > 0);
}

#[test]
fn single_replica_is_trivially_convergent() {
    let mut c = SimConfig::new(Protocol::LwwGossip, 4);
    c.replicas = 1;
    let t = run_sim_with_merge(&c, Arc::new(LastArrival)).unwrap();
    assert!(audit_sec(&t).is_accepted());
}

#[test]
fn zero_update_run_converges_immediately() {
    let mut c = SimConfig::new(Protocol::CausalBroadcast, 2);
    c.read_ratio = 1.0;
    let t = run_sim(&c).unwrap();
    assert!(t.changes.is_empty());
    let f = flush_and_quiesce(&t).unwrap();
    assert_eq!(f.history.txns().len(), c.clients * c.ops + c.clients * c.keys.len());
    assert!(check_ec_quiescent(&f.history).is_accepted());
}

#[test]
fn flush_requires_a_gossip_protocol() {
    let t = run_sim(&SimConfig::new(Protocol::Sequencer, 0)).unwrap();
    assert!(matches!(flush_and_quiesce(&t), Err(SimError::Unsupported(_))));
}

/// Responses delivered to clients of `replica` during `[from, to]`.
fn responses(t: &SimTrace, replica: usize, from: u64, to: u64) -> usize {
    t.timeline
        .iter()
        .filter(|e| e.kind == EventKind::Response && e.client % t.config.replicas == replica)
        .filter(|e| (from..=to).contains(&e.tick))
        .count()
}

#[test]
fn partition_blocks_sequencer_minority_but_not_lww() {
    let split = |p| {
        let mut c = SimConfig::new(p, 11);
        c.ops = 30;
        c.faults.partitions.push(Partition { start: 20, end: 200, side_a: [0, 1].into(), side_b: [2].into() });
        c
    };
    let seq = run_sim(&split(Protocol::Sequencer)).unwrap();
    assert_eq!(responses(&seq, 2, 21, 200), 0);
    assert!(responses(&seq, 0, 21, 200) > 0);
    // The minority client had an operation outstanding across the window.
    let blocked =
        seq.timeline.iter().rfind(|e| e.client == 2 && e.kind == EventKind::Invocation && e.tick <= 21).unwrap();
    let answered = seq.timeline.iter().find(|e| e.txn == blocked.txn && e.kind == EventKind::Response).unwrap();
    assert!(answered.tick > 200);
    assert!(check_sser(&seq.history, CheckBudget::new(128, 2_000_000).unwrap()).unwrap().is_accepted());

    let lww = run_sim(&split(Protocol::LwwGossip)).unwrap();
    assert!(responses(&lww, 2, 21, 200) > 0);
}

#[test]
fn horizon_leaves_operations_pending() {
    let mut c = SimConfig::new(Protocol::Sequencer, 5);
    c.max_ticks = 60;
    c.ops = 50;
    c.faults.partitions.push(Partition { start: 10, end: 1000, side_a: [0].into(), side_b: [1, 2].into() });
    let t = run_sim(&c).unwrap();
    assert!(!t.pending.is_empty());
    assert!(t.pending.iter().all(|p| t.history.txn(p.txn).is_none()));
    assert!(t.to_text().contains("#pending"));
}

#[test]
fn invalid_configs_are_rejected() {
    let mut c = SimConfig::new(Protocol::LwwGossip, 0);
    c.read_ratio = 1.5;
    assert!(matches!(run_sim(&c), Err(SimError::InvalidConfig { .. })));
    let mut c = SimConfig::new(Protocol::LwwGossip, 0);
    c.faults.partitions.push(Partition { start: 1, end: 5, side_a: [0].into(), side_b: [1].into() });
    assert!(matches!(run_sim(&c), Err(SimError::InvalidConfig { .. })));
}

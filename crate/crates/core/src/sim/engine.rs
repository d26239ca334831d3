//! Discrete-event execution of the replication protocols.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{Protocol, SimConfig};
use crate::history::{Event, EventKind, Op, OpKind, TxnId};
use crate::value::Value;

/// Update timestamp: (tick, lamport clock, replica). Compared lexicographically.
pub type Timestamp = (u64, u64, usize);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Update {
    /// The id of the put transaction that issued it.
    pub id: u64,
    pub key: String,
    pub value: Value,
    pub ts: Timestamp,
    pub origin: usize,
    /// Position among the origin's own updates, from 1.
    pub origin_seq: u64,
    /// Origin's vector clock when issued.
    pub deps: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stored {
    pub value: Value,
    pub ts: Timestamp,
    pub id: u64,
}

/// Decides whether an incoming update replaces a replica's current state.
pub trait MergePolicy: Send + Sync {
    fn replaces(&self, current: Option<&Stored>, incoming: &Update) -> bool;
}

/// Last writer wins by highest timestamp; independent of arrival order.
#[derive(Debug, Clone, Copy, Default)]
pub struct HighestTimestamp;

impl MergePolicy for HighestTimestamp {
    fn replaces(&self, current: Option<&Stored>, incoming: &Update) -> bool {
        current.is_none_or(|c| incoming.ts > c.ts)
    }
}

/// One replica-state change: the key's value and delivered update set after
/// the change.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplicaChange {
    pub tick: u64,
    pub replica: usize,
    pub key: String,
    pub value: Value,
    pub meta: String,
    /// The update whose value the replica now holds.
    pub winner: u64,
    pub delivered: BTreeSet<u64>,
}

/// Client-side timing of one history event.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClientEvent {
    pub tick: u64,
    pub client: usize,
    pub txn: TxnId,
    pub kind: EventKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PendingOp {
    pub client: usize,
    pub txn: TxnId,
    pub invoked_at: u64,
}

#[derive(Debug, Clone)]
enum ClientOp {
    Get(String),
    Put(String, Value),
}

#[derive(Debug, Clone)]
struct Request {
    id: u64,
    client: usize,
    op: ClientOp,
}

#[derive(Debug, Clone)]
enum Msg {
    Forward(Request),
    Reply(u64, Value),
    Updates(Vec<Update>),
}

#[derive(Debug, Clone)]
enum Ev {
    Issue(usize),
    Arrive(usize, Request),
    Net { from: usize, to: usize, msg: Msg },
    Respond(usize, Request, Value),
    Gossip(usize),
    Retry(usize, u64),
}

#[derive(Debug, Clone, Default)]
pub(crate) struct Replica {
    pub store: BTreeMap<String, Stored>,
    pub log: BTreeMap<u64, Update>,
    pub delivered: BTreeMap<String, BTreeSet<u64>>,
    vc: Vec<u64>,
    buffer: BTreeMap<u64, Update>,
    lamport: u64,
    last_tick: Option<u64>,
    /// Forwarded requests awaiting the sequencer's reply.
    forwarded: BTreeMap<u64, Request>,
}

#[derive(Debug, Clone, Default)]
struct Client {
    issued: usize,
    outstanding: Option<(Request, u64)>,
}

#[derive(Clone)]
pub(crate) struct Engine {
    pub cfg: SimConfig,
    rng: ChaCha8Rng,
    merge: Arc<dyn MergePolicy>,
    pub now: u64,
    counter: u64,
    queue: BTreeMap<(u64, u64), Ev>,
    pub replicas: Vec<Replica>,
    clients: Vec<Client>,
    pub events: Vec<Event>,
    pub timeline: Vec<ClientEvent>,
    pub changes: Vec<ReplicaChange>,
    next_txn: u64,
    executed: BTreeMap<u64, Value>,
    applied: u64,
}

impl fmt::Debug for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Engine").field("now", &self.now).field("events", &self.events.len()).finish()
    }
}

impl Engine {
    pub fn new(cfg: SimConfig, merge: Arc<dyn MergePolicy>) -> Engine {
        let r = cfg.replicas;
        let replicas = (0..r).map(|_| Replica { vc: vec![0; r], ..Replica::default() }).collect();
        let clients = vec![Client::default(); cfg.clients];
        Engine {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            cfg,
            merge,
            now: 0,
            counter: 0,
            queue: BTreeMap::new(),
            replicas,
            clients,
            events: Vec::new(),
            timeline: Vec::new(),
            changes: Vec::new(),
            next_txn: 1,
            executed: BTreeMap::new(),
            applied: 0,
        }
    }

    fn schedule(&mut self, at: u64, ev: Ev) {
        self.counter += 1;
        self.queue.insert((at, self.counter), ev);
    }

    fn done(&self) -> bool {
        self.clients.iter().all(|c| c.issued == self.cfg.ops && c.outstanding.is_none())
    }

    /// Runs until every client has finished or the horizon is reached.
    pub fn run(&mut self) {
        for c in 0..self.cfg.clients {
            let start = self.rng.gen_range(0..=2);
            self.schedule(start, Ev::Issue(c));
        }
        if self.cfg.protocol.is_gossip() && self.cfg.replicas > 1 {
            for r in 0..self.cfg.replicas {
                self.schedule(self.cfg.gossip_interval, Ev::Gossip(r));
            }
        }
        while !self.done() {
            let Some(((tick, _), ev)) = self.queue.pop_first() else { break };
            if tick > self.cfg.max_ticks {
                break;
            }
            self.now = tick;
            self.handle(ev);
        }
        self.queue.clear();
    }

    pub fn pending(&self) -> Vec<PendingOp> {
        self.clients
            .iter()
            .enumerate()
            .filter_map(|(c, cl)| {
                cl.outstanding.as_ref().map(|(r, at)| PendingOp { client: c, txn: TxnId(r.id), invoked_at: *at })
            })
            .collect()
    }

    fn home(&self, client: usize) -> usize {
        client % self.cfg.replicas
    }

    fn record(&mut self, client: usize, kind: EventKind, req: &Request, ret: Option<Value>) {
        let (op_kind, key, arg) = match &req.op {
            ClientOp::Get(k) => (OpKind::Get, k.clone(), None),
            ClientOp::Put(k, v) => (OpKind::Put, k.clone(), Some(v.clone())),
        };
        let ret = if kind == EventKind::Response && op_kind == OpKind::Get { ret } else { None };
        self.events.push(Event {
            seq: self.events.len() as u64 + 1,
            kind,
            proc: format!("c{client}"),
            txn: TxnId(req.id),
            op: Op { kind: op_kind, key, arg, ret },
        });
        self.timeline.push(ClientEvent { tick: self.now, client, txn: TxnId(req.id), kind });
    }

    fn handle(&mut self, ev: Ev) {
        match ev {
            Ev::Issue(c) => self.issue(c),
            Ev::Arrive(r, req) => self.arrive(r, req),
            Ev::Net { from, to, msg } => {
                if self.cfg.faults.separated(self.now, from, to) {
                    return;
                }
                self.receive(from, to, msg);
            }
            Ev::Respond(c, req, value) => {
                self.record(c, EventKind::Response, &req, Some(value));
                self.clients[c].outstanding = None;
                let think = 1 + self.rng.gen_range(0..=2);
                self.schedule(self.now + think, Ev::Issue(c));
            }
            Ev::Gossip(r) => {
                let all: Vec<Update> = self.replicas[r].log.values().cloned().collect();
                if !all.is_empty() {
                    for q in 0..self.cfg.replicas {
                        if q != r {
                            self.send(r, q, Msg::Updates(all.clone()));
                        }
                    }
                }
                self.schedule(self.now + self.cfg.gossip_interval, Ev::Gossip(r));
            }
            Ev::Retry(r, id) => {
                if let Some(req) = self.replicas[r].forwarded.get(&id).cloned() {
                    self.send(r, 0, Msg::Forward(req));
                    self.schedule(self.now + self.cfg.retry_interval, Ev::Retry(r, id));
                }
            }
        }
    }

    fn issue(&mut self, c: usize) {
        let n = self.clients[c].issued;
        if n >= self.cfg.ops {
            return;
        }
        let key = self.cfg.keys[self.rng.gen_range(0..self.cfg.keys.len())].clone();
        let op = if self.rng.gen_bool(self.cfg.read_ratio) {
            ClientOp::Get(key)
        } else {
            ClientOp::Put(key, Value::text(format!("c{c}-{n}")))
        };
        let req = Request { id: self.next_txn, client: c, op };
        self.next_txn += 1;
        self.clients[c].issued += 1;
        self.clients[c].outstanding = Some((req.clone(), self.now));
        self.record(c, EventKind::Invocation, &req, None);
        let home = self.home(c);
        self.schedule(self.now + 1, Ev::Arrive(home, req));
    }

    fn respond(&mut self, req: Request, value: Value) {
        self.schedule(self.now + 1, Ev::Respond(req.client, req, value));
    }

    fn send(&mut self, from: usize, to: usize, msg: Msg) {
        let lost = self.rng.gen_bool(self.cfg.faults.loss);
        let delay = self.rng.gen_range(self.cfg.faults.delay_min..=self.cfg.faults.delay_max);
        if !lost {
            self.schedule(self.now + delay, Ev::Net { from, to, msg });
        }
    }

    fn arrive(&mut self, r: usize, req: Request) {
        match self.cfg.protocol {
            Protocol::Sequencer => {
                if r == 0 {
                    let v = self.sequence(&req);
                    self.respond(req, v);
                } else {
                    self.replicas[r].forwarded.insert(req.id, req.clone());
                    let id = req.id;
                    self.send(r, 0, Msg::Forward(req));
                    self.schedule(self.now + self.cfg.retry_interval, Ev::Retry(r, id));
                }
            }
            Protocol::CausalBroadcast | Protocol::LwwGossip => {
                let v = match &req.op {
                    ClientOp::Get(k) => self.read_local(r, k),
                    ClientOp::Put(k, v) => {
                        let u = self.local_update(r, req.id, k.clone(), v.clone());
                        for q in 0..self.cfg.replicas {
                            if q != r {
                                self.send(r, q, Msg::Updates(vec![u.clone()]));
                            }
                        }
                        v.clone()
                    }
                };
                self.respond(req, v);
            }
        }
    }

    pub fn read_local(&self, r: usize, key: &str) -> Value {
        self.replicas[r].store.get(key).map_or(Value::Nil, |s| s.value.clone())
    }

    /// Executes a request at the sequencer, at most once per request id.
    fn sequence(&mut self, req: &Request) -> Value {
        if let Some(v) = self.executed.get(&req.id) {
            return v.clone();
        }
        let v = match &req.op {
            ClientOp::Get(k) => self.read_local(0, k),
            ClientOp::Put(k, v) => {
                self.applied += 1;
                let u = Update {
                    id: req.id,
                    key: k.clone(),
                    value: v.clone(),
                    ts: (self.now, self.applied, 0),
                    origin: 0,
                    origin_seq: self.applied,
                    deps: Vec::new(),
                };
                self.apply(0, u);
                v.clone()
            }
        };
        self.executed.insert(req.id, v.clone());
        v
    }

    fn local_update(&mut self, r: usize, id: u64, key: String, value: Value) -> Update {
        let rep = &mut self.replicas[r];
        let ts = match self.cfg.protocol {
            Protocol::LwwGossip => {
                let t = rep.last_tick.map_or(self.now, |l| self.now.max(l + 1));
                rep.last_tick = Some(t);
                (t, 0, r)
            }
            _ => {
                rep.lamport += 1;
                (self.now, rep.lamport, r)
            }
        };
        rep.vc[r] += 1;
        let u = Update { id, key, value, ts, origin: r, origin_seq: rep.vc[r], deps: rep.vc.clone() };
        self.apply(r, u.clone());
        u
    }

    fn receive(&mut self, from: usize, to: usize, msg: Msg) {
        match msg {
            Msg::Forward(req) => {
                let v = self.sequence(&req);
                self.send(0, from, Msg::Reply(req.id, v));
            }
            Msg::Reply(id, v) => {
                if let Some(req) = self.replicas[to].forwarded.remove(&id) {
                    self.respond(req, v);
                }
            }
            Msg::Updates(list) => {
                for u in list {
                    self.receive_update(to, u);
                }
            }
        }
    }

    pub fn receive_update(&mut self, r: usize, u: Update) {
        if self.replicas[r].log.contains_key(&u.id) {
            return;
        }
        match self.cfg.protocol {
            Protocol::CausalBroadcast => {
                self.replicas[r].buffer.insert(u.id, u);
                loop {
                    let rep = &self.replicas[r];
                    let ready = rep.buffer.values().find(|u| {
                        rep.vc[u.origin] + 1 == u.origin_seq
                            && (0..rep.vc.len()).all(|k| k == u.origin || rep.vc[k] >= u.deps[k])
                    });
                    let Some(id) = ready.map(|u| u.id) else { break };
                    let u = self.replicas[r].buffer.remove(&id).expect("buffered");
                    let rep = &mut self.replicas[r];
                    rep.vc[u.origin] += 1;
                    rep.lamport = rep.lamport.max(u.ts.1);
                    self.apply(r, u);
                }
            }
            _ => self.apply(r, u),
        }
    }

    fn apply(&mut self, r: usize, u: Update) {
        let rep = &mut self.replicas[r];
        rep.delivered.entry(u.key.clone()).or_default().insert(u.id);
        if self.merge.replaces(rep.store.get(&u.key), &u) {
            rep.store.insert(u.key.clone(), Stored { value: u.value.clone(), ts: u.ts, id: u.id });
        }
        let cur = &rep.store[&u.key];
        let meta = match self.cfg.protocol {
            Protocol::Sequencer => format!("idx={}", cur.ts.1),
            Protocol::CausalBroadcast => {
                let vc: Vec<String> = rep.vc.iter().map(u64::to_string).collect();
                format!("ts={}.{}.{};vc={}", cur.ts.0, cur.ts.1, cur.ts.2, vc.join(","))
            }
            Protocol::LwwGossip => format!("ts={}.{}", cur.ts.0, cur.ts.2),
        };
        let change = ReplicaChange {
            tick: self.now,
            replica: r,
            key: u.key.clone(),
            value: cur.value.clone(),
            meta,
            winner: cur.id,
            delivered: rep.delivered[&u.key].clone(),
        };
        rep.log.insert(u.id, u);
        self.changes.push(change);
    }

    /// True when all replicas hold the same updates and values.
    pub fn converged(&self) -> bool {
        let first = &self.replicas[0];
        self.replicas.iter().all(|r| r.delivered == first.delivered && r.store == first.store && r.buffer.is_empty())
    }

    /// Fault-free full-log exchange between every pair of replicas.
    pub fn gossip_round(&mut self) {
        for r in 0..self.cfg.replicas {
            let all: Vec<Update> = self.replicas[r].log.values().cloned().collect();
            for q in 0..self.cfg.replicas {
                if q != r {
                    for u in &all {
                        self.receive_update(q, u.clone());
                    }
                }
            }
        }
        self.now += 1;
    }

    /// Every client reads every key at its home replica.
    pub fn final_reads(&mut self) {
        let keys = self.cfg.keys.clone();
        for c in 0..self.cfg.clients {
            for key in &keys {
                let req = Request { id: self.next_txn, client: c, op: ClientOp::Get(key.clone()) };
                self.next_txn += 1;
                self.record(c, EventKind::Invocation, &req, None);
                let v = self.read_local(self.home(c), key);
                self.record(c, EventKind::Response, &req, Some(v));
            }
        }
    }

    /// Drops invocations that never got a response and renumbers events.
    pub fn completed_events(&self) -> Vec<Event> {
        let pending: BTreeSet<TxnId> = self.pending().iter().map(|p| p.txn).collect();
        self.events
            .iter()
            .filter(|e| !pending.contains(&e.txn))
            .enumerate()
            .map(|(i, e)| Event { seq: i as u64 + 1, ..e.clone() })
            .collect()
    }
}

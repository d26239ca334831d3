use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use super::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Protocol {
    /// Replica 0 orders and executes every operation.
    Sequencer,
    /// Local reads; updates delivered in causal order and merged by timestamp.
    CausalBroadcast,
    /// Local reads and writes; updates gossiped and merged by highest timestamp.
    LwwGossip,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Protocol::Sequencer => "sequencer",
            Protocol::CausalBroadcast => "causal",
            Protocol::LwwGossip => "lww",
        }
    }

    pub fn is_gossip(self) -> bool {
        self != Protocol::Sequencer
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "sequencer" => Ok(Protocol::Sequencer),
            "causal" | "causalbroadcast" | "causal_broadcast" => Ok(Protocol::CausalBroadcast),
            "lww" | "lwwgossip" | "lww_gossip" => Ok(Protocol::LwwGossip),
            other => Err(format!("unknown protocol {other:?}")),
        }
    }
}

/// Replicas on different sides cannot exchange messages during `[start, end)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub start: u64,
    pub end: u64,
    pub side_a: BTreeSet<usize>,
    pub side_b: BTreeSet<usize>,
}

impl Partition {
    pub fn separates(&self, tick: u64, a: usize, b: usize) -> bool {
        self.start <= tick
            && tick < self.end
            && ((self.side_a.contains(&a) && self.side_b.contains(&b))
                || (self.side_b.contains(&a) && self.side_a.contains(&b)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FaultPlan {
    pub loss: f64,
    pub delay_min: u64,
    pub delay_max: u64,
    pub partitions: Vec<Partition>,
}

impl Default for FaultPlan {
    fn default() -> Self {
        FaultPlan { loss: 0.0, delay_min: 1, delay_max: 3, partitions: Vec::new() }
    }
}

impl FaultPlan {
    pub fn separated(&self, tick: u64, a: usize, b: usize) -> bool {
        self.partitions.iter().any(|p| p.separates(tick, a, b))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub protocol: Protocol,
    pub replicas: usize,
    pub clients: usize,
    /// Operations issued by each client.
    pub ops: usize,
    pub keys: Vec<String>,
    /// Probability that an operation is a get.
    pub read_ratio: f64,
    pub faults: FaultPlan,
    pub seed: u64,
    /// Ticks between anti-entropy rounds.
    pub gossip_interval: u64,
    /// Ticks before a forwarded request is resent.
    pub retry_interval: u64,
    /// Horizon: the run stops at this tick even with operations pending.
    pub max_ticks: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            protocol: Protocol::LwwGossip,
            replicas: 3,
            clients: 3,
            ops: 4,
            keys: vec!["x".into(), "y".into()],
            read_ratio: 0.5,
            faults: FaultPlan::default(),
            seed: 0,
            gossip_interval: 5,
            retry_interval: 8,
            max_ticks: 10_000,
        }
    }
}

impl SimConfig {
    pub fn new(protocol: Protocol, seed: u64) -> Self {
        SimConfig { protocol, seed, ..SimConfig::default() }
    }

    /// Parses the line-oriented `key value` format. Blank lines and lines
    /// starting with `#` are ignored.
    pub fn parse(text: &str) -> Result<SimConfig, SimError> {
        let mut c = SimConfig::default();
        let mut seen = BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let bad = |reason: String| SimError::InvalidConfig { line, reason };
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (key, value) =
                trimmed.split_once(char::is_whitespace).ok_or_else(|| bad(format!("missing value in {trimmed:?}")))?;
            let value = value.trim();
            if key != "partition" && !seen.insert(key.to_string()) {
                return Err(bad(format!("{key} given twice")));
            }
            fn num<T: FromStr>(v: &str, bad: impl Fn(String) -> SimError) -> Result<T, SimError> {
                v.parse().map_err(|_| bad(format!("bad number {v:?}")))
            }
            match key {
                "protocol" => c.protocol = value.parse().map_err(bad)?,
                "replicas" => c.replicas = num(value, bad)?,
                "clients" => c.clients = num(value, bad)?,
                "ops" => c.ops = num(value, bad)?,
                "read_ratio" => c.read_ratio = num(value, bad)?,
                "seed" => c.seed = num(value, bad)?,
                "loss" => c.faults.loss = num(value, bad)?,
                "delay_min" => c.faults.delay_min = num(value, bad)?,
                "delay_max" => c.faults.delay_max = num(value, bad)?,
                "gossip_interval" => c.gossip_interval = num(value, bad)?,
                "retry_interval" => c.retry_interval = num(value, bad)?,
                "max_ticks" => c.max_ticks = num(value, bad)?,
                "keys" => {
                    c.keys = value.split(',').map(|k| k.trim().to_string()).collect();
                    if c.keys.iter().any(|k| k.is_empty() || k.contains(char::is_whitespace) || k.starts_with('#')) {
                        return Err(bad(format!("bad key list {value:?}")));
                    }
                }
                "partition" => {
                    let toks: Vec<&str> = value.split_whitespace().collect();
                    let [start, end, sides] = toks[..] else {
                        return Err(bad("expected partition <start> <end> <a,b>|<c,d>".into()));
                    };
                    let (a, b) = sides.split_once('|').ok_or_else(|| bad("partition sides need '|'".into()))?;
                    let side = |s: &str| -> Result<BTreeSet<usize>, SimError> {
                        s.split(',').filter(|x| !x.is_empty()).map(|x| num(x, bad)).collect()
                    };
                    c.faults.partitions.push(Partition {
                        start: num(start, bad)?,
                        end: num(end, bad)?,
                        side_a: side(a)?,
                        side_b: side(b)?,
                    });
                }
                other => return Err(bad(format!("unknown setting {other:?}"))),
            }
        }
        c.validate()?;
        Ok(c)
    }

    /// Checks ranges and partition shapes; line 0 means "whole config".
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |reason: &str| Err(SimError::InvalidConfig { line: 0, reason: reason.into() });
        if self.replicas == 0 || self.clients == 0 || self.ops == 0 {
            return bad("replicas, clients and ops must be positive");
        }
        if self.replicas > 64 {
            return bad("at most 64 replicas");
        }
        if self.keys.is_empty() {
            return bad("at least one key");
        }
        if !(0.0..=1.0).contains(&self.read_ratio) || !(0.0..=1.0).contains(&self.faults.loss) {
            return bad("read_ratio and loss must lie in [0, 1]");
        }
        if self.faults.loss >= 1.0 && self.replicas > 1 {
            return bad("loss must be below 1");
        }
        if self.faults.delay_min == 0 || self.faults.delay_min > self.faults.delay_max {
            return bad("need 1 <= delay_min <= delay_max");
        }
        if self.gossip_interval == 0 || self.retry_interval == 0 || self.max_ticks == 0 {
            return bad("intervals and max_ticks must be positive");
        }
        let all: BTreeSet<usize> = (0..self.replicas).collect();
        for p in &self.faults.partitions {
            if p.start >= p.end {
                return bad("partition start must precede end");
            }
            if !p.side_a.is_disjoint(&p.side_b) || p.side_a.union(&p.side_b).copied().collect::<BTreeSet<_>>() != all {
                return bad("partition sides must split all replicas");
            }
        }
        Ok(())
    }

    /// Canonical config text, parseable by [`SimConfig::parse`].
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "protocol {}\nreplicas {}\nclients {}\nops {}\nkeys {}\nread_ratio {}\nseed {}\nloss {}\ndelay_min {}\ndelay_max {}\ngossip_interval {}\nretry_interval {}\nmax_ticks {}\n",
            self.protocol,
            self.replicas,
            self.clients,
            self.ops,
            self.keys.join(","),
            self.read_ratio,
            self.seed,
            self.faults.loss,
            self.faults.delay_min,
            self.faults.delay_max,
            self.gossip_interval,
            self.retry_interval,
            self.max_ticks
        );
        for p in &self.faults.partitions {
            let side = |s: &BTreeSet<usize>| s.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
            s.push_str(&format!("partition {} {} {}|{}\n", p.start, p.end, side(&p.side_a), side(&p.side_b)));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_round_trips() {
        let text = "protocol causal\nreplicas 3\nclients 2\nops 5\nread_ratio 0.25\nseed 9\nloss 0.1\ndelay_min 2\ndelay_max 4\npartition 10 30 0,1|2\n";
        let c = SimConfig::parse(text).unwrap();
        assert_eq!(c.protocol, Protocol::CausalBroadcast);
        assert_eq!(c.faults.partitions.len(), 1);
        assert!(c.faults.separated(10, 2, 0));
        assert!(!c.faults.separated(30, 2, 0));
        assert_eq!(SimConfig::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn reports_line_numbers() {
        let err = SimConfig::parse("protocol lww\n\nreplicas two\n").unwrap_err();
        assert!(matches!(err, SimError::InvalidConfig { line: 3, .. }));
        let err = SimConfig::parse("protocol lww\nbogus 1\n").unwrap_err();
        assert!(matches!(err, SimError::InvalidConfig { line: 2, .. }));
        let err = SimConfig::parse("replicas 3\npartition 5 1 0|1,2\n").unwrap_err();
        assert!(matches!(err, SimError::InvalidConfig { line: 0, .. }));
        let err = SimConfig::parse("replicas 3\npartition 1 5 0|1\n").unwrap_err();
        assert!(matches!(err, SimError::InvalidConfig { .. }));
    }
}

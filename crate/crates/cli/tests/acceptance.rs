//! Acceptance gate: prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use chist::checkers::*;
use chist::corpus::{random_history, CorpusConfig};
use chist::dimensions::Lattice;
use chist::history::{parse_history, History};
use chist::sim::*;
use chist::{certify, AnomalyKind, CheckBudget, CheckError, ModelId, TxnId, Verdict};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

fn fixture(name: &str) -> History {
    let text = std::fs::read_to_string(fixtures().join(format!("{name}.chist"))).expect("fixture");
    parse_history(&text).expect("fixture parses")
}

fn sim_budget() -> CheckBudget {
    CheckBudget::new(64, 2_000_000).expect("budget")
}

/// Every verdict produced by criteria 1-4, replayed for criterion 5.
#[derive(Default)]
struct Replays {
    checked: usize,
    failures: Vec<String>,
}

impl Replays {
    fn record(&mut self, h: &History, v: &Verdict) {
        self.checked += 1;
        if let Err(e) = certify::validate(h, v) {
            self.failures.push(format!("{}: {e}", v.line()));
        }
    }

    fn check(&mut self, m: ModelId, h: &History, b: CheckBudget) -> Result<Verdict, CheckError> {
        let v = check(m, h, b)?;
        self.record(h, &v);
        Ok(v)
    }
}

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn criterion_1(r: &mut Replays) -> Outcome {
    let mut slowest = Duration::ZERO;
    let mut timed = |f: &mut dyn FnMut(&mut Replays) -> Result<(), String>, r: &mut Replays| {
        let start = Instant::now();
        let out = f(r);
        slowest = slowest.max(start.elapsed());
        out
    };
    let kind = |v: &Verdict| v.anomaly().map(|a| a.kind);
    fn run(r: &mut Replays, m: ModelId, name: &str) -> Result<Verdict, String> {
        r.check(m, &fixture(name), CheckBudget::default()).map_err(|e| format!("{m} on {name}: {e}"))
    }

    timed(
        &mut |r| {
            for m in [ModelId::SER, ModelId::SSER] {
                let v = run(r, m, "h1")?;
                let order = v.certificate().and_then(|c| c.order()).map(|o| o.to_vec());
                ensure(order == Some(vec![TxnId(2), TxnId(1), TxnId(3)]), || {
                    format!("h1 {m}: {} {order:?}", v.line())
                })?;
            }
            Ok(())
        },
        r,
    )?;
    timed(
        &mut |r| {
            let v = run(r, ModelId::RA, "h2")?;
            ensure(kind(&v) == Some(AnomalyKind::FracturedRead), || format!("h2: {}", v.line()))
        },
        r,
    )?;
    timed(
        &mut |r| {
            for m in [ModelId::CS, ModelId::CC] {
                let v = run(r, m, "h3")?;
                ensure(v.is_rejected(), || format!("h3: {}", v.line()))?;
            }
            Ok(())
        },
        r,
    )?;
    timed(
        &mut |r| {
            let si = run(r, ModelId::SI, "h4")?;
            let ser = run(r, ModelId::SER, "h4")?;
            ensure(si.is_accepted() && kind(&ser) == Some(AnomalyKind::WriteSkew), || {
                format!("h4: {} / {}", si.line(), ser.line())
            })
        },
        r,
    )?;
    timed(
        &mut |r| {
            let nmsi = run(r, ModelId::NMSI, "h5")?;
            let psi = run(r, ModelId::PSI, "h5")?;
            ensure(nmsi.is_accepted() && psi.is_rejected(), || format!("h5: {} / {}", nmsi.line(), psi.line()))
        },
        r,
    )?;
    let expected: [(ModelId, &[&str]); 4] = [
        (ModelId::RC_loose, &["nil", "x", "y", "z"]),
        (ModelId::RMW, &["x", "y", "z"]),
        (ModelId::CC, &["y", "z"]),
        (ModelId::LIN, &["z"]),
    ];
    for (m, want) in expected {
        timed(
            &mut |r| {
                let mut got = BTreeSet::new();
                for v in ["nil", "x", "y", "z"] {
                    if run(r, m, &format!("h6{v}"))?.is_accepted() {
                        got.insert(v);
                    }
                }
                let want: BTreeSet<&str> = want.iter().copied().collect();
                ensure(got == want, || format!("h6 under {m}: {got:?}, expected {want:?}"))
            },
            r,
        )?;
    }
    ensure(slowest < Duration::from_secs(1), || format!("slowest fixture took {slowest:?}"))?;
    Ok(format!("h1-h6 as expected, slowest fixture {} ms", slowest.as_millis()))
}

fn criterion_2(r: &mut Replays) -> Outcome {
    let start = Instant::now();
    let cfg = CorpusConfig::default();
    let mut accepted = 0;
    for seed in 0..1000 {
        let h = random_history(seed, &cfg);
        ensure(h.txns().len() <= 6 && h.keys().len() <= 3, || format!("seed {seed} too large"))?;
        let err = |e: CheckError| format!("seed {seed}: {e}");
        let oracle = oracle_ser(&h).map_err(err)?;
        let strict = oracle_sser(&h).map_err(err)?;
        for (m, truth) in [(ModelId::SER, &oracle), (ModelId::SSER, &strict)] {
            r.record(&h, truth);
            let v = r.check(m, &h, CheckBudget::default()).map_err(err)?;
            ensure(v.is_accepted() == truth.is_accepted(), || {
                format!("seed {seed}: {} vs oracle {}", v.line(), truth.line())
            })?;
        }
        accepted += usize::from(oracle.is_accepted());
    }
    let took = start.elapsed();
    ensure(took < Duration::from_secs(60), || format!("took {took:?}"))?;
    Ok(format!("1000 histories agree ({accepted} serializable), {} ms", took.as_millis()))
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

fn sim_corpus() -> Result<Vec<History>, String> {
    let mut out = Vec::new();
    for p in [Protocol::Sequencer, Protocol::CausalBroadcast, Protocol::LwwGossip] {
        for seed in 0..100 {
            let t = run_sim(&faulty(p, seed)).map_err(|e| e.to_string())?;
            if p.is_gossip() {
                out.push(flush_and_quiesce(&t).map_err(|e| e.to_string())?.history);
            }
            out.push(t.history);
        }
    }
    Ok(out)
}

fn criterion_3(r: &mut Replays) -> Outcome {
    let start = Instant::now();
    let lattice = Lattice::shipped();
    let sims = sim_corpus()?;
    let mut corpus: Vec<(String, History, CheckBudget)> =
        sims.into_iter().enumerate().map(|(i, h)| (format!("sim#{i}"), h, sim_budget())).collect();
    let nsim = corpus.len();
    for f in ["h1", "h2", "h3", "h4", "h5", "h6nil", "h6x", "h6y", "h6z", "empty", "lost_update"] {
        corpus.push((f.to_string(), fixture(f), CheckBudget::default()));
    }
    for seed in 0..300 {
        let cfg = if seed % 2 == 0 { CorpusConfig::default() } else { CorpusConfig::single_op() };
        corpus.push((format!("random#{seed}"), random_history(seed, &cfg), CheckBudget::default()));
    }
    let (mut implications, mut violations) = (0, Vec::new());
    for (name, h, b) in &corpus {
        let verdicts: Vec<(ModelId, Verdict)> =
            ModelId::history_models().filter_map(|m| r.check(m, h, *b).ok().map(|v| (m, v))).collect();
        let get = |m: ModelId| verdicts.iter().find(|(x, _)| *x == m).map(|(_, v)| v);
        for e in lattice.edges() {
            if let (Some(s), Some(w)) = (get(e.stronger), get(e.weaker)) {
                if s.is_inconclusive() || w.is_inconclusive() {
                    continue;
                }
                implications += 1;
                if s.is_accepted() && w.is_rejected() {
                    violations.push(format!("{} -> {} on {name}: {}", e.stronger, e.weaker, w.line()));
                }
            }
        }
    }
    let took = start.elapsed();
    ensure(violations.is_empty(), || format!("{} violations, first: {}", violations.len(), violations[0]))?;
    ensure(nsim >= 300, || format!("only {nsim} simulator histories"))?;
    ensure(took < Duration::from_secs(300), || format!("took {took:?}"))?;
    Ok(format!(
        "{} histories ({nsim} simulated), {implications} edge instances, 0 violations, {} ms",
        corpus.len(),
        took.as_millis()
    ))
}

fn criterion_4(r: &mut Replays) -> Outcome {
    let start = Instant::now();
    let b = sim_budget();
    for seed in 0..100 {
        let t = run_sim(&faulty(Protocol::Sequencer, seed)).map_err(|e| e.to_string())?;
        let v = r.check(ModelId::SSER, &t.history, b).map_err(|e| e.to_string())?;
        ensure(v.is_accepted(), || format!("sequencer seed {seed}: {}", v.line()))?;

        let t = run_sim(&faulty(Protocol::CausalBroadcast, seed)).map_err(|e| e.to_string())?;
        let v = r.check(ModelId::CC, &t.history, b).map_err(|e| e.to_string())?;
        ensure(v.is_accepted(), || format!("causal seed {seed}: {}", v.line()))?;

        let t = run_sim(&faulty(Protocol::LwwGossip, seed)).map_err(|e| e.to_string())?;
        let f = flush_and_quiesce(&t).map_err(|e| e.to_string())?;
        let ec = check_ec_quiescent(&f.history);
        r.record(&f.history, &ec);
        ensure(ec.is_accepted(), || format!("lww seed {seed}: {}", ec.line()))?;
        for trace in [&t, &f] {
            let sec = audit_sec(trace);
            ensure(sec.is_accepted(), || format!("lww seed {seed}: {}", sec.line()))?;
        }
    }
    let text = std::fs::read_to_string(fixtures().join("causal_partition.simcfg")).map_err(|e| e.to_string())?;
    let cfg = SimConfig::parse(&text).map_err(|e| e.to_string())?;
    let t = run_sim(&cfg).map_err(|e| e.to_string())?;
    let lin = r.check(ModelId::LIN, &t.history, b).map_err(|e| e.to_string())?;
    ensure(lin.is_rejected(), || format!("recorded causal seed {}: {}", cfg.seed, lin.line()))?;
    Ok(format!(
        "300 seeds hold their contracts; recorded causal+partition seed {} gives {}, {} ms",
        cfg.seed,
        lin.line(),
        start.elapsed().as_millis()
    ))
}

fn criterion_5(r: &Replays) -> Outcome {
    ensure(r.failures.is_empty(), || {
        format!("{} of {} failed, first: {}", r.failures.len(), r.checked, r.failures[0])
    })?;
    Ok(format!("{} certificates and witnesses replay", r.checked))
}

fn run_cli(args: &[&str]) -> Result<(Vec<u8>, Option<i32>), String> {
    let o = Command::new(env!("CARGO_BIN_EXE_chist")).args(args).output().map_err(|e| e.to_string())?;
    Ok((o.stdout, o.status.code()))
}

fn criterion_6() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let fx = |n: &str| fixtures().join(n).display().to_string();
    let cfg = fx("causal_partition.simcfg");
    let corpus = fx("");
    let outs: Vec<String> = (0..2).map(|i| dir.path().join(format!("trace{i}.chist")).display().to_string()).collect();
    let all: Vec<String> =
        ["h1", "h2", "h3", "h4", "h5", "h6x", "lost_update"].iter().map(|f| fx(&format!("{f}.chist"))).collect();
    let mut check_args = vec!["check"];
    check_args.extend(all.iter().map(String::as_str));
    let commands: Vec<Vec<&str>> =
        vec![check_args, vec!["explain", &all[3], "ser"], vec!["compare", "psi", "cc"], vec!["lattice", &corpus]];
    for args in &commands {
        let a = run_cli(args)?;
        let b = run_cli(args)?;
        ensure(a == b, || format!("`chist {}` differs between runs", args.join(" ")))?;
    }
    for out in &outs {
        let (_, code) = run_cli(&["simulate", &cfg, "--out", out])?;
        ensure(code == Some(0), || format!("simulate exited {code:?}"))?;
    }
    let traces: Vec<Vec<u8>> = outs.iter().map(std::fs::read).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    ensure(traces[0] == traces[1], || "simulate output differs between runs".into())?;
    for p in [Protocol::Sequencer, Protocol::CausalBroadcast, Protocol::LwwGossip] {
        for seed in 0..30 {
            let c = faulty(p, seed);
            let a = run_sim(&c).map_err(|e| e.to_string())?.to_text();
            let b = run_sim(&c).map_err(|e| e.to_string())?.to_text();
            ensure(a == b, || format!("{p} seed {seed} trace differs"))?;
        }
    }
    Ok(format!("{} CLI commands, simulate, and 90 library runs byte-identical", commands.len()))
}

fn main() {
    let mut replays = Replays::default();
    let results = [
        ("1 golden fixtures", criterion_1(&mut replays)),
        ("2 oracle equivalence", criterion_2(&mut replays)),
        ("3 lattice soundness", criterion_3(&mut replays)),
        ("4 generator-checker contract", criterion_4(&mut replays)),
        ("5 certificate and witness replay", criterion_5(&replays)),
        ("6 determinism", criterion_6()),
    ];
    let mut failed = 0;
    for (name, r) in &results {
        match r {
            Ok(detail) => println!("criterion {name}: PASS ({detail})"),
            Err(why) => {
                failed += 1;
                println!("criterion {name}: FAIL ({why})");
            }
        }
    }
    let tops: Vec<String> = Lattice::shipped().tops().iter().map(ModelId::to_string).collect();
    let unique = tops == ["SSER"];
    println!(
        "invariant unique SSER top: {} (tops: {}; not a numbered criterion)",
        if unique { "PASS" } else { "FAIL" },
        tops.join(",")
    );
    if failed > 0 {
        std::process::exit(1);
    }
}

//! End-to-end tests of the `chist` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

fn fx(name: &str) -> String {
    fixtures().join(name).display().to_string()
}

fn chist(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chist")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn check_reports_write_skew_with_exit_1() {
    let o = chist(&["check", &fx("h4.chist"), "--models", "ser,si", "--format", "machine"]);
    assert_eq!(stdout(&o), "SER rejected WriteSkew txns=1,2\nSI accepted\n");
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn check_all_on_empty_history_accepts() {
    let o = chist(&["check", &fx("empty.chist"), "--models", "all"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().count(), 19);
    assert!(stdout(&o).lines().all(|l| l.ends_with(" accepted")));
}

#[test]
fn check_lin_on_h6z() {
    let o = chist(&["check", &fx("h6z.chist"), "--models", "lin"]);
    assert_eq!(stdout(&o), "LIN accepted\n");
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn inconclusive_and_error_exit_codes() {
    let o = chist(&["check", &fx("h6z.chist"), "--models", "lin", "--budget-txns", "2"]);
    assert_eq!(o.status.code(), Some(2));
    let o = chist(&["check", &fx("h4.chist"), "--models", "cc"]);
    assert_eq!(o.status.code(), Some(5));
    assert!(stdout(&o).starts_with("CC error AmbiguousVersion"));
    let o = chist(&["check", &fx("h4.chist"), "--models", "bogus"]);
    assert_eq!(o.status.code(), Some(3));
    let o = chist(&["check", "/nonexistent/h.chist"]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn malformed_history_reports_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.chist");
    std::fs::write(&p, "#chist v1\n#item x kv\n1 inv p 1 get x\n2 res p 1 frobnicate x\n").unwrap();
    let o = chist(&["check", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 4"));
}

#[test]
fn multiple_histories_are_reported_in_order() {
    let o = chist(&["check", &fx("h1.chist"), &fx("h2.chist"), "--models", "ser,ra", "--format", "machine"]);
    assert_eq!(
        stdout(&o),
        "SER accepted\nRA accepted\nSER rejected CausalityViolation txns=1,2\nRA rejected FracturedRead txns=1,2\n"
    );
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn simulate_then_check_sser() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("seq.cfg");
    std::fs::write(&cfg, "protocol sequencer\nreplicas 3\nclients 3\nops 3\nloss 0.1\npartition 4 30 0|1,2\n").unwrap();
    let out = dir.path().join("seq.chist");
    let o = chist(&["simulate", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed-override", "7"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("seed 7 protocol sequencer txns 9"));
    let o = chist(&["check", out.to_str().unwrap(), "--models", "sser", "--format", "machine"]);
    assert_eq!(stdout(&o), "SSER accepted\n");

    let again = dir.path().join("again.chist");
    chist(&["simulate", cfg.to_str().unwrap(), "--out", again.to_str().unwrap(), "--seed-override", "7"]);
    assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn simulate_flush_yields_convergent_reads() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("lww.cfg");
    std::fs::write(&cfg, "protocol lww\nloss 0.3\nseed 3\n").unwrap();
    let out = dir.path().join("lww.chist");
    let o = chist(&["simulate", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--flush"]);
    assert_eq!(o.status.code(), Some(0));
    let o = chist(&["check", out.to_str().unwrap(), "--models", "ec"]);
    assert_eq!(stdout(&o), "EC_quiescent accepted\n");
}

#[test]
fn malformed_config_exits_3_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "protocol lww\nreplicas 3\nloss lots\n").unwrap();
    let o = chist(&["simulate", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));
}

#[test]
fn explain_shows_evidence() {
    let o = chist(&["explain", &fx("h1.chist"), "sser"]);
    let s = stdout(&o);
    assert!(s.starts_with("SSER accepted\ncertificate\n2\n1\n3\nend\n"), "{s}");
    assert!(s.contains("evidence replays: ok"));
    let o = chist(&["explain", &fx("h2.chist"), "ra"]);
    assert!(stdout(&o).contains("anomaly FracturedRead participants 1,2"));
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn compare_models() {
    let o = chist(&["compare", "SI", "SER"]);
    assert!(stdout(&o).starts_with("SI Incomparable SER\n"));
    let o = chist(&["compare", "sser", "ra"]);
    assert!(stdout(&o).starts_with("SSER Stronger RA\n"));
    assert_eq!(chist(&["compare", "cc", "nope"]).status.code(), Some(3));
}

#[test]
fn lattice_over_fixtures_and_empty_corpus() {
    let o = chist(&["lattice", fixtures().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("violations 0"));
    let dir = tempfile::tempdir().unwrap();
    let o = chist(&["lattice", dir.path().to_str().unwrap()]);
    assert_eq!(stdout(&o), "histories 0 edges 23 checked 0 skipped 0 violations 0\n");
    let o = chist(&["lattice"]);
    assert!(stdout(&o).contains("edge SSER SER\n"));
}

#[test]
fn lattice_over_simulator_outputs() {
    let dir = tempfile::tempdir().unwrap();
    for (i, proto) in ["sequencer", "causal", "lww"].iter().enumerate() {
        let cfg = dir.path().join(format!("{proto}.cfg"));
        std::fs::write(&cfg, format!("protocol {proto}\nloss 0.2\npartition 5 30 0|1,2\n")).unwrap();
        for seed in 0..4 {
            let out = dir.path().join(format!("{i}-{seed}.chist"));
            let o = chist(&[
                "simulate",
                cfg.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
                "--seed-override",
                &seed.to_string(),
            ]);
            assert_eq!(o.status.code(), Some(0));
        }
    }
    let o = chist(&["lattice", dir.path().to_str().unwrap()]);
    assert!(stdout(&o).starts_with("histories 12 "), "{}", stdout(&o));
    assert!(stdout(&o).contains("violations 0"));
    assert_eq!(o.status.code(), Some(0));
}

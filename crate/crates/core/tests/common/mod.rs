#![allow(dead_code)]

use std::path::PathBuf;

use chist::history::{parse_history, History};
use chist::{certify, CheckBudget, ModelId, Verdict};

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn fixture_text(name: &str) -> String {
    std::fs::read_to_string(fixture_dir().join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub fn fixture(name: &str) -> History {
    parse_history(&fixture_text(&format!("{name}.chist"))).unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// Checks `m` and asserts that the verdict's evidence replays.
pub fn checked(m: ModelId, h: &History, b: CheckBudget) -> Verdict {
    let v = chist::checkers::check(m, h, b).unwrap_or_else(|e| panic!("{m}: {e}"));
    if let Err(e) = certify::validate(h, &v) {
        panic!("{} evidence does not replay: {e}", v.line());
    }
    v
}

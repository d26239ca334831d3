use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{Event, EventKind, History, HistoryError, ItemKind, Op, OpKind, TxnId};
use crate::value::Value;

pub const HEADER: &str = "#chist v1";

/// Splits a line on whitespace, keeping double-quoted strings (with
/// backslash escapes) as single tokens.
fn tokenize(line: &str) -> Result<Vec<&str>, String> {
    let bytes = line.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i].is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if bytes[i] == b'"' {
            i += 1;
            loop {
                match bytes.get(i) {
                    None => return Err("unterminated string".into()),
                    Some(b'\\') => i += 2,
                    Some(b'"') => {
                        i += 1;
                        break;
                    }
                    Some(_) => i += 1,
                }
            }
            if i < bytes.len() && !bytes[i].is_ascii_whitespace() {
                return Err("garbage after string".into());
            }
        } else {
            while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
                i += 1;
            }
        }
        out.push(&line[start..i]);
    }
    Ok(out)
}

fn parse_event(toks: &[&str]) -> Result<Event, String> {
    if toks.len() < 6 {
        return Err(format!("expected at least 6 fields, got {}", toks.len()));
    }
    let seq = toks[0].parse::<u64>().map_err(|_| format!("bad seq {:?}", toks[0]))?;
    let kind = match toks[1] {
        "inv" => EventKind::Invocation,
        "res" => EventKind::Response,
        other => return Err(format!("bad event kind {other:?}")),
    };
    let proc = toks[2].to_string();
    let txn = TxnId(toks[3].parse::<u64>().map_err(|_| format!("bad txn id {:?}", toks[3]))?);
    let op_kind = OpKind::from_name(toks[4]).ok_or_else(|| format!("unknown op {:?}", toks[4]))?;
    let key = toks[5].to_string();
    if key.starts_with('"') {
        return Err("keys are bare tokens".into());
    }
    let mut rest = &toks[6..];
    let mut arg = None;
    if let Some(first) = rest.first() {
        if *first != "->" {
            arg = Some(Value::parse_token(first).ok_or_else(|| format!("bad value {first:?}"))?);
            rest = &rest[1..];
        }
    }
    let ret = match rest {
        [] => None,
        ["->", v] => Some(Value::parse_token(v).ok_or_else(|| format!("bad value {v:?}"))?),
        _ => return Err("trailing fields".into()),
    };
    Ok(Event { seq, kind, proc, txn, op: Op { kind: op_kind, key, arg, ret } })
}

/// Parses the line-oriented history format.
pub fn parse_history(input: &str) -> Result<History, HistoryError> {
    let mut items = BTreeMap::new();
    let mut events = Vec::new();
    let mut lines_of = Vec::new();
    let mut saw_header = false;

    for (n, raw) in input.lines().enumerate() {
        let line_no = n + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let malformed = |reason: String| HistoryError::MalformedEvent { line: line_no, reason };
        if !saw_header {
            if line != HEADER {
                return Err(malformed(format!("expected header {HEADER:?}")));
            }
            saw_header = true;
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let toks: Vec<&str> = rest.split_whitespace().collect();
            if toks.first() == Some(&"item") {
                let [_, key, kind] = toks[..] else {
                    return Err(malformed("expected `#item <key> <kind>`".into()));
                };
                let kind = ItemKind::from_name(kind).ok_or_else(|| malformed(format!("unknown item kind {kind:?}")))?;
                if items.insert(key.to_string(), kind).is_some_and(|k| k != kind) {
                    return Err(malformed(format!("conflicting kinds for {key}")));
                }
            }
            continue;
        }
        let toks = tokenize(line).map_err(malformed)?;
        events.push(parse_event(&toks).map_err(malformed)?);
        lines_of.push(line_no);
    }
    History::build(events, items, |i| lines_of[i])
}

/// Renders a history in canonical form: header, item declarations in key
/// order, then one line per event.
pub fn serialize_history(h: &History) -> String {
    let mut out = String::new();
    out.push_str(HEADER);
    out.push('\n');
    for (key, kind) in h.declared_items() {
        let _ = writeln!(out, "#item {key} {}", kind.name());
    }
    for ev in h.events() {
        let kind = match ev.kind {
            EventKind::Invocation => "inv",
            EventKind::Response => "res",
        };
        let _ = write!(out, "{} {kind} {} {} {} {}", ev.seq, ev.proc, ev.txn, ev.op.kind.name(), ev.op.key);
        if let Some(a) = &ev.op.arg {
            let _ = write!(out, " {a}");
        }
        if let Some(r) = &ev.op.ret {
            let _ = write!(out, " -> {r}");
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const H2: &str = "#chist v1
#item x counter
#item y counter
1 inv p 1 inc x
2 inv q 2 read x
3 res p 1 inc x
4 inv p 1 inc y
5 res q 2 read x -> 1
6 inv q 2 read y
7 res p 1 inc y
8 res q 2 read y -> 0
";

    #[test]
    fn parses_and_round_trips() {
        let h = parse_history(H2).unwrap();
        assert_eq!(h.txns().len(), 2);
        assert_eq!(h.txns()[1].ops[0].ret, Some(Value::Int(1)));
        assert_eq!(serialize_history(&h), H2);
    }

    #[test]
    fn empty_input_is_empty_history() {
        let h = parse_history("").unwrap();
        assert!(h.events().is_empty() && h.txns().is_empty());
        assert_eq!(serialize_history(&h), "#chist v1\n");
        assert_eq!(parse_history("#chist v1\n").unwrap(), h);
    }

    #[test]
    fn whitespace_and_comments_are_ignored() {
        let noisy = H2
            .replace("1 inv p 1 inc x", "  1   inv p 1 inc x   # not a comment start")
            .replace("#item y counter", "#item y counter\n# a comment\n");
        // trailing `#` inside an event line is a field, so that line is malformed
        assert!(parse_history(&noisy).is_err());
        let noisy = H2
            .replace("1 inv p 1 inc x", "  1   inv\tp 1 inc x  ")
            .replace("#item y counter", "#item y counter\n# a comment\n");
        assert_eq!(serialize_history(&parse_history(&noisy).unwrap()), H2);
    }

    #[test]
    fn unmatched_invocation() {
        let src = "#chist v1\n1 inv p 1 get k\n";
        assert!(matches!(parse_history(src), Err(HistoryError::UnmatchedInvocation { seq: 1, .. })));
    }

    #[test]
    fn duplicate_seq() {
        let src = "#chist v1\n1 inv p 1 get k\n1 res p 1 get k -> nil\n";
        assert!(matches!(parse_history(src), Err(HistoryError::DuplicateSeq { line: 3, seq: 1 })));
    }

    #[test]
    fn interleaved_session() {
        let src = "#chist v1\n1 inv p 1 get k\n2 inv p 2 get k\n3 res p 1 get k -> nil\n4 res p 2 get k -> nil\n";
        assert!(matches!(parse_history(src), Err(HistoryError::InterleavedSession { line: 3, .. })));
        let reopen = "#chist v1\n1 inv p 1 get k\n2 res p 1 get k -> nil\n3 inv p 2 get k\n4 res p 2 get k -> nil\n5 inv p 1 get k\n6 res p 1 get k -> nil\n";
        assert!(matches!(parse_history(reopen), Err(HistoryError::InterleavedSession { line: 6, .. })));
    }

    #[test]
    fn malformed_lines() {
        for bad in [
            "#chist v1\n1 inv p 1 frob k\n2 res p 1 frob k\n",
            "#chist v1\n1 inv p 1 put k\n2 res p 1 put k\n",
            "#chist v1\n1 inv p 1 get k -> 3\n2 res p 1 get k -> 3\n",
            "#chist v1\n1 inv p 1 get k\n2 res p 1 get k\n",
            "#chist v1\n1 inv p 1 inc k\n2 res p 1 inc k\n",
            "#chist v1\n2 inv p 1 get k\n1 res p 1 get k -> nil\n",
            "#chist v1\n1 res p 1 get k -> nil\n",
            "#chist v2\n",
            "1 inv p 1 get k\n",
        ] {
            assert!(matches!(parse_history(bad), Err(HistoryError::MalformedEvent { .. })), "{bad:?}");
        }
    }

    #[test]
    fn quoted_values_with_spaces() {
        let src = "#chist v1\n1 inv p 1 put k \"a b\"\n2 res p 1 put k \"a b\"\n3 inv q 2 get k\n4 res q 2 get k -> \"a b\"\n";
        let h = parse_history(src).unwrap();
        assert_eq!(h.txns()[1].ops[0].ret, Some(Value::text("a b")));
        assert_eq!(serialize_history(&h), src);
    }
}

use std::fmt;

/// A scalar stored in a data item.
///
/// `Nil` is the initial, never-written state of a register or kv cell.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Value {
    Nil,
    Int(i64),
    Text(String),
}

impl Value {
    pub fn text(s: impl Into<String>) -> Self {
        Value::Text(s.into())
    }

    pub fn is_nil(&self) -> bool {
        matches!(self, Value::Nil)
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(v) => Some(*v),
            _ => None,
        }
    }

    /// Parses one value token as it appears in a history file.
    pub fn parse_token(tok: &str) -> Option<Value> {
        if tok == "nil" {
            return Some(Value::Nil);
        }
        if let Some(body) = tok.strip_prefix('"') {
            let body = body.strip_suffix('"')?;
            let mut out = String::with_capacity(body.len());
            let mut chars = body.chars();
            while let Some(c) = chars.next() {
                match c {
                    '\\' => match chars.next()? {
                        '\\' => out.push('\\'),
                        '"' => out.push('"'),
                        'n' => out.push('\n'),
                        _ => return None,
                    },
                    '"' => return None,
                    c => out.push(c),
                }
            }
            return Some(Value::Text(out));
        }
        tok.parse::<i64>().ok().map(Value::Int)
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Nil => f.write_str("nil"),
            Value::Int(v) => write!(f, "{v}"),
            Value::Text(s) => {
                f.write_str("\"")?;
                for c in s.chars() {
                    match c {
                        '\\' => f.write_str("\\\\")?,
                        '"' => f.write_str("\\\"")?,
                        '\n' => f.write_str("\\n")?,
                        c => write!(f, "{c}")?,
                    }
                }
                f.write_str("\"")
            }
        }
    }
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Int(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Text(v.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokens_round_trip() {
        for v in [Value::Nil, Value::Int(-42), Value::text("a b"), Value::text("q\"uo\\te\n")] {
            assert_eq!(Value::parse_token(&v.to_string()), Some(v));
        }
    }

    #[test]
    fn rejects_garbage() {
        assert_eq!(Value::parse_token("x1"), None);
        assert_eq!(Value::parse_token("\"open"), None);
        assert_eq!(Value::parse_token("\"bad\\q\""), None);
    }
}

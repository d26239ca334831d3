//! Three-axis classification of models and the weaker-than lattice.
//!
//! Both ship as a data file so the assignments can be edited without
//! touching code.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use thiserror::Error;

use crate::model::ModelId;

const SHIPPED: &str = include_str!("../data/lattice.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Visibility {
    External,
    Causal,
    Transitive,
    Rollback,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Ordering {
    Total,
    Gapless,
    Capricious,
    Concurrent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Composition {
    AllOrNothing,
    Snapshot,
    None,
}

macro_rules! named_enum {
    ($ty:ident { $($v:ident),* }) => {
        impl FromStr for $ty {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                match s {
                    $(stringify!($v) => Ok($ty::$v),)*
                    _ => Err(format!("unknown {} {s:?}", stringify!($ty))),
                }
            }
        }
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{self:?}")
            }
        }
    };
}

named_enum!(Visibility { External, Causal, Transitive, Rollback });
named_enum!(Ordering { Total, Gapless, Capricious, Concurrent });
named_enum!(Composition { AllOrNothing, Snapshot, None });

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DimensionTriple {
    pub visibility: Visibility,
    pub ordering: Ordering,
    pub composition: Composition,
}

impl fmt::Display for DimensionTriple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "vis={} ord={} comp={}", self.visibility, self.ordering, self.composition)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LatticeEdge {
    pub stronger: ModelId,
    pub weaker: ModelId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Comparison {
    Stronger,
    Weaker,
    Equivalent,
    Incomparable,
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DimensionError {
    #[error("model {0} is not registered in the lattice")]
    UnknownModel(String),
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("edges form a cycle through {0}")]
    Cycle(ModelId),
}

/// Classification table plus the weaker-than DAG.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lattice {
    classes: BTreeMap<ModelId, DimensionTriple>,
    edges: BTreeSet<LatticeEdge>,
}

impl Lattice {
    /// The lattice bundled with the crate.
    pub fn shipped() -> &'static Lattice {
        static CELL: OnceLock<Lattice> = OnceLock::new();
        CELL.get_or_init(|| Lattice::parse(SHIPPED).expect("bundled lattice data is valid"))
    }

    pub fn parse(text: &str) -> Result<Lattice, DimensionError> {
        let mut classes = BTreeMap::new();
        let mut edges = BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let bad = |reason: String| DimensionError::Malformed { line, reason };
            let toks: Vec<&str> = raw.split_whitespace().collect();
            let model = |s: &str| s.parse::<ModelId>().map_err(|e| bad(e.to_string()));
            match toks.as_slice() {
                [] => {}
                [first, ..] if first.starts_with('#') => {}
                ["model", id, rest @ ..] => {
                    let m = model(id)?;
                    let mut fields: BTreeMap<&str, &str> = BTreeMap::new();
                    for kv in rest {
                        let (k, v) =
                            kv.split_once('=').ok_or_else(|| bad(format!("expected key=value, got {kv:?}")))?;
                        fields.insert(k, v);
                    }
                    let get = |k: &str| fields.get(k).copied().ok_or_else(|| bad(format!("missing {k}=")));
                    let triple = DimensionTriple {
                        visibility: get("vis")?.parse().map_err(bad)?,
                        ordering: get("ord")?.parse().map_err(bad)?,
                        composition: get("comp")?.parse().map_err(bad)?,
                    };
                    if fields.len() != 3 {
                        return Err(bad("expected exactly vis=, ord=, comp=".into()));
                    }
                    if classes.insert(m, triple).is_some() {
                        return Err(bad(format!("model {m} declared twice")));
                    }
                }
                ["edge", s, w] => {
                    let (s, w) = (model(s)?, model(w)?);
                    if s == w {
                        return Err(bad(format!("self edge on {s}")));
                    }
                    edges.insert(LatticeEdge { stronger: s, weaker: w });
                }
                _ => return Err(bad(format!("unrecognized line {raw:?}"))),
            }
        }
        for e in &edges {
            for m in [e.stronger, e.weaker] {
                if !classes.contains_key(&m) {
                    return Err(DimensionError::UnknownModel(m.to_string()));
                }
            }
        }
        let lattice = Lattice { classes, edges };
        for &m in lattice.classes.keys() {
            if lattice.successors(m).any(|s| lattice.reaches(s, m)) {
                return Err(DimensionError::Cycle(m));
            }
        }
        Ok(lattice)
    }

    pub fn models(&self) -> impl Iterator<Item = ModelId> + '_ {
        self.classes.keys().copied()
    }

    pub fn edges(&self) -> impl Iterator<Item = LatticeEdge> + '_ {
        self.edges.iter().copied()
    }

    fn successors(&self, m: ModelId) -> impl Iterator<Item = ModelId> + '_ {
        self.edges.iter().filter(move |e| e.stronger == m).map(|e| e.weaker)
    }

    /// True when `from` is at least as strong as `to` along edges.
    pub fn reaches(&self, from: ModelId, to: ModelId) -> bool {
        let mut stack = vec![from];
        let mut seen = BTreeSet::new();
        while let Some(m) = stack.pop() {
            if m == to {
                return true;
            }
            if seen.insert(m) {
                stack.extend(self.successors(m));
            }
        }
        false
    }

    fn registered(&self, m: ModelId) -> Result<(), DimensionError> {
        if self.classes.contains_key(&m) {
            Ok(())
        } else {
            Err(DimensionError::UnknownModel(m.to_string()))
        }
    }

    pub fn classify(&self, m: ModelId) -> Result<DimensionTriple, DimensionError> {
        self.classes.get(&m).copied().ok_or_else(|| DimensionError::UnknownModel(m.to_string()))
    }

    pub fn compare(&self, a: ModelId, b: ModelId) -> Result<Comparison, DimensionError> {
        self.registered(a)?;
        self.registered(b)?;
        Ok(match (self.reaches(a, b), self.reaches(b, a)) {
            (true, true) => Comparison::Equivalent,
            (true, false) => Comparison::Stronger,
            (false, true) => Comparison::Weaker,
            (false, false) => Comparison::Incomparable,
        })
    }

    /// Models with no stronger model that have at least one weaker one.
    pub fn tops(&self) -> Vec<ModelId> {
        self.classes
            .keys()
            .copied()
            .filter(|&m| self.edges.iter().all(|e| e.weaker != m) && self.edges.iter().any(|e| e.stronger == m))
            .collect()
    }
}

/// Looks up `m` in the shipped lattice.
pub fn classify(m: ModelId) -> Result<DimensionTriple, DimensionError> {
    Lattice::shipped().classify(m)
}

/// Relative strength of `a` against `b` in the shipped lattice.
pub fn compare(a: ModelId, b: ModelId) -> Result<Comparison, DimensionError> {
    Lattice::shipped().compare(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_lattice_loads() {
        let l = Lattice::shipped();
        assert_eq!(l.models().count(), ModelId::ALL.len());
        assert_eq!(compare(ModelId::SSER, ModelId::SER), Ok(Comparison::Stronger));
        assert_eq!(compare(ModelId::SER, ModelId::SSER), Ok(Comparison::Weaker));
        assert_eq!(compare(ModelId::SI, ModelId::SER), Ok(Comparison::Incomparable));
        for m in ModelId::ALL {
            assert_eq!(compare(m, m), Ok(Comparison::Equivalent));
        }
    }

    #[test]
    fn unregistered_model_is_an_error() {
        let l = Lattice::parse("model SER vis=Transitive ord=Total comp=Snapshot\n").unwrap();
        assert!(matches!(l.classify(ModelId::CC), Err(DimensionError::UnknownModel(_))));
        assert!(matches!(l.compare(ModelId::SER, ModelId::CC), Err(DimensionError::UnknownModel(_))));
    }

    #[test]
    fn rejects_cycles_and_bad_lines() {
        let base = "model SER vis=Transitive ord=Total comp=Snapshot\nmodel SI vis=Causal ord=Gapless comp=Snapshot\n";
        assert!(matches!(Lattice::parse(&format!("{base}edge SER SI\nedge SI SER\n")), Err(DimensionError::Cycle(_))));
        assert!(matches!(
            Lattice::parse("model SER vis=Sideways ord=Total comp=Snapshot\n"),
            Err(DimensionError::Malformed { line: 1, .. })
        ));
        assert!(matches!(Lattice::parse("edge SER\n"), Err(DimensionError::Malformed { line: 1, .. })));
    }
}

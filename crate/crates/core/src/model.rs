use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// The consistency models this crate can decide.
#[allow(non_camel_case_types)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelId {
    RC_strict,
    RC_loose,
    RA,
    MR,
    MW,
    RMW,
    WFR,
    CM,
    CS,
    CC,
    SI,
    SSI,
    PSI,
    NMSI,
    SER,
    SSER,
    LIN,
    SC,
    EC_quiescent,
    /// Replica-level strong eventual consistency; decided on simulator
    /// traces by `sim::audit_sec`, not on histories.
    SEC,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown model {0:?}")]
pub struct UnknownModel(pub String);

impl ModelId {
    pub const ALL: [ModelId; 20] = [
        ModelId::RC_strict,
        ModelId::RC_loose,
        ModelId::RA,
        ModelId::MR,
        ModelId::MW,
        ModelId::RMW,
        ModelId::WFR,
        ModelId::CM,
        ModelId::CS,
        ModelId::CC,
        ModelId::SI,
        ModelId::SSI,
        ModelId::PSI,
        ModelId::NMSI,
        ModelId::SER,
        ModelId::SSER,
        ModelId::LIN,
        ModelId::SC,
        ModelId::EC_quiescent,
        ModelId::SEC,
    ];

    /// Models decidable from a history alone (everything but SEC).
    pub fn history_models() -> impl Iterator<Item = ModelId> {
        Self::ALL.into_iter().filter(|m| *m != ModelId::SEC)
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelId::RC_strict => "RC_strict",
            ModelId::RC_loose => "RC_loose",
            ModelId::RA => "RA",
            ModelId::MR => "MR",
            ModelId::MW => "MW",
            ModelId::RMW => "RMW",
            ModelId::WFR => "WFR",
            ModelId::CM => "CM",
            ModelId::CS => "CS",
            ModelId::CC => "CC",
            ModelId::SI => "SI",
            ModelId::SSI => "SSI",
            ModelId::PSI => "PSI",
            ModelId::NMSI => "NMSI",
            ModelId::SER => "SER",
            ModelId::SSER => "SSER",
            ModelId::LIN => "LIN",
            ModelId::SC => "SC",
            ModelId::EC_quiescent => "EC_quiescent",
            ModelId::SEC => "SEC",
        }
    }

    /// True for models whose checker is a bounded search.
    pub fn is_search_based(self) -> bool {
        matches!(
            self,
            ModelId::SER | ModelId::SSER | ModelId::LIN | ModelId::SC | ModelId::SI | ModelId::SSI | ModelId::PSI
        )
    }

    pub fn requires_single_op(self) -> bool {
        matches!(self, ModelId::LIN | ModelId::SC)
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelId {
    type Err = UnknownModel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let wanted = s.trim().to_ascii_lowercase();
        let alias = match wanted.as_str() {
            "rc" => "rc_loose",
            "ec" => "ec_quiescent",
            other => other,
        };
        ModelId::ALL
            .into_iter()
            .find(|m| m.name().to_ascii_lowercase() == alias)
            .ok_or_else(|| UnknownModel(s.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_parse_back() {
        for m in ModelId::ALL {
            assert_eq!(m.name().parse::<ModelId>().unwrap(), m);
            assert_eq!(m.name().to_lowercase().parse::<ModelId>().unwrap(), m);
        }
        assert!("XYZ".parse::<ModelId>().is_err());
        assert_eq!("ec".parse::<ModelId>().unwrap(), ModelId::EC_quiescent);
    }
}

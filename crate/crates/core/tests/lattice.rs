//! Shape of the shipped model lattice.

use chist::dimensions::{classify, compare, Comparison, Lattice};
use chist::ModelId;

#[test]
fn strong_models_dominate_their_weakenings() {
    use ModelId::*;
    for (s, w) in [(SSER, SER), (SSER, LIN), (LIN, SC), (SSI, SI), (SI, CC), (CC, CS), (CC, CM), (CS, RA), (PSI, NMSI)]
    {
        assert_eq!(compare(s, w), Ok(Comparison::Stronger), "{s} vs {w}");
    }
    for m in [SER, SI, CC, RA, MR, MW, RMW, WFR, NMSI, SC] {
        assert_eq!(compare(m, RC_loose), Ok(Comparison::Stronger), "{m}");
    }
    assert_eq!(compare(SI, SER), Ok(Comparison::Incomparable));
    assert_eq!(compare(NMSI, SI), Ok(Comparison::Incomparable));
}

#[test]
fn every_history_model_is_classified() {
    for m in ModelId::ALL {
        assert!(classify(m).is_ok(), "{m}");
    }
    let l = Lattice::shipped();
    for e in l.edges() {
        assert_ne!(compare(e.weaker, e.stronger), Ok(Comparison::Stronger));
    }
}

#[test]
fn tops_are_the_models_nothing_refines() {
    let tops = Lattice::shipped().tops();
    assert!(tops.contains(&ModelId::SSER));
    assert!(tops.contains(&ModelId::SSI) && tops.contains(&ModelId::PSI));
}

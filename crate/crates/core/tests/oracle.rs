//! The search checkers against exhaustive permutation replay.

use chist::checkers::{check_ser, check_sser, oracle_ser, oracle_sser};
use chist::corpus::{random_history, CorpusConfig};
use chist::history::serialize_history;
use chist::{certify, CheckBudget};

#[test]
fn search_checkers_agree_with_the_oracle_on_1000_histories() {
    let cfg = CorpusConfig::default();
    let (mut ser_yes, mut sser_yes) = (0, 0);
    for seed in 0..1000 {
        let h = random_history(seed, &cfg);
        assert!(h.txns().len() <= 6 && h.keys().len() <= 3);
        let oracle = oracle_ser(&h).unwrap();
        let oracle_strict = oracle_sser(&h).unwrap();
        let ser = check_ser(&h, CheckBudget::default()).unwrap();
        let sser = check_sser(&h, CheckBudget::default()).unwrap();
        let text = serialize_history(&h);
        assert_eq!(ser.is_accepted(), oracle.is_accepted(), "SER seed {seed}\n{text}");
        assert_eq!(sser.is_accepted(), oracle_strict.is_accepted(), "SSER seed {seed}\n{text}");
        assert!(!ser.is_inconclusive() && !sser.is_inconclusive());
        for v in [&oracle, &oracle_strict, &ser, &sser] {
            certify::validate(&h, v).unwrap_or_else(|e| panic!("seed {seed} {}: {e}\n{text}", v.line()));
        }
        ser_yes += usize::from(oracle.is_accepted());
        sser_yes += usize::from(oracle_strict.is_accepted());
    }
    // The corpus must exercise both outcomes for both models.
    assert!((100..900).contains(&ser_yes), "{ser_yes}");
    assert!((100..900).contains(&sser_yes), "{sser_yes}");
    assert!(sser_yes < ser_yes);
}

#[test]
fn single_op_corpus_agrees_too() {
    let cfg = CorpusConfig { max_txns: 8, ..CorpusConfig::single_op() };
    for seed in 0..300 {
        let h = random_history(seed, &cfg);
        assert_eq!(
            check_sser(&h, CheckBudget::default()).unwrap().is_accepted(),
            oracle_sser(&h).unwrap().is_accepted(),
            "seed {seed}\n{}",
            serialize_history(&h)
        );
    }
}

#[test]
fn oracle_refuses_large_histories() {
    let cfg = CorpusConfig { max_txns: 30, ..CorpusConfig::single_op() };
    let h = (0..).map(|s| random_history(s, &cfg)).find(|h| h.txns().len() > 8).unwrap();
    assert!(matches!(oracle_ser(&h), Err(chist::CheckError::TooLarge(_))));
}

mod common;

use alphagate::protocol::{run_protocol, Outcome};
use common::*;

#[test]
fn purge_windows_hold_and_test_bars_never_reach_selection() {
    let summary = check_purge_no_peeking(20).unwrap();
    assert!(summary.contains("0 violations"), "{summary}");
}

#[test]
fn reset_continuation_matches_fresh_session() {
    check_state_normalization(10).unwrap();
}

#[test]
fn fixtures_reach_their_documented_outcomes() {
    for (name, expected) in [("pass", Outcome::Deploy), ("g1_fail", Outcome::Refactor), ("g2_fail", Outcome::Reject)] {
        let (series, config) = load_fixture(name);
        let run = run_protocol(&series, config, name).unwrap();
        assert_eq!(run.verdict.outcome, expected, "{name}");
    }
}

#[test]
fn refactor_halts_before_wfa() {
    let (series, config) = load_fixture("g1_fail");
    let run = run_protocol(&series, config, "g1").unwrap();
    assert!(run.pack.stage_wfa.is_none());
    assert!(run.pack.stage_oos.is_none());
    assert_eq!(run.pack.verdict.trace.len(), 1);
}

#[test]
fn reject_at_wfa_never_touches_oos() {
    let (series, config) = load_fixture("g2_fail");
    let run = run_protocol(&series, config, "g2").unwrap();
    assert!(run.pack.stage_wfa.is_some());
    assert!(run.pack.stage_oos.is_none());
}

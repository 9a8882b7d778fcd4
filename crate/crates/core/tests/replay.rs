mod support;

use tfcp::harness::run;
use tfcp::ledger::Ledger;

#[test]
fn ledger_history_replays_to_identical_state() {
    for sc in support::suite() {
        let outcome = run(&sc).unwrap();
        let ledger = outcome.engine.ledger();
        let replayed = Ledger::replay(ledger.config(), ledger.history()).unwrap();
        assert_eq!(replayed.state_bytes(), ledger.state_bytes(), "{}", sc.name);
    }
}

#[test]
fn truncated_history_diverges() {
    let outcome = run(&support::bundled("happy-path.tfcp")).unwrap();
    let ledger = outcome.engine.ledger();
    let history = ledger.history();
    let partial = Ledger::replay(ledger.config(), &history[..history.len() / 2]).unwrap();
    assert_ne!(partial.state_bytes(), ledger.state_bytes());
}

mod support;

use tfcp::engine::{AbortReason, Phase};
use tfcp::harness::analyzer::{linkage_analyzer, Basis};
use tfcp::harness::scenario::{ActorSpec, DonorBehavior};
use tfcp::harness::{
    careless_funding_scenario, happy_path_scenario, parse_scenario, run, ConfigError, RunError,
    Scenario,
};
use tfcp::incentives::PayoutKind;

use support::{failed_reveal_scenario, one_silent_scenario};

#[test]
fn empty_schedule_leaves_state_untouched() {
    let mut sc = Scenario::new("idle", 4);
    sc.add(ActorSpec::donor("alice", 500, DonorBehavior::default()));
    sc.add(ActorSpec::observer("eve", 20));
    let outcome = run(&sc).unwrap();
    assert!(outcome.trace.events().is_empty());
    assert_eq!(outcome.trace.header(), Some(("idle".to_string(), 4)));
    assert_eq!(outcome.trace.to_text().lines().count(), 1);
    let ledger = outcome.engine.ledger();
    assert_eq!(ledger.balance_of(&outcome.account("alice")), Ok(500));
    assert_eq!(ledger.balance_of(&outcome.account("eve")), Ok(20));
    assert!(outcome.engine.instances().is_empty());
    assert!(ledger.transfers().is_empty());
}

#[test]
fn careless_funding_is_linkable() {
    let outcome = run(&careless_funding_scenario(4, 11)).unwrap();
    let d0 = outcome.account("d0");
    let sd = outcome
        .ground_truth
        .iter()
        .find(|(_, donor)| *donor == d0)
        .map(|(sd, _)| *sd)
        .unwrap();
    let guesses = {
        let before_ack = outcome.first_ack_block().unwrap().0 - 1;
        linkage_analyzer(&outcome.public_view(tfcp::ledger::BlockHeight(before_ack)))
    };
    let g = guesses.iter().find(|g| g.security_deposit == sd).unwrap();
    assert_eq!(g.guessed_donor, Some(d0));
    assert_eq!(g.basis, Basis::TransferGraph);
}

#[test]
fn analyzer_source_has_no_private_access() {
    let src = include_str!("../src/harness/analyzer.rs");
    for forbidden in ["engine", "Engine", "Share", "secret_key", "RunOutcome"] {
        assert!(!src.contains(forbidden), "analyzer mentions {forbidden}");
    }
}

#[test]
fn unknown_actor_fails_before_running() {
    let text =
        "tfcp-scenario v1\nname = x\nseed = 1\n[actors]\nalice donor 100\n[schedule]\n0 mallory open\n";
    match parse_scenario(text) {
        Err(ConfigError::UnknownActor(name)) => assert_eq!(name, "mallory"),
        Ok(sc) => match run(&sc) {
            Err(RunError::Config(ConfigError::UnknownActor(name))) => assert_eq!(name, "mallory"),
            other => panic!("expected config error, got {:?}", other.map(|o| o.scenario)),
        },
        Err(other) => panic!("unexpected {other}"),
    }
}

#[test]
fn misbehaving_registrars_are_slashed() {
    let outcome = run(&failed_reveal_scenario(2)).unwrap();
    let id = outcome.latest_instance("alice").unwrap();
    let inst = outcome.engine.instance(id).unwrap();
    assert_eq!(inst.phase, Phase::Aborted);
    assert_eq!(inst.abort_reason, Some(AbortReason::RevealFailed));
    let payouts = outcome.engine.incentives().payouts();
    let slashed: Vec<_> = payouts
        .entries()
        .iter()
        .filter(|e| e.kind == PayoutKind::BailSlash)
        .collect();
    assert!(!slashed.is_empty());
    assert_eq!(payouts.sum(id, PayoutKind::RegistrarFeeFinal), 0);
    assert_eq!(payouts.sum(id, PayoutKind::WitnessFee), 0);
    assert_eq!(
        payouts.sum(id, PayoutKind::AnteRefund),
        payouts.sum(id, PayoutKind::AnteEscrow)
    );
    assert!(outcome.engine.acknowledgments().is_empty());
}

#[test]
fn one_silent_registrar_still_acknowledges() {
    let outcome = run(&one_silent_scenario(2)).unwrap();
    assert_eq!(outcome.final_phase("alice"), Some(Phase::Acknowledged));
    let r3 = outcome.account("r3");
    let slashed_r3 = outcome
        .engine
        .incentives()
        .payouts()
        .entries()
        .iter()
        .any(|e| e.kind == PayoutKind::BailSlash && e.to != r3);
    assert!(slashed_r3);
}

#[test]
fn runs_are_seed_sensitive() {
    let a = run(&happy_path_scenario(1)).unwrap().trace.to_text();
    let b = run(&happy_path_scenario(2)).unwrap().trace.to_text();
    assert_ne!(a, b);
}

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use tfcp::harness::scenario::RevealMode;
use tfcp::harness::scenario::{Action, Behavior};
use tfcp::harness::{
    happy_path_scenario, key_transfer_attack_scenario, liveness_scenario, parse_scenario,
    supersession_scenario, whale_attack_scenario, KeyTransferParams, RunOutcome, Scenario,
    WhaleParams,
};
use tfcp::incentives::PayoutKind;
use tfcp::ledger::{AccountId, Coins};

pub fn scenarios_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

pub fn bundled(name: &str) -> Scenario {
    let text = std::fs::read_to_string(scenarios_dir().join(name)).unwrap();
    parse_scenario(&text).unwrap()
}

/// Registrars r2 and r3 of the happy path misbehave, so the reveal fails.
pub fn failed_reveal_scenario(seed: u64) -> Scenario {
    let mut sc = happy_path_scenario(seed);
    sc.name = "failed-reveal".into();
    for (name, mode) in [("r2", RevealMode::Silent), ("r3", RevealMode::Corrupt)] {
        if let Some(Behavior::Registrar(r)) = sc.actor_mut(name).map(|a| &mut a.behavior) {
            r.reveal = mode;
        }
    }
    sc
}

/// Only r3 stays silent; r1 and r2 still reach the threshold.
pub fn one_silent_scenario(seed: u64) -> Scenario {
    let mut sc = happy_path_scenario(seed);
    sc.name = "one-silent".into();
    if let Some(Behavior::Registrar(r)) = sc.actor_mut("r3").map(|a| &mut a.behavior) {
        r.reveal = RevealMode::Silent;
    }
    sc
}

/// Every scenario the conservation and determinism checks sweep over.
pub fn suite() -> Vec<Scenario> {
    let mut all: Vec<Scenario> = [
        "happy-path.tfcp",
        "alive-donor.tfcp",
        "supersession.tfcp",
        "key-transfer.tfcp",
    ]
    .into_iter()
    .map(bundled)
    .collect();
    all.extend([
        happy_path_scenario(3),
        liveness_scenario(3, 5),
        supersession_scenario(3),
        failed_reveal_scenario(3),
        one_silent_scenario(3),
        key_transfer_attack_scenario(KeyTransferParams::default()),
        key_transfer_attack_scenario(KeyTransferParams {
            deliberation_time: 0,
            ..KeyTransferParams::default()
        }),
        key_transfer_attack_scenario(KeyTransferParams {
            move_after: 12,
            ..KeyTransferParams::default()
        }),
        whale_attack_scenario(WhaleParams::default()),
        whale_attack_scenario(WhaleParams {
            min_distinct_witnesses: 1,
            ..WhaleParams::default()
        }),
        whale_attack_scenario(WhaleParams {
            min_distinct_witnesses: 1,
            donor_responsive: false,
            ..WhaleParams::default()
        }),
        tfcp::harness::anonymity_scenario(5, 3),
        tfcp::harness::careless_funding_scenario(5, 3),
    ]);
    all
}

/// Coins that exist in a run: actor balances plus whatever the faucet needs
/// for hygienic deposits.
pub fn expected_supply(sc: &Scenario) -> Coins {
    let balances: Coins = sc.actors.iter().map(|a| a.initial_balance).sum();
    let faucet: Coins = sc
        .schedule
        .iter()
        .filter(|e| e.action == Action::Open)
        .map(|e| match &sc.actor(&e.actor).unwrap().behavior {
            Behavior::Donor(d) if !d.careless_funding => d.deposit,
            _ => 0,
        })
        .sum();
    balances + faucet
}

pub fn circulating(outcome: &RunOutcome) -> Coins {
    let ledger = outcome.engine.ledger();
    ledger
        .account_ids()
        .map(|a| ledger.balance_of(a).unwrap())
        .sum()
}

/// Checks the payout identities straight from the raw entries.
pub fn payout_identities(outcome: &RunOutcome) -> Result<(), String> {
    let entries = outcome.engine.incentives().payouts().entries();
    let ledger = outcome.engine.ledger();
    for e in entries {
        let t = ledger
            .transfer(e.transfer_seq)
            .ok_or("payout without transfer")?;
        if (t.from, t.to, t.amount) != (e.from, e.to, e.amount) {
            return Err(format!(
                "payout {:?} disagrees with transfer {}",
                e.kind, t.seq
            ));
        }
    }
    for inst in outcome.engine.instances() {
        let sum = |k: PayoutKind| -> Coins {
            entries
                .iter()
                .filter(|e| e.instance == Some(inst.id) && e.kind == k)
                .map(|e| e.amount)
                .sum()
        };
        let (escrow, refund, forfeit) = (
            sum(PayoutKind::AnteEscrow),
            sum(PayoutKind::AnteRefund),
            sum(PayoutKind::AnteForfeit),
        );
        let antes: Coins = inst.ante_record.iter().map(|a| a.amount).sum();
        if escrow != antes {
            return Err(format!("escrow {escrow} != recorded antes {antes}"));
        }
        if inst.phase.is_terminal() && escrow != refund + forfeit {
            return Err(format!(
                "{}: escrow {escrow} != refund {refund} + forfeit {forfeit}",
                inst.id.short()
            ));
        }
        if !inst.phase.is_terminal() && refund + forfeit != 0 {
            return Err(format!("{}: live instance settled antes", inst.id.short()));
        }
    }
    let mut bails: BTreeMap<AccountId, (Coins, Coins, Coins)> = BTreeMap::new();
    for e in entries {
        match e.kind {
            PayoutKind::BailStake => bails.entry(e.to).or_default().0 += e.amount,
            PayoutKind::BailRelease => bails.entry(e.from).or_default().1 += e.amount,
            PayoutKind::BailSlash => bails.entry(e.from).or_default().2 += e.amount,
            _ => {}
        }
    }
    for (escrow, (stake, release, slash)) in bails {
        if stake != release + slash {
            return Err(format!(
                "bail stake {stake} != release {release} + slash {slash}"
            ));
        }
        if ledger.balance_of(&escrow).unwrap() != 0 {
            return Err("bail escrow not empty after wind-down".into());
        }
    }
    Ok(())
}

//! Bundled scenario builders, the attack catalog and the anonymity
//! measurement.

use std::thread;

use crate::engine::{AbortReason, Phase};
use crate::incentives::PayoutKind;
use crate::ledger::BlockHeight;
use crate::trace::TraceRecord;

use super::analyzer::{linkage_analyzer, score};
use super::runner::{run, RunError, RunOutcome};
use super::scenario::{
    Action, ActorSpec, DonorBehavior, KeyTransferBehavior, RegistrarBehavior, Scenario, Trigger,
    WitnessBehavior,
};

fn registrars(sc: &mut Scenario, n: usize, expiry: u64) {
    for i in 1..=n {
        let spec = RegistrarBehavior {
            bail_expiry: expiry,
            ..RegistrarBehavior::default()
        };
        sc.add(ActorSpec::registrar(&format!("r{i}"), 1_000, spec));
    }
}

fn witness(sc: &mut Scenario, name: &str, target: &str, ante: u64, trigger: Trigger) {
    let w = WitnessBehavior {
        target: target.to_string(),
        ante,
        trigger,
        whale: false,
    };
    sc.add(ActorSpec::witness(name, 500, w));
}

fn donor(name: &str) -> DonorBehavior {
    DonorBehavior {
        civil_name: name.to_string(),
        min_distinct_witnesses: Some(2),
        min_signaling_span: Some(0),
        ..DonorBehavior::default()
    }
}

/// One donor dying at block 20, three registrars with `t = 2` and three
/// witnesses signalling one block apart.
pub fn happy_path_scenario(seed: u64) -> Scenario {
    let mut sc = Scenario::new("happy-path", seed);
    let alice = DonorBehavior {
        death: Some(20),
        threshold_amount: 150,
        witness_fees: 30,
        min_signaling_span: Some(2),
        ..donor("Alice")
    };
    sc.add(ActorSpec::donor("alice", 1_000, alice));
    registrars(&mut sc, 3, 200);
    for (i, delay) in [1, 2, 3].into_iter().enumerate() {
        witness(
            &mut sc,
            &format!("w{}", i + 1),
            "alice",
            60,
            Trigger::AfterDeath(delay),
        );
    }
    sc.at(0, "alice", Action::Open);
    sc
}

/// A living donor falsely signalled dead at block 5, answering `react`
/// blocks into a deliberation window of 10.
pub fn liveness_scenario(seed: u64, react: u64) -> Scenario {
    let mut sc = Scenario::new("alive-donor", seed);
    sc.add(ActorSpec::donor(
        "alice",
        1_000,
        DonorBehavior {
            react_after: react,
            ..donor("Alice")
        },
    ));
    registrars(&mut sc, 3, 200);
    witness(&mut sc, "w1", "alice", 60, Trigger::At(5));
    witness(&mut sc, "w2", "alice", 60, Trigger::At(5));
    sc.at(0, "alice", Action::Open);
    sc
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KeyTransferParams {
    pub seed: u64,
    pub deliberation_time: u64,
    /// Blocks after deliberation starts at which Bob moves.
    pub move_after: u64,
}

impl Default for KeyTransferParams {
    fn default() -> Self {
        Self {
            seed: 1,
            deliberation_time: 10,
            move_after: 3,
        }
    }
}

/// Alice hands her keys to Bob and dies. Bob moves during deliberation to
/// abort the instance and keep the deposit.
pub fn key_transfer_attack_scenario(p: KeyTransferParams) -> Scenario {
    let mut sc = Scenario::new("key-transfer", p.seed);
    let alice = DonorBehavior {
        death: Some(20),
        deliberation_time: p.deliberation_time,
        ..donor("Alice")
    };
    sc.add(ActorSpec::donor("alice", 1_000, alice));
    registrars(&mut sc, 3, 200);
    witness(&mut sc, "w1", "alice", 60, Trigger::AfterDeath(1));
    witness(&mut sc, "w2", "alice", 60, Trigger::AfterDeath(1));
    let bob = KeyTransferBehavior {
        victim: "alice".into(),
        move_after: p.move_after,
        sweep: true,
    };
    sc.add(ActorSpec::key_transfer("bob", 0, bob));
    sc.at(0, "alice", Action::Open);
    sc
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WhaleParams {
    pub seed: u64,
    pub min_distinct_witnesses: u32,
    pub min_signaling_span: u64,
    pub donor_responsive: bool,
}

impl Default for WhaleParams {
    fn default() -> Self {
        Self {
            seed: 1,
            min_distinct_witnesses: 2,
            min_signaling_span: 0,
            donor_responsive: true,
        }
    }
}

/// A single account antes the whole threshold at block 5 against a living
/// donor.
pub fn whale_attack_scenario(p: WhaleParams) -> Scenario {
    let mut sc = Scenario::new("whale", p.seed);
    let alice = DonorBehavior {
        responsive: p.donor_responsive,
        min_distinct_witnesses: Some(p.min_distinct_witnesses),
        min_signaling_span: Some(p.min_signaling_span),
        ..donor("Alice")
    };
    let threshold = alice.threshold_amount;
    sc.add(ActorSpec::donor("alice", 1_000, alice));
    registrars(&mut sc, 3, 200);
    let whale = WitnessBehavior {
        target: "alice".into(),
        ante: threshold,
        trigger: Trigger::At(5),
        whale: true,
    };
    sc.add(ActorSpec::witness("whale", 1_000, whale));
    sc.at(0, "alice", Action::Open);
    sc
}

/// The donor opens three instances in turn and dies after the last.
pub fn supersession_scenario(seed: u64) -> Scenario {
    let mut sc = Scenario::new("supersession", seed);
    sc.add(ActorSpec::donor(
        "alice",
        1_000,
        DonorBehavior {
            death: Some(30),
            ..donor("Alice")
        },
    ));
    registrars(&mut sc, 3, 200);
    witness(&mut sc, "w1", "alice", 60, Trigger::AfterDeath(1));
    witness(&mut sc, "w2", "alice", 60, Trigger::AfterDeath(2));
    for block in [0, 5, 10] {
        sc.at(block, "alice", Action::Open);
    }
    sc
}

/// `k` donors opening together, each later dying and signalled by two
/// witnesses; three shared registrars with `t = 2`.
pub fn anonymity_scenario(k: usize, seed: u64) -> Scenario {
    let mut sc = Scenario::new("anonymity", seed);
    for i in 0..k {
        let d = DonorBehavior {
            death: Some(20 + 2 * i as u64),
            deliberation_time: 5,
            min_signaling_span: Some(1),
            ..donor(&format!("Donor {i}"))
        };
        sc.add(ActorSpec::donor(&format!("d{i}"), 100, d));
    }
    registrars(&mut sc, 3, 80);
    for i in 0..k {
        witness(
            &mut sc,
            &format!("w{i}a"),
            &format!("d{i}"),
            60,
            Trigger::AfterDeath(1),
        );
        witness(
            &mut sc,
            &format!("w{i}b"),
            &format!("d{i}"),
            60,
            Trigger::AfterDeath(2),
        );
    }
    for i in 0..k {
        sc.at(0, &format!("d{i}"), Action::Open);
    }
    sc
}

/// The anonymity world with donor `d0` funding its deposit directly.
pub fn careless_funding_scenario(k: usize, seed: u64) -> Scenario {
    let mut sc = anonymity_scenario(k, seed);
    sc.name = "careless-funding".into();
    if let Some(super::scenario::Behavior::Donor(d)) = sc.actor_mut("d0").map(|a| &mut a.behavior) {
        d.careless_funding = true;
    }
    if let Some(a) = sc.actor_mut("d0") {
        a.initial_balance = 1_000;
    }
    sc
}

/// Short description of how the donor's latest instance ended.
pub fn outcome_label(outcome: &RunOutcome, donor: &str) -> String {
    let Some(id) = outcome.latest_instance(donor) else {
        return "never opened".into();
    };
    let inst = outcome.engine.instance(id).expect("runner instances exist");
    let mut label = match (inst.phase, inst.abort_reason) {
        (Phase::Aborted, Some(AbortReason::DonorAlive)) => {
            let by_attacker = outcome
                .attacker_moves
                .iter()
                .any(|(_, block, i)| *i == id && Some(*block) == inst.liveness_move_block);
            if by_attacker {
                "Aborted by attacker move"
            } else {
                "Aborted by donor move"
            }
            .to_string()
        }
        (Phase::Aborted, Some(reason)) => format!("Aborted ({})", reason.name()),
        (phase, _) => phase.name().to_string(),
    };
    if outcome
        .engine
        .incentives()
        .payouts()
        .sum(id, PayoutKind::AnteForfeit)
        > 0
    {
        label.push_str(", antes forfeited");
    }
    if !outcome.sweeps.is_empty() {
        label.push_str(", deposit swept");
    }
    label
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttackCase {
    pub name: &'static str,
    pub expected: &'static str,
    pub observed: String,
}

impl AttackCase {
    pub fn matched(&self) -> bool {
        self.expected == self.observed
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackSelection {
    KeyTransfer,
    Whale,
    All,
}

pub fn attack_catalog(which: AttackSelection, seed: u64) -> Result<Vec<AttackCase>, RunError> {
    let key_transfer = [
        (
            "key-transfer, deliberation 10",
            KeyTransferParams {
                seed,
                ..KeyTransferParams::default()
            },
            "Aborted by attacker move, antes forfeited, deposit swept",
        ),
        (
            "key-transfer, move after deadline",
            KeyTransferParams {
                seed,
                move_after: 12,
                ..KeyTransferParams::default()
            },
            "Acknowledged",
        ),
        (
            "key-transfer, deliberation 0",
            KeyTransferParams {
                seed,
                deliberation_time: 0,
                ..KeyTransferParams::default()
            },
            "Acknowledged",
        ),
    ];
    let whale = [
        (
            "whale, x=2",
            WhaleParams {
                seed,
                ..WhaleParams::default()
            },
            "Active",
        ),
        (
            "whale, x=1 span=0, donor alive",
            WhaleParams {
                seed,
                min_distinct_witnesses: 1,
                ..WhaleParams::default()
            },
            "Aborted by donor move, antes forfeited",
        ),
        (
            "whale, x=1, donor unreachable",
            WhaleParams {
                seed,
                min_distinct_witnesses: 1,
                donor_responsive: false,
                ..WhaleParams::default()
            },
            "Acknowledged",
        ),
    ];
    let mut cases = Vec::new();
    if which != AttackSelection::Whale {
        for (name, p, expected) in key_transfer {
            let outcome = run(&key_transfer_attack_scenario(p))?;
            cases.push(AttackCase {
                name,
                expected,
                observed: outcome_label(&outcome, "alice"),
            });
        }
    }
    if which != AttackSelection::KeyTransfer {
        for (name, p, expected) in whale {
            let outcome = run(&whale_attack_scenario(p))?;
            cases.push(AttackCase {
                name,
                expected,
                observed: outcome_label(&outcome, "alice"),
            });
        }
    }
    Ok(cases)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnonymityMode {
    /// State one block before the first acknowledgment.
    PreAcknowledgment,
    /// State at the end of the run.
    PostAcknowledgment,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AnonymityResult {
    pub donors: usize,
    pub runs: u64,
    pub correct: u64,
    pub total: u64,
}

impl AnonymityResult {
    pub fn rate(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }

    pub fn chance(&self) -> f64 {
        1.0 / self.donors.max(1) as f64
    }

    /// With a single donor any guess is trivially right.
    pub fn vacuous(&self) -> bool {
        self.donors <= 1
    }

    pub fn within_tolerance(&self) -> bool {
        self.rate() <= self.chance() + 0.1
    }
}

/// Cutoff block for the analyzer in the given mode.
pub fn analysis_cutoff(outcome: &RunOutcome, mode: AnonymityMode) -> BlockHeight {
    let end = outcome.engine.height();
    match mode {
        AnonymityMode::PostAcknowledgment => end,
        AnonymityMode::PreAcknowledgment => outcome
            .first_ack_block()
            .map_or(end, |b| BlockHeight(b.0.saturating_sub(1))),
    }
}

/// `(correct, total)` guesses for one finished run.
pub fn analyze(outcome: &RunOutcome, mode: AnonymityMode) -> (u64, u64) {
    let view = outcome.public_view(analysis_cutoff(outcome, mode));
    score(&linkage_analyzer(&view), &outcome.ground_truth)
}

/// Runs `runs` seeds of the `k`-donor world across worker threads.
pub fn measure_anonymity(
    k: usize,
    runs: u64,
    base_seed: u64,
    mode: AnonymityMode,
) -> Result<AnonymityResult, RunError> {
    let workers = thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(runs.max(1) as usize) as u64;
    let partials: Vec<Result<(u64, u64), RunError>> = thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                s.spawn(move || {
                    let (mut correct, mut total) = (0, 0);
                    for i in (w..runs).step_by(workers as usize) {
                        let outcome = run(&anonymity_scenario(k, base_seed.wrapping_add(i)))?;
                        let (c, t) = analyze(&outcome, mode);
                        correct += c;
                        total += t;
                    }
                    Ok((correct, total))
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker panicked"))
            .collect()
    });
    let mut result = AnonymityResult {
        donors: k,
        runs,
        correct: 0,
        total: 0,
    };
    for p in partials {
        let (c, t) = p?;
        result.correct += c;
        result.total += t;
    }
    Ok(result)
}

impl RunOutcome {
    /// Appends the analyzer's pre- and post-acknowledgment scores to the
    /// trace so the report can show them.
    pub fn record_analysis(&mut self) {
        for (label, mode) in [
            ("pre", AnonymityMode::PreAcknowledgment),
            ("post", AnonymityMode::PostAcknowledgment),
        ] {
            let (correct, total) = analyze(self, mode);
            let detail = format!("{label} {correct} {total}");
            self.trace.push(TraceRecord::text(
                "ANALYSIS",
                self.engine.height(),
                None,
                &detail,
            ));
        }
    }
}

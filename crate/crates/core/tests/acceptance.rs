//! One line per acceptance criterion. Runs without the libtest harness so
//! the lines are always printed; exits nonzero if any criterion fails.

mod support;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tfcp::crypto::{reconstruct_secret, split_secret, Share};
use tfcp::engine::{AbortReason, EventKind, Phase};
use tfcp::harness::{
    key_transfer_attack_scenario, liveness_scenario, measure_anonymity, run, supersession_scenario,
    whale_attack_scenario, AnonymityMode, KeyTransferParams, RunOutcome, WhaleParams,
};
use tfcp::incentives::PayoutKind;
use tfcp::ledger::AccountId;

use support::{bundled, circulating, expected_supply, payout_identities, suite};

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn scheme_conformance() -> Verdict {
    let sc = bundled("happy-path.tfcp");
    let start = Instant::now();
    let outcome = run(&sc).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    check(outcome.trace.shows_full_scheme(), || {
        "steps 1-8 not all present in order".into()
    })?;
    let acks = outcome
        .trace
        .events()
        .iter()
        .filter(|r| r.kind == "ACK")
        .count();
    check(acks == 1, || format!("{acks} acknowledgments"))?;
    let last_step = outcome
        .trace
        .events()
        .iter()
        .rev()
        .find_map(|r| r.scheme_step());
    check(last_step == Some(8), || {
        format!("trace ends at step {last_step:?}")
    })?;
    check(elapsed < Duration::from_secs(1), || {
        format!("took {elapsed:?}")
    })?;
    Ok(format!(
        "8 steps in order, 1 acknowledgment, {} ms",
        elapsed.as_millis()
    ))
}

fn liveness_abort() -> Verdict {
    let (mut aborted, mut acked) = (0, 0);
    for seed in 0..100u64 {
        // deliberation window is 10 blocks; strictly inside means 1..=9
        let offset = ChaCha8Rng::seed_from_u64(seed).random_range(1..10);
        let outcome = run(&liveness_scenario(seed, offset)).map_err(|e| e.to_string())?;
        let inst = outcome
            .engine
            .instance(outcome.latest_instance("alice").unwrap())
            .unwrap();
        let (start, deadline) = (
            inst.deliberation_started.unwrap(),
            inst.deliberation_deadline.unwrap(),
        );
        let moved = inst
            .liveness_move_block
            .ok_or(format!("seed {seed}: no move recorded"))?;
        check(start < moved && moved < deadline, || {
            format!("seed {seed}: move at {moved} outside ({start}, {deadline})")
        })?;
        if inst.phase == Phase::Aborted && inst.abort_reason == Some(AbortReason::DonorAlive) {
            aborted += 1;
        }
        acked += outcome.engine.acknowledgments().len();
    }
    check(aborted == 100 && acked == 0, || {
        format!("{aborted}/100 aborted, {acked} acknowledged")
    })?;
    Ok("100/100 Aborted, 0 Acknowledged".into())
}

// Independent GF(2^8) arithmetic: shift-and-add multiplication modulo the
// AES polynomial, inversion by exhaustive search.
fn gmul(mut a: u8, mut b: u8) -> u8 {
    let mut p = 0u8;
    while b != 0 {
        if b & 1 != 0 {
            p ^= a;
        }
        let carry = a & 0x80 != 0;
        a <<= 1;
        if carry {
            a ^= 0x1b;
        }
        b >>= 1;
    }
    p
}

fn ginv(a: u8) -> u8 {
    (1..=255u8)
        .find(|&b| gmul(a, b) == 1)
        .expect("nonzero element")
}

/// Value at `x` of the unique polynomial of degree < points.len() through
/// `points`.
fn lagrange_at(points: &[(u8, u8)], x: u8) -> u8 {
    let mut acc = 0u8;
    for (j, &(xj, yj)) in points.iter().enumerate() {
        let mut term = yj;
        for (k, &(xk, _)) in points.iter().enumerate() {
            if k != j {
                term = gmul(term, gmul(x ^ xk, ginv(xj ^ xk)));
            }
        }
        acc ^= term;
    }
    acc
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    (0u32..1 << n)
        .filter(|m| m.count_ones() as usize == k)
        .map(|m| (0..n).filter(|i| m & (1 << i) != 0).collect())
        .collect()
}

fn sharing_oracle() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let (mut reconstructions, mut candidates) = (0u64, 0u64);
    for m in 1..=4usize {
        for t in 1..=m {
            for _ in 0..50 {
                let len = rng.random_range(1..=32);
                let secret: Vec<u8> = (0..len).map(|_| rng.random()).collect();
                let shares = split_secret(&secret, t, m, &mut rng).map_err(|e| e.to_string())?;
                for subset in subsets(m, t) {
                    let picked: Vec<Share> = subset.iter().map(|&i| shares[i].clone()).collect();
                    let got = reconstruct_secret(&picked, t).map_err(|e| e.to_string())?;
                    let oracle: Vec<u8> = (0..len)
                        .map(|b| {
                            let pts: Vec<(u8, u8)> =
                                picked.iter().map(|s| (s.index(), s.value()[b])).collect();
                            lagrange_at(&pts, 0)
                        })
                        .collect();
                    check(got == secret && oracle == secret, || {
                        format!("t={t} m={m} subset {subset:?}")
                    })?;
                    reconstructions += 1;
                }
            }
            if t < 2 {
                continue;
            }
            // t-1 shares of a one-byte secret: every candidate secret must be
            // completable to a valid t-set.
            let secret = [rng.random::<u8>()];
            let shares = split_secret(&secret, t, m, &mut rng).map_err(|e| e.to_string())?;
            for subset in subsets(m, t - 1) {
                let held: Vec<Share> = subset.iter().map(|&i| shares[i].clone()).collect();
                let extra = (1..=255u8)
                    .find(|x| held.iter().all(|s| s.index() != *x))
                    .unwrap();
                for candidate in 0..=255u8 {
                    let mut pts: Vec<(u8, u8)> = vec![(0, candidate)];
                    pts.extend(held.iter().map(|s| (s.index(), s.value()[0])));
                    let completing = Share::new(extra, vec![lagrange_at(&pts, extra)]).unwrap();
                    let mut set = held.clone();
                    set.push(completing);
                    let got = reconstruct_secret(&set, t).map_err(|e| e.to_string())?;
                    check(got == [candidate], || {
                        format!("t={t} m={m}: candidate {candidate} not reachable")
                    })?;
                    candidates += 1;
                }
            }
        }
    }
    let elapsed = start.elapsed();
    check(elapsed < Duration::from_secs(10), || {
        format!("took {elapsed:?}")
    })?;
    Ok(format!(
        "{reconstructions} subset reconstructions, {candidates} candidate completions, {} ms",
        elapsed.as_millis()
    ))
}

fn anonymity() -> Verdict {
    let pre = measure_anonymity(5, 100, 1_000, AnonymityMode::PreAcknowledgment)
        .map_err(|e| e.to_string())?;
    let post = measure_anonymity(5, 100, 1_000, AnonymityMode::PostAcknowledgment)
        .map_err(|e| e.to_string())?;
    check(pre.total == 500, || format!("{} guesses", pre.total))?;
    check(pre.correct * 10 <= pre.total * 3, || {
        format!("pre rate {:.3} > 0.30", pre.rate())
    })?;
    check(post.correct == post.total && post.total == 500, || {
        format!("post {}/{}", post.correct, post.total)
    })?;
    Ok(format!(
        "pre {:.3} ({}/{}), post {}/{}",
        pre.rate(),
        pre.correct,
        pre.total,
        post.correct,
        post.total
    ))
}

fn reached(outcome: &RunOutcome, phase: Phase) -> bool {
    outcome.engine.transitions().iter().any(|t| t.to == phase)
}

fn attack_catalog() -> Verdict {
    let bob_moves = run(&key_transfer_attack_scenario(KeyTransferParams::default()))
        .map_err(|e| e.to_string())?;
    let inst = bob_moves
        .engine
        .instance(bob_moves.latest_instance("alice").unwrap())
        .unwrap();
    let by_bob = bob_moves
        .attacker_moves
        .iter()
        .any(|(who, b, _)| who == "bob" && Some(*b) == inst.liveness_move_block);
    let sd_balance = bob_moves
        .engine
        .ledger()
        .balance_of(&inst.security_deposit)
        .unwrap();
    let bob = bob_moves.account("bob");
    let bob_gain = bob_moves.engine.ledger().balance_of(&bob).unwrap();
    let case1 = inst.phase == Phase::Aborted && by_bob && sd_balance == 0 && bob_gain > 0;

    let instant = run(&key_transfer_attack_scenario(KeyTransferParams {
        deliberation_time: 0,
        ..KeyTransferParams::default()
    }))
    .map_err(|e| e.to_string())?;
    let case2 = instant.final_phase("alice") == Some(Phase::Acknowledged)
        && !reached(&instant, Phase::Aborted);

    let split = run(&whale_attack_scenario(WhaleParams::default())).map_err(|e| e.to_string())?;
    let case3 =
        !reached(&split, Phase::Deliberating) && split.final_phase("alice") == Some(Phase::Active);

    let single = run(&whale_attack_scenario(WhaleParams {
        min_distinct_witnesses: 1,
        ..WhaleParams::default()
    }))
    .map_err(|e| e.to_string())?;
    let case4 = reached(&single, Phase::Deliberating);

    let outcomes = [case1, case2, case3, case4];
    let matched = outcomes.iter().filter(|c| **c).count();
    check(matched == 4, || format!("outcomes {outcomes:?}"))?;
    Ok(
        "key-transfer succeeds at 10, impossible at 0; whale blocked at x=2, triggers at x=1"
            .into(),
    )
}

fn conservation() -> Verdict {
    let suite = suite();
    for sc in &suite {
        let outcome = run(sc).map_err(|e| format!("{}: {e}", sc.name))?;
        let expected = expected_supply(sc);
        let have = circulating(&outcome);
        check(have == expected, || {
            format!("{}: supply {have} != {expected}", sc.name)
        })?;
        payout_identities(&outcome).map_err(|e| format!("{}: {e}", sc.name))?;
    }
    Ok(format!(
        "{} scenarios, supply and payout identities exact",
        suite.len()
    ))
}

fn determinism() -> Verdict {
    let dir = std::env::temp_dir().join(format!("tfcp-determinism-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let suite = suite();
    for (i, sc) in suite.iter().enumerate() {
        let mut files = Vec::new();
        for pass in 0..2 {
            let path = dir.join(format!("{i}-{pass}.trace"));
            let outcome = run(sc).map_err(|e| e.to_string())?;
            std::fs::write(&path, outcome.trace.to_text()).map_err(|e| e.to_string())?;
            files.push(std::fs::read(&path).map_err(|e| e.to_string())?);
        }
        check(files[0] == files[1], || {
            format!("{}: traces differ", sc.name)
        })?;
    }
    let _ = std::fs::remove_dir_all(&dir);
    Ok(format!(
        "{} scenarios byte-identical across two runs",
        suite.len()
    ))
}

fn supersession() -> Verdict {
    let outcome = run(&supersession_scenario(5)).map_err(|e| e.to_string())?;
    let ids = &outcome.instances["alice"];
    check(ids.len() == 3, || format!("{} instances", ids.len()))?;
    let latest = ids[2];
    for &old in &ids[..2] {
        let inst = outcome.engine.instance(old).unwrap();
        check(inst.phase == Phase::Superseded, || {
            format!("earlier instance ended {:?}", inst.phase)
        })?;
        let kinds: Vec<PayoutKind> = outcome
            .engine
            .incentives()
            .payouts()
            .for_instance(old)
            .map(|e| e.kind)
            .collect();
        check(
            kinds
                .iter()
                .all(|k| *k == PayoutKind::RegistrarFeeImmediate),
            || format!("earlier instance paid {kinds:?}"),
        )?;
        let processed = outcome.engine.events().iter().any(|e| {
            matches!(
                e.kind,
                EventKind::Ante | EventKind::RevealOpen | EventKind::Reveal | EventKind::Ack
            ) && e.detail.starts_with(&old.to_hex())
        });
        check(!processed, || {
            "events processed for a superseded instance".into()
        })?;
    }
    let last = outcome.engine.instance(latest).unwrap();
    check(last.phase == Phase::Acknowledged, || {
        format!("latest ended {:?}", last.phase)
    })?;
    let paid = |k| outcome.engine.incentives().payouts().sum(latest, k);
    check(
        paid(PayoutKind::RegistrarFeeFinal) > 0 && paid(PayoutKind::WitnessFee) > 0,
        || "latest instance unpaid".into(),
    )?;
    let donor: AccountId = outcome.account("alice");
    check(
        outcome
            .engine
            .acknowledgments()
            .iter()
            .filter(|a| a.donor == donor)
            .count()
            == 1,
        || "ack count".into(),
    )?;
    Ok("2 Superseded with immediate fees only, latest Acknowledged and settled".into())
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("scheme conformance", scheme_conformance),
        ("liveness abort", liveness_abort),
        ("secret-sharing oracle", sharing_oracle),
        ("anonymity at chance level", anonymity),
        ("attack catalog", attack_catalog),
        ("conservation", conservation),
        ("determinism", determinism),
        ("supersession", supersession),
    ];
    let mut failed = Vec::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let verdict = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        match verdict {
            Ok(detail) => println!("criterion {} {name}: PASS ({detail})", i + 1),
            Err(why) => {
                println!("criterion {} {name}: FAIL ({why})", i + 1);
                failed.push(i + 1);
            }
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}

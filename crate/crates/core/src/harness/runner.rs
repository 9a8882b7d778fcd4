use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::codec::Wire;
use crate::crypto::{hash_parts, KeyPair, Share};
use crate::documents::{validate_pre_wills, Announcement, CivilIdentity};
use crate::engine::{
    Engine, EngineConfig, EngineError, InstanceId, InstanceParams, InvariantViolation, Lookup,
    Phase,
};
use crate::harness::analyzer::PublicView;
use crate::incentives::BailStatus;
use crate::ledger::{AccountId, BlockHeight, Coins, DocumentFilter, DocumentKind, LedgerConfig};
use crate::report::RunReport;
use crate::trace::Trace;

use super::scenario::{
    Action, ActorSpec, Behavior, ConfigError, DonorBehavior, RevealMode, Scenario, ScheduleEntry,
    Trigger,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("genesis failed: {0}")]
    Genesis(EngineError),
    #[error("invariant {} violated at block {block}: {violation}", violation.name())]
    Invariant {
        block: u64,
        violation: InvariantViolation,
    },
}

/// An actor action the engine refused. Scripts keep going after one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejection {
    pub block: u64,
    pub actor: String,
    pub action: &'static str,
    pub reason: String,
}

pub struct RunOutcome {
    pub scenario: String,
    pub seed: u64,
    pub engine: Engine,
    pub trace: Trace,
    pub accounts: BTreeMap<String, AccountId>,
    /// Instances per donor, in opening order.
    pub instances: BTreeMap<String, Vec<InstanceId>>,
    /// `(security deposit, donor)` for every instance opened.
    pub ground_truth: Vec<(AccountId, AccountId)>,
    pub attacker_moves: Vec<(String, BlockHeight, InstanceId)>,
    pub sweeps: Vec<(String, Coins)>,
    pub rejected: Vec<Rejection>,
    /// Accounts an observer would recognise as infrastructure.
    pub services: BTreeSet<AccountId>,
}

impl RunOutcome {
    pub fn account(&self, name: &str) -> AccountId {
        self.accounts[name]
    }

    pub fn latest_instance(&self, donor: &str) -> Option<InstanceId> {
        self.instances.get(donor)?.last().copied()
    }

    pub fn final_phase(&self, donor: &str) -> Option<Phase> {
        Some(self.engine.instance(self.latest_instance(donor)?)?.phase)
    }

    pub fn first_ack_block(&self) -> Option<BlockHeight> {
        self.engine.acknowledgments().iter().map(|a| a.block).min()
    }

    pub fn public_view(&self, at: BlockHeight) -> PublicView<'_> {
        PublicView::new(self.engine.ledger(), at, self.services.clone())
    }

    pub fn report(&self) -> RunReport {
        RunReport::from_trace(&self.trace).expect("runner traces carry a header")
    }
}

struct Actor {
    spec: ActorSpec,
    id: AccountId,
    keys: KeyPair,
    death: Option<u64>,
    opens: u64,
    /// `(instance, security deposit keys, opening block)`.
    opened: Vec<(InstanceId, KeyPair, u64)>,
    fired: bool,
    staked: bool,
    done: BTreeSet<InstanceId>,
    swept: BTreeSet<InstanceId>,
}

fn derive_keys(parts: &[&[u8]]) -> KeyPair {
    KeyPair::from_seed(*hash_parts(parts).as_bytes())
}

struct Runner<'a> {
    sc: &'a Scenario,
    engine: Engine,
    actors: Vec<Actor>,
    by_name: BTreeMap<String, usize>,
    faucet: (AccountId, KeyPair),
    finalize_tried: BTreeSet<InstanceId>,
    ground_truth: Vec<(AccountId, AccountId)>,
    attacker_moves: Vec<(String, BlockHeight, InstanceId)>,
    sweeps: Vec<(String, Coins)>,
    rejected: Vec<Rejection>,
}

/// Executes a scenario block by block. Deterministic in `scenario.seed`.
pub fn run(scenario: &Scenario) -> Result<RunOutcome, RunError> {
    scenario.validate()?;
    let mut r = Runner::genesis(scenario).map_err(RunError::Genesis)?;
    let ledger_mark = r.engine.ledger().history().len();
    let event_mark = r.engine.events().len();

    if !scenario.schedule.is_empty() {
        r.drive()?;
    }

    let mut trace = Trace::with_header(&scenario.name, scenario.seed);
    trace.append_merged(
        &r.engine.ledger().history()[ledger_mark..],
        ledger_mark,
        &r.engine.events()[event_mark..],
    );
    let mut instances: BTreeMap<String, Vec<InstanceId>> = BTreeMap::new();
    for a in &r.actors {
        if matches!(a.spec.behavior, Behavior::Donor(_)) {
            instances.insert(a.spec.name.clone(), a.opened.iter().map(|o| o.0).collect());
        }
    }
    Ok(RunOutcome {
        scenario: scenario.name.clone(),
        seed: scenario.seed,
        accounts: r
            .actors
            .iter()
            .map(|a| (a.spec.name.clone(), a.id))
            .collect(),
        instances,
        ground_truth: r.ground_truth,
        attacker_moves: r.attacker_moves,
        sweeps: r.sweeps,
        rejected: r.rejected,
        services: BTreeSet::from([r.faucet.0]),
        engine: r.engine,
        trace,
    })
}

impl<'a> Runner<'a> {
    fn genesis(sc: &'a Scenario) -> Result<Self, EngineError> {
        let mut engine = Engine::new(EngineConfig {
            ledger: LedgerConfig {
                publication_fee: sc.publication_fee,
            },
            network: sc.network,
            seed: sc.seed,
        });
        let seed = sc.seed.to_be_bytes();
        let mut actors = Vec::with_capacity(sc.actors.len());
        let mut by_name = BTreeMap::new();
        for spec in &sc.actors {
            let keys = derive_keys(&[b"tfcp/actor", &seed, spec.name.as_bytes()]);
            let id = engine.create_account(&keys.public_key, spec.initial_balance)?;
            let death = match &spec.behavior {
                Behavior::Donor(d) => d.death,
                _ => None,
            };
            by_name.insert(spec.name.clone(), actors.len());
            actors.push(Actor {
                spec: spec.clone(),
                id,
                keys,
                death,
                opens: 0,
                opened: Vec::new(),
                fired: false,
                staked: false,
                done: BTreeSet::new(),
                swept: BTreeSet::new(),
            });
        }
        let faucet_funds: Coins = sc
            .schedule
            .iter()
            .filter(|e| e.action == Action::Open)
            .filter_map(|e| match &sc.actor(&e.actor)?.behavior {
                Behavior::Donor(d) if !d.careless_funding => Some(d.deposit),
                _ => None,
            })
            .sum();
        let faucet_keys = derive_keys(&[b"tfcp/faucet", &seed]);
        let faucet = engine.create_account(&faucet_keys.public_key, faucet_funds)?;
        Ok(Self {
            sc,
            engine,
            actors,
            by_name,
            faucet: (faucet, faucet_keys),
            finalize_tried: BTreeSet::new(),
            ground_truth: Vec::new(),
            attacker_moves: Vec::new(),
            sweeps: Vec::new(),
            rejected: Vec::new(),
        })
    }

    fn drive(&mut self) -> Result<(), RunError> {
        loop {
            let now = self.engine.height().0;
            let before = (
                self.engine.events().len(),
                self.engine.ledger().history().len(),
            );
            self.step(now);
            if before
                != (
                    self.engine.events().len(),
                    self.engine.ledger().history().len(),
                )
            {
                self.check(now)?;
            }
            if (now > self.horizon() && !self.busy()) || now >= self.sc.max_blocks {
                break;
            }
            self.advance()?;
        }
        self.wind_down()?;
        let now = self.engine.height().0;
        self.check(now)
    }

    fn advance(&mut self) -> Result<(), RunError> {
        let now = self.engine.height().0;
        if let Err(e) = self.engine.advance_blocks(1) {
            self.reject(now, "-", "advance", e);
        }
        Ok(())
    }

    fn check(&self, block: u64) -> Result<(), RunError> {
        self.engine
            .check_invariants()
            .map_err(|violation| RunError::Invariant { block, violation })
    }

    fn reject(&mut self, block: u64, actor: &str, action: &'static str, err: EngineError) {
        self.rejected.push(Rejection {
            block,
            actor: actor.to_string(),
            action,
            reason: err.to_string(),
        });
    }

    /// Last block at which something is already known to happen.
    fn horizon(&self) -> u64 {
        let mut h = self.sc.schedule.last().map_or(0, |e| e.block);
        for a in &self.actors {
            h = h.max(a.death.unwrap_or(0));
            if let Behavior::Witness(w) = &a.spec.behavior {
                if a.fired {
                    continue;
                }
                match w.trigger {
                    Trigger::At(b) => h = h.max(b),
                    Trigger::AfterDeath(d) => {
                        if let Some(death) = self.actors[self.by_name[&w.target]].death {
                            h = h.max(death + d);
                        }
                    }
                    Trigger::Manual => {}
                }
            }
        }
        h
    }

    fn busy(&self) -> bool {
        self.engine.instances().iter().any(|i| match i.phase {
            Phase::Deliberating => true,
            Phase::Acknowledged => !i.obligations_closed,
            Phase::Recruiting => i.accepted_registrars.len() >= i.threshold_t(),
            Phase::SharesDistributed => !self.finalize_tried.contains(&i.id),
            _ => false,
        })
    }

    fn step(&mut self, now: u64) {
        self.stake_bails(now);
        let due: Vec<ScheduleEntry> = self
            .sc
            .schedule
            .iter()
            .filter(|e| e.block == now)
            .cloned()
            .collect();
        for entry in &due {
            self.scheduled(now, entry);
        }
        self.accept_registrations(now);
        self.complete_setups(now);
        self.donor_reactions(now);
        self.witness_signals(now);
        self.reveals(now);
        self.key_transfer_attacks(now);
    }

    fn stake_bails(&mut self, now: u64) {
        for i in 0..self.actors.len() {
            let a = &self.actors[i];
            let Behavior::Registrar(r) = &a.spec.behavior else {
                continue;
            };
            if a.staked {
                continue;
            }
            let (bail, expiry, keys, name) = (
                r.bail,
                BlockHeight(r.bail_expiry),
                a.keys.clone(),
                a.spec.name.clone(),
            );
            self.actors[i].staked = true;
            if let Err(e) = self.engine.stake_bail(&keys, bail, expiry) {
                self.reject(now, &name, "stake", e);
            }
        }
    }

    fn scheduled(&mut self, now: u64, entry: &ScheduleEntry) {
        let i = self.by_name[&entry.actor];
        let name = entry.actor.clone();
        let result = match &entry.action {
            Action::Open => self.open(i, now),
            Action::Die => {
                self.actors[i].death = Some(now);
                Ok(())
            }
            Action::Move => {
                let a = &self.actors[i];
                let holder = match &a.spec.behavior {
                    Behavior::KeyTransfer(k) => self.by_name[&k.victim],
                    _ => i,
                };
                let (id, keys) = (self.actors[holder].id, self.actors[holder].keys.clone());
                let r = self.engine.submit_transfer(id, id, 0, &keys).map(|_| ());
                if holder != i && r.is_ok() {
                    self.note_attacker_move(i, holder, now);
                }
                r
            }
            Action::Ante(amount) => {
                let Behavior::Witness(w) = &self.actors[i].spec.behavior else {
                    return;
                };
                let target = w.target.clone();
                match self.locate(&target) {
                    Some(id) => {
                        let keys = self.actors[i].keys.clone();
                        self.engine.record_ante(id, &keys, *amount)
                    }
                    None => Err(EngineError::UnknownInstance),
                }
            }
            Action::Transfer { to, amount } => {
                let to = self.actors[self.by_name[to]].id;
                let (id, keys) = (self.actors[i].id, self.actors[i].keys.clone());
                self.engine
                    .submit_transfer(id, to, *amount, &keys)
                    .map(|_| ())
            }
        };
        if let Err(e) = result {
            self.reject(now, &name, entry.action.name(), e);
        }
    }

    fn note_attacker_move(&mut self, attacker: usize, victim: usize, now: u64) {
        let name = self.actors[attacker].spec.name.clone();
        if let Some((id, _, _)) = self.actors[victim].opened.last() {
            self.attacker_moves.push((name, BlockHeight(now), *id));
        }
    }

    fn open(&mut self, i: usize, now: u64) -> Result<(), EngineError> {
        let seed = self.sc.seed.to_be_bytes();
        let a = &self.actors[i];
        let Behavior::Donor(d) = &a.spec.behavior else {
            return Ok(());
        };
        let d: DonorBehavior = d.clone();
        let sd_keys = derive_keys(&[
            b"tfcp/sd",
            &seed,
            a.spec.name.as_bytes(),
            &a.opens.to_be_bytes(),
        ]);
        let (donor, donor_keys) = (a.id, a.keys.clone());
        self.actors[i].opens += 1;
        let sd = self.engine.create_account(&sd_keys.public_key, 0)?;
        if d.careless_funding {
            self.engine
                .submit_transfer(donor, sd, d.deposit, &donor_keys)?;
        } else {
            let (faucet, faucet_keys) = self.faucet.clone();
            self.engine
                .submit_transfer(faucet, sd, d.deposit, &faucet_keys)?;
        }
        let acceptable_registrars = d.registrars.as_ref().map(|names| {
            names
                .iter()
                .map(|n| self.actors[self.by_name[n]].id)
                .collect()
        });
        let params = InstanceParams {
            threshold_t: d.threshold_t,
            acceptable_registrars,
            registrar_fee: d.registrar_fee,
            civil_identity: CivilIdentity {
                name: d.civil_name.clone(),
                ..CivilIdentity::default()
            },
            witness_fees: d.witness_fees,
            deliberation_time: d.deliberation_time,
            threshold_amount: d.threshold_amount,
            min_distinct_witnesses: d.min_distinct_witnesses,
            min_signaling_span: d.min_signaling_span,
            heritage: d.heritage.clone().into_bytes(),
        };
        let id = self.engine.open_instance(&donor_keys, &sd_keys, params)?;
        self.actors[i].opened.push((id, sd_keys, now));
        self.ground_truth.push((sd, donor));
        Ok(())
    }

    /// Finds the instance a witness would target: the latest Announcement
    /// for the civil name, then the latest valid instance on that deposit.
    fn locate(&self, donor_name: &str) -> Option<InstanceId> {
        let Behavior::Donor(d) = &self.actors[self.by_name[donor_name]].spec.behavior else {
            return None;
        };
        let docs = self
            .engine
            .ledger()
            .documents_by(&DocumentFilter::kind(DocumentKind::Announcement));
        let sd = docs
            .iter()
            .rev()
            .filter_map(|doc| Announcement::decode(&doc.payload).ok())
            .find(|ann| ann.civil_identity.name == d.civil_name)?
            .security_deposit;
        self.engine
            .latest_valid_instance(Lookup::SecurityDeposit(sd))
    }

    fn accept_registrations(&mut self, now: u64) {
        let min_fee = self.sc.network.min_registrar_fee;
        let recruiting: Vec<(InstanceId, AccountId, BlockHeight)> = self
            .engine
            .instances()
            .iter()
            .filter(|i| i.phase == Phase::Recruiting)
            .map(|i| (i.id, i.security_deposit, i.pre_wills_block))
            .collect();
        for (id, sd, block) in recruiting {
            let filter = DocumentFilter::kind(DocumentKind::PreWills)
                .with_publisher(sd)
                .in_blocks(block.0..=block.0);
            let valid = self
                .engine
                .ledger()
                .documents_by(&filter)
                .last()
                .and_then(|doc| validate_pre_wills(doc, self.engine.ledger(), min_fee).ok())
                .is_some_and(|report| report.is_valid());
            if !valid {
                continue;
            }
            for k in 0..self.actors.len() {
                let a = &self.actors[k];
                let Behavior::Registrar(r) = &a.spec.behavior else {
                    continue;
                };
                let inst = self.engine.instance(id).expect("listed above");
                if !r.accept
                    || inst.phase != Phase::Recruiting
                    || !inst.pre_wills.accepts(&a.id)
                    || inst.accepted_registrars.contains(&a.id)
                    || !self
                        .engine
                        .incentives()
                        .has_active_bail(&a.id, BlockHeight(now))
                {
                    continue;
                }
                let (keys, name) = (a.keys.clone(), a.spec.name.clone());
                if let Err(e) = self.engine.registrar_accept(id, &keys) {
                    self.reject(now, &name, "accept", e);
                }
            }
        }
    }

    fn complete_setups(&mut self, now: u64) {
        for i in 0..self.actors.len() {
            let Some((id, sd_keys, opened_at)) = self.actors[i].opened.last().cloned() else {
                continue;
            };
            let (keys, name) = (
                self.actors[i].keys.clone(),
                self.actors[i].spec.name.clone(),
            );
            let inst = self.engine.instance(id).expect("opened instances exist");
            if inst.phase == Phase::Recruiting
                && opened_at < now
                && inst.accepted_registrars.len() >= inst.threshold_t()
            {
                if let Err(e) = self.engine.distribute_shares(id, &keys) {
                    self.reject(now, &name, "distribute", e);
                }
            }
            let phase = self.engine.instance(id).map(|i| i.phase);
            if phase == Some(Phase::SharesDistributed) && self.finalize_tried.insert(id) {
                if let Err(e) = self.engine.finalize_setup(id, &sd_keys) {
                    self.reject(now, &name, "finalize", e);
                }
            }
        }
    }

    fn donor_reactions(&mut self, now: u64) {
        for i in 0..self.actors.len() {
            let a = &self.actors[i];
            let Behavior::Donor(d) = &a.spec.behavior else {
                continue;
            };
            let alive = a.death.is_none_or(|death| now < death);
            if !d.responsive || !alive {
                continue;
            }
            let react = d.react_after;
            let pending: Vec<InstanceId> = a
                .opened
                .iter()
                .map(|o| o.0)
                .filter(|id| !a.done.contains(id))
                .filter(|id| {
                    let inst = self.engine.instance(*id).expect("opened instances exist");
                    inst.phase == Phase::Deliberating
                        && inst
                            .deliberation_started
                            .is_some_and(|s| now >= s.0 + react)
                })
                .collect();
            for id in pending {
                self.actors[i].done.insert(id);
                let inst = self.engine.instance(id).expect("opened instances exist");
                if inst.phase != Phase::Deliberating
                    || inst.deliberation_deadline.is_some_and(|d| now >= d.0)
                {
                    continue;
                }
                let (keys, name) = (
                    self.actors[i].keys.clone(),
                    self.actors[i].spec.name.clone(),
                );
                if let Err(e) = self.engine.donor_liveness_move(id, &keys) {
                    self.reject(now, &name, "move", e);
                }
            }
        }
    }

    fn witness_signals(&mut self, now: u64) {
        for i in 0..self.actors.len() {
            let a = &self.actors[i];
            let Behavior::Witness(w) = &a.spec.behavior else {
                continue;
            };
            if a.fired {
                continue;
            }
            let due = match w.trigger {
                Trigger::At(b) => now >= b,
                Trigger::AfterDeath(d) => self.actors[self.by_name[&w.target]]
                    .death
                    .is_some_and(|death| now >= death + d),
                Trigger::Manual => false,
            };
            if !due {
                continue;
            }
            let (target, amount, keys, name) = (
                w.target.clone(),
                w.ante,
                a.keys.clone(),
                a.spec.name.clone(),
            );
            self.actors[i].fired = true;
            let result = match self.locate(&target) {
                Some(id) => self.engine.record_ante(id, &keys, amount),
                None => Err(EngineError::UnknownInstance),
            };
            if let Err(e) = result {
                self.reject(now, &name, "ante", e);
            }
        }
    }

    fn reveals(&mut self, now: u64) {
        let open: Vec<InstanceId> = self
            .engine
            .instances()
            .iter()
            .filter(|i| i.reveal_open && !i.obligations_closed)
            .map(|i| i.id)
            .collect();
        for id in open {
            for k in 0..self.actors.len() {
                let a = &self.actors[k];
                let Behavior::Registrar(r) = &a.spec.behavior else {
                    continue;
                };
                let inst = self.engine.instance(id).expect("listed above");
                if inst.obligations_closed
                    || inst.revealed.contains_key(&a.id)
                    || inst.violators.contains(&a.id)
                    || inst
                        .deliberation_deadline
                        .is_none_or(|d| now < d.0 + r.reveal_delay)
                {
                    continue;
                }
                let Some(share) = inst.shares_delivered.get(&a.id).cloned() else {
                    continue;
                };
                let share = match r.reveal {
                    RevealMode::Silent => continue,
                    RevealMode::Honest => share,
                    RevealMode::Corrupt => {
                        let mut value = share.value().to_vec();
                        value[0] ^= 0x5a;
                        Share::new(share.index(), value).expect("same shape as a valid share")
                    }
                };
                let (keys, name) = (a.keys.clone(), a.spec.name.clone());
                if let Err(e) = self.engine.submit_share_reveal(id, &keys, share) {
                    self.reject(now, &name, "reveal", e);
                }
            }
        }
    }

    fn key_transfer_attacks(&mut self, now: u64) {
        for i in 0..self.actors.len() {
            let Behavior::KeyTransfer(k) = &self.actors[i].spec.behavior else {
                continue;
            };
            let (move_after, sweep) = (k.move_after, k.sweep);
            let v = self.by_name[&k.victim];
            let victim_id = self.actors[v].id;
            let victim_keys = self.actors[v].keys.clone();
            let name = self.actors[i].spec.name.clone();
            for (id, sd_keys, _) in self.actors[v].opened.clone() {
                let Some(started) = self
                    .engine
                    .instance(id)
                    .and_then(|x| x.deliberation_started)
                else {
                    continue;
                };
                if !self.actors[i].done.contains(&id) && now >= started.0 + move_after {
                    self.actors[i].done.insert(id);
                    match self
                        .engine
                        .submit_transfer(victim_id, victim_id, 0, &victim_keys)
                    {
                        Ok(_) => self
                            .attacker_moves
                            .push((name.clone(), BlockHeight(now), id)),
                        Err(e) => self.reject(now, &name, "move", e),
                    }
                }
                let inst = self.engine.instance(id).expect("opened instances exist");
                if sweep && inst.phase == Phase::Aborted && self.actors[i].swept.insert(id) {
                    let sd = inst.security_deposit;
                    let balance = self.engine.ledger().balance_of(&sd).unwrap_or(0);
                    let me = self.actors[i].id;
                    if balance > 0 {
                        match self.engine.submit_transfer(sd, me, balance, &sd_keys) {
                            Ok(_) => self.sweeps.push((name.clone(), balance)),
                            Err(e) => self.reject(now, &name, "sweep", e),
                        }
                    }
                }
            }
        }
    }

    /// Runs past every bail expiry and releases what is still staked.
    fn wind_down(&mut self) -> Result<(), RunError> {
        let last_expiry = self
            .engine
            .incentives()
            .bails()
            .map(|b| b.expiry.0)
            .max()
            .unwrap_or(0);
        let now = self.engine.height().0;
        if last_expiry > now {
            if let Err(e) = self.engine.advance_blocks(last_expiry - now) {
                self.reject(now, "-", "advance", e);
            }
        }
        let now = self.engine.height().0;
        for i in 0..self.actors.len() {
            let a = &self.actors[i];
            if !matches!(a.spec.behavior, Behavior::Registrar(_)) {
                continue;
            }
            let staked = self
                .engine
                .incentives()
                .bail(&a.id)
                .is_some_and(|b| b.status == BailStatus::Staked);
            if !staked {
                continue;
            }
            let (id, name) = (a.id, a.spec.name.clone());
            if let Err(e) = self.engine.release_bail(&id) {
                self.reject(now, &name, "release", e);
            }
        }
        Ok(())
    }
}

//! Per-donor protocol state machine driven over the simulated ledger.
//!
//! The engine owns the ledger and the incentive book. Every public operation
//! ends by scanning new ledger transfers for donor activity, so a liveness
//! move is noticed whichever path submitted it.

mod instance;

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use instance::*;

use crate::codec::Wire;
use crate::crypto::{
    decrypt, hash, hash_parts, reconstruct_secret, split_secret, CryptoError, KeyPair, PublicKey,
    Share, SharedKey,
};
use crate::documents::{
    self, build_announcement, build_pre_wills, strip_to_wills, Announcement, DocumentError,
    PublicWills, RegistrarAcceptance, Wills, DONOR_CONTEXT,
};
use crate::incentives::{
    BailCommitment, BailStatus, IncentiveError, Incentives, NetworkParams, PayoutEntry, PayoutKind,
    Violation,
};
use crate::ledger::{
    AccountId, BlockHeight, Coins, DocumentFilter, DocumentKind, Ledger, LedgerConfig, LedgerError,
    LedgerEvent, PublishedDocument, Transfer,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Incentive(#[from] IncentiveError),
    #[error(transparent)]
    Document(#[from] DocumentError),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error("no such instance")]
    UnknownInstance,
    #[error("operation not allowed in phase {0}")]
    WrongPhase(Phase),
    #[error("registrar {0:?} has no active bail")]
    NoBail(AccountId),
    #[error("registrar {0:?} is not on the acceptable list")]
    NotOnList(AccountId),
    #[error("registrar {0:?} already accepted")]
    AlreadyAccepted(AccountId),
    #[error("keys do not belong to this instance's donor")]
    NotDonor,
    #[error("keys do not belong to this instance's security deposit")]
    NotSecurityDeposit,
    #[error("{have} acceptances, threshold needs {need}")]
    InsufficientAcceptances { have: usize, need: usize },
    #[error("ante amount must be positive")]
    ZeroAnte,
    #[error("deliberation deadline {deadline} has passed (now {now})")]
    DeadlinePassed {
        deadline: BlockHeight,
        now: BlockHeight,
    },
    #[error("reveal round is not open")]
    RevealNotOpen,
    #[error("{0:?} holds no share of this instance")]
    NotARegistrar(AccountId),
    #[error("{0:?} already revealed")]
    AlreadyRevealed(AccountId),
    #[error("revealed share does not match the delivered share")]
    ShareMismatch,
    #[error("a prior instance of this donor is in its reveal round")]
    InstanceInReveal,
    #[error("donor {0:?} has already been acknowledged dead")]
    DonorAcknowledged(AccountId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EventKind {
    Select,
    Phase,
    Shares,
    Ante,
    RevealOpen,
    Reveal,
    Ack,
    Abort,
    Supersede,
    Payout,
    Violation,
}

impl EventKind {
    pub const ALL: [EventKind; 11] = [
        EventKind::Select,
        EventKind::Phase,
        EventKind::Shares,
        EventKind::Ante,
        EventKind::RevealOpen,
        EventKind::Reveal,
        EventKind::Ack,
        EventKind::Abort,
        EventKind::Supersede,
        EventKind::Payout,
        EventKind::Violation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EventKind::Select => "SELECT",
            EventKind::Phase => "PHASE",
            EventKind::Shares => "SHARES",
            EventKind::Ante => "ANTE",
            EventKind::RevealOpen => "REVEAL_OPEN",
            EventKind::Reveal => "REVEAL",
            EventKind::Ack => "ACK",
            EventKind::Abort => "ABORT",
            EventKind::Supersede => "SUPERSEDE",
            EventKind::Payout => "PAYOUT",
            EventKind::Violation => "VIOLATION",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }
}

/// One protocol-level event. `ledger_mark` is the ledger history length at
/// emission, which fixes its position when merged with ledger events.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EngineEvent {
    pub block: BlockHeight,
    pub kind: EventKind,
    pub actor: Option<AccountId>,
    /// Space-separated fields; layout depends on `kind`.
    pub detail: String,
    pub ledger_mark: usize,
}

/// Which instances [`Engine::latest_valid_instance`] should consider.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lookup {
    SecurityDeposit(AccountId),
    Donor(AccountId),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InvariantViolation {
    #[error("coin supply changed: minted {minted}, circulating {circulating}")]
    Conservation { minted: Coins, circulating: Coins },
    #[error("illegal transition {from:?} -> {to} on {instance:?}")]
    PhaseGraph {
        instance: InstanceId,
        from: Option<Phase>,
        to: Phase,
    },
    #[error("donor {0:?} acknowledged more than once")]
    DuplicateAcknowledgment(AccountId),
    #[error("acknowledgment of {instance:?} fails conjunct: {conjunct}")]
    AcknowledgmentConjunct {
        instance: InstanceId,
        conjunct: &'static str,
    },
    #[error("payout reconciliation: {0}")]
    Payout(String),
    #[error("superseded instance {0:?} was settled")]
    SupersededSettlement(InstanceId),
}

impl InvariantViolation {
    pub fn name(&self) -> &'static str {
        match self {
            InvariantViolation::Conservation { .. } => "conservation",
            InvariantViolation::PhaseGraph { .. } => "phase-graph",
            InvariantViolation::DuplicateAcknowledgment(_) => "single-acknowledgment",
            InvariantViolation::AcknowledgmentConjunct { .. } => "acknowledgment-conjuncts",
            InvariantViolation::Payout(_) => "payout-reconciliation",
            InvariantViolation::SupersededSettlement(_) => "supersession",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[derive(Default)]
pub struct EngineConfig {
    pub ledger: LedgerConfig,
    pub network: NetworkParams,
    pub seed: u64,
}


const TIMER_EXPIRE: u64 = 0;
const TIMER_REVEAL_CLOSE: u64 = 1;

pub struct Engine {
    ledger: Ledger,
    incentives: Incentives,
    instances: Vec<TfcpInstance>,
    rng: ChaCha8Rng,
    events: Vec<EngineEvent>,
    transitions: Vec<Transition>,
    acknowledgments: Vec<AcknowledgmentRecord>,
    /// Ledger transfers already scanned for liveness moves.
    observed: usize,
    /// Transfer seq at which each instance's deliberation began.
    deliberation_seq: Vec<Option<u64>>,
}

impl Engine {
    pub fn new(config: EngineConfig) -> Self {
        Self {
            ledger: Ledger::new(config.ledger),
            incentives: Incentives::new(config.network),
            instances: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            events: Vec::new(),
            transitions: Vec::new(),
            acknowledgments: Vec::new(),
            observed: 0,
            deliberation_seq: Vec::new(),
        }
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub fn incentives(&self) -> &Incentives {
        &self.incentives
    }

    pub fn events(&self) -> &[EngineEvent] {
        &self.events
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn acknowledgments(&self) -> &[AcknowledgmentRecord] {
        &self.acknowledgments
    }

    pub fn instances(&self) -> &[TfcpInstance] {
        &self.instances
    }

    pub fn instance(&self, id: InstanceId) -> Option<&TfcpInstance> {
        self.instances.iter().find(|i| i.id == id)
    }

    /// Direct access for fault injection in tests and attack scripts.
    pub fn instance_mut(&mut self, id: InstanceId) -> Option<&mut TfcpInstance> {
        self.instances.iter_mut().find(|i| i.id == id)
    }

    pub fn height(&self) -> BlockHeight {
        self.ledger.height()
    }

    fn index_of(&self, id: InstanceId) -> Result<usize, EngineError> {
        self.instances
            .iter()
            .position(|i| i.id == id)
            .ok_or(EngineError::UnknownInstance)
    }

    fn emit(&mut self, kind: EventKind, actor: Option<AccountId>, detail: String) {
        self.events.push(EngineEvent {
            block: self.ledger.height(),
            kind,
            actor,
            detail,
            ledger_mark: self.ledger.history().len(),
        });
    }

    fn emit_payouts(&mut self, entries: &[PayoutEntry]) {
        for e in entries {
            let instance = e.instance.map_or("-".to_string(), |i| i.to_hex());
            let detail = format!(
                "{} {} {} {} {}",
                instance,
                e.kind.name(),
                e.from,
                e.to,
                e.amount
            );
            self.emit(EventKind::Payout, Some(e.from), detail);
        }
    }

    fn set_phase(&mut self, idx: usize, to: Phase) {
        let inst = &mut self.instances[idx];
        let from = Some(inst.phase);
        inst.phase = to;
        let t = Transition {
            instance: inst.id,
            from,
            to,
            block: self.ledger.height(),
        };
        let actor = inst.security_deposit;
        let detail = format!("{} {} {}", inst.id, inst_phase_name(from), to);
        self.transitions.push(t);
        self.emit(EventKind::Phase, Some(actor), detail);
    }

    // ---- accounts and plain transfers -------------------------------------

    pub fn create_account(
        &mut self,
        public_key: &PublicKey,
        balance: Coins,
    ) -> Result<AccountId, EngineError> {
        Ok(self.ledger.create_account(public_key, balance)?)
    }

    pub fn create_system_account(
        &mut self,
        label: &str,
        balance: Coins,
    ) -> Result<AccountId, EngineError> {
        Ok(self.ledger.create_system_account(label, balance)?)
    }

    /// An ordinary signed transfer. Donor-signed transfers inside a
    /// deliberation window abort the matching instance.
    pub fn submit_transfer(
        &mut self,
        from: AccountId,
        to: AccountId,
        amount: Coins,
        keys: &KeyPair,
    ) -> Result<Transfer, EngineError> {
        let t = self
            .ledger
            .submit_transfer(from, to, amount, &keys.secret_key)?;
        self.observe()?;
        Ok(t)
    }

    pub fn stake_bail(
        &mut self,
        registrar_keys: &KeyPair,
        amount: Coins,
        expiry: BlockHeight,
    ) -> Result<BailCommitment, EngineError> {
        let (bail, entry) =
            self.incentives
                .stake_bail(&mut self.ledger, registrar_keys, amount, expiry)?;
        self.emit_payouts(&[entry]);
        self.observe()?;
        Ok(bail)
    }

    /// True while some live instance may still need this registrar's share.
    pub fn has_pending_obligations(&self, registrar: &AccountId) -> bool {
        self.instances.iter().any(|i| {
            i.phase == Phase::Deliberating
                && i.shares_delivered.contains_key(registrar)
                && !i.revealed.contains_key(registrar)
                && !i.violators.contains(registrar)
        }) || self.instances.iter().any(|i| {
            i.phase == Phase::Acknowledged
                && !i.obligations_closed
                && i.shares_delivered.contains_key(registrar)
                && !i.revealed.contains_key(registrar)
                && !i.violators.contains(registrar)
        })
    }

    pub fn release_bail(&mut self, registrar: &AccountId) -> Result<BailCommitment, EngineError> {
        let pending = self.has_pending_obligations(registrar);
        let before = self.incentives.payouts().entries().len();
        let bail = self
            .incentives
            .release_bail(&mut self.ledger, registrar, pending)?;
        let entries = self.incentives.payouts().entries()[before..].to_vec();
        self.emit_payouts(&entries);
        Ok(bail)
    }

    // ---- steps 1-2 --------------------------------------------------------

    /// Donor picks registrars and publishes the pre-Wills under the Security
    /// Deposit. Earlier live instances of the same donor or deposit are
    /// superseded.
    pub fn open_instance(
        &mut self,
        donor_keys: &KeyPair,
        security_deposit_keys: &KeyPair,
        params: InstanceParams,
    ) -> Result<InstanceId, EngineError> {
        let donor = AccountId::of(&donor_keys.public_key);
        let sd = AccountId::of(&security_deposit_keys.public_key);
        self.ledger.balance_of(&donor)?;
        self.ledger.balance_of(&sd)?;
        if self.acknowledgments.iter().any(|a| a.donor == donor) {
            return Err(EngineError::DonorAcknowledged(donor));
        }
        let prior: Vec<usize> = (0..self.instances.len())
            .filter(|&i| {
                let inst = &self.instances[i];
                !inst.phase.is_terminal() && (inst.donor == donor || inst.security_deposit == sd)
            })
            .collect();
        if prior.iter().any(|&i| self.instances[i].reveal_open) {
            return Err(EngineError::InstanceInReveal);
        }
        let shared_key = SharedKey::random(&mut self.rng);
        let pre_wills = build_pre_wills(
            donor_keys,
            sd,
            &shared_key,
            params.threshold_t,
            params.acceptable_registrars.clone(),
            params.registrar_fee,
            &params.heritage,
        )?;

        // A donor reopening during deliberation is, by definition, alive.
        if prior
            .iter()
            .any(|&i| self.instances[i].phase == Phase::Deliberating)
        {
            self.ledger
                .submit_transfer(donor, donor, 0, &donor_keys.secret_key)?;
            self.observe()?;
        }
        for &i in &prior {
            if !self.instances[i].phase.is_terminal() {
                self.supersede(i)?;
            }
        }

        let network = *self.incentives.params();
        let id = InstanceId(hash_parts(&[
            b"tfcp/instance",
            sd.as_bytes(),
            &pre_wills.encode(),
            &(self.instances.len() as u64).to_be_bytes(),
        ]));
        let min_distinct_witnesses = params
            .min_distinct_witnesses
            .unwrap_or(network.default_min_distinct_witnesses);
        let min_signaling_span = params
            .min_signaling_span
            .or(network.default_min_signaling_span)
            .unwrap_or(params.deliberation_time);
        let detail = format!(
            "{} t={} list={}",
            id,
            params.threshold_t,
            params
                .acceptable_registrars
                .as_ref()
                .map_or("any".to_string(), |l| l.len().to_string())
        );
        self.emit(EventKind::Select, Some(sd), detail);
        let doc = self.ledger.publish_document(
            sd,
            DocumentKind::PreWills,
            pre_wills.encode(),
            &security_deposit_keys.secret_key,
        )?;
        self.instances.push(TfcpInstance {
            id,
            phase: Phase::Recruiting,
            abort_reason: None,
            donor,
            security_deposit: sd,
            shared_key,
            pre_wills,
            params,
            min_distinct_witnesses,
            min_signaling_span,
            pre_wills_block: doc.block,
            wills_block: None,
            announcement_block: None,
            accepted_registrars: Vec::new(),
            shares_delivered: Default::default(),
            ante_record: Vec::new(),
            deliberation_started: None,
            deliberation_deadline: None,
            reveal_deadline: None,
            reveal_open: false,
            revealed: Default::default(),
            reveal_order: Vec::new(),
            violators: BTreeSet::new(),
            liveness_move_block: None,
            acknowledgment: None,
            immediate_fee_paid: 0,
            settled: false,
            obligations_closed: false,
        });
        self.deliberation_seq.push(None);
        self.transitions.push(Transition {
            instance: id,
            from: None,
            to: Phase::Recruiting,
            block: doc.block,
        });
        self.emit(
            EventKind::Phase,
            Some(sd),
            format!("{} - {}", id, Phase::Recruiting),
        );
        self.observe()?;
        Ok(id)
    }

    fn supersede(&mut self, idx: usize) -> Result<(), EngineError> {
        let inst = self.instances[idx].clone();
        let entries = self
            .incentives
            .settle_refund_only(&mut self.ledger, &inst)?;
        self.emit_payouts(&entries);
        self.ledger.unfreeze_account(inst.security_deposit)?;
        self.emit(
            EventKind::Supersede,
            Some(inst.security_deposit),
            inst.id.to_hex(),
        );
        self.set_phase(idx, Phase::Superseded);
        let inst = &mut self.instances[idx];
        inst.settled = true;
        inst.obligations_closed = true;
        Ok(())
    }

    // ---- step 3 -----------------------------------------------------------

    pub fn registrar_accept(
        &mut self,
        id: InstanceId,
        registrar_keys: &KeyPair,
    ) -> Result<(), EngineError> {
        let idx = self.index_of(id)?;
        let registrar = AccountId::of(&registrar_keys.public_key);
        let inst = &self.instances[idx];
        if inst.phase != Phase::Recruiting {
            return Err(EngineError::WrongPhase(inst.phase));
        }
        if !self
            .incentives
            .has_active_bail(&registrar, self.ledger.height())
        {
            return Err(EngineError::NoBail(registrar));
        }
        if !inst.pre_wills.accepts(&registrar) {
            return Err(EngineError::NotOnList(registrar));
        }
        if inst.accepted_registrars.contains(&registrar) {
            return Err(EngineError::AlreadyAccepted(registrar));
        }
        let acceptance = RegistrarAcceptance {
            registrar,
            security_deposit: inst.security_deposit,
            pre_wills_digest: hash(&inst.pre_wills.encode()),
        };
        self.ledger.publish_document(
            registrar,
            DocumentKind::RegistrarAcceptance,
            acceptance.encode(),
            &registrar_keys.secret_key,
        )?;
        self.instances[idx].accepted_registrars.push(registrar);
        self.observe()?;
        Ok(())
    }

    // ---- step 4 -----------------------------------------------------------

    /// Splits the shared key among every accepting registrar over the
    /// private channel.
    pub fn distribute_shares(
        &mut self,
        id: InstanceId,
        donor_keys: &KeyPair,
    ) -> Result<(), EngineError> {
        let idx = self.index_of(id)?;
        let inst = &self.instances[idx];
        if AccountId::of(&donor_keys.public_key) != inst.donor {
            return Err(EngineError::NotDonor);
        }
        if inst.phase != Phase::Recruiting {
            return Err(EngineError::WrongPhase(inst.phase));
        }
        let (have, need) = (inst.accepted_registrars.len(), inst.threshold_t());
        if have < need {
            return Err(EngineError::InsufficientAcceptances { have, need });
        }
        let shares = split_secret(inst.shared_key.as_bytes(), need, have, &mut self.rng)?;
        let recipients = inst.accepted_registrars.clone();
        for (registrar, share) in recipients.into_iter().zip(shares) {
            self.emit(
                EventKind::Shares,
                Some(registrar),
                format!("{} {}", id, share.index()),
            );
            self.instances[idx]
                .shares_delivered
                .insert(registrar, share);
        }
        self.set_phase(idx, Phase::SharesDistributed);
        Ok(())
    }

    /// What a registrar received over the private channel.
    pub fn delivered_share(&self, id: InstanceId, registrar: &AccountId) -> Option<&Share> {
        self.instance(id)?.shares_delivered.get(registrar)
    }

    // ---- steps 5-6 --------------------------------------------------------

    /// Publishes the Wills and the Announcement and pays the immediate
    /// registrar fee. Fails without side effects when the deposit cannot
    /// cover the fees.
    pub fn finalize_setup(
        &mut self,
        id: InstanceId,
        security_deposit_keys: &KeyPair,
    ) -> Result<(), EngineError> {
        let idx = self.index_of(id)?;
        let inst = &self.instances[idx];
        let sd = inst.security_deposit;
        if AccountId::of(&security_deposit_keys.public_key) != sd {
            return Err(EngineError::NotSecurityDeposit);
        }
        if inst.phase != Phase::SharesDistributed {
            return Err(EngineError::WrongPhase(inst.phase));
        }
        let publication = 2 * self.ledger.config().publication_fee;
        let need = inst.params.registrar_fee + inst.params.witness_fees + publication;
        let have = self.ledger.balance_of(&sd)?;
        if have < need {
            return Err(IncentiveError::UnderfundedDeposit { have, need }.into());
        }
        if self.ledger.is_frozen(&sd)? {
            return Err(LedgerError::Frozen(sd).into());
        }
        let wills = strip_to_wills(&inst.pre_wills);
        let announcement = build_announcement(
            inst.params.civil_identity.clone(),
            self.ledger.height(),
            sd,
            inst.params.witness_fees,
            inst.params.deliberation_time,
            inst.params.threshold_amount,
            inst.min_distinct_witnesses,
            inst.min_signaling_span,
        )?;

        let wills_doc = self.ledger.publish_document(
            sd,
            DocumentKind::Wills,
            wills.encode(),
            &security_deposit_keys.secret_key,
        )?;
        let ann_doc = self.ledger.publish_document(
            sd,
            DocumentKind::Announcement,
            announcement.encode(),
            &security_deposit_keys.secret_key,
        )?;
        let snapshot = self.instances[idx].clone();
        let entries = self.incentives.pay_immediate_registrar_fee(
            &mut self.ledger,
            &snapshot,
            security_deposit_keys,
        )?;
        self.emit_payouts(&entries);
        let inst = &mut self.instances[idx];
        inst.wills_block = Some(wills_doc.block);
        inst.announcement_block = Some(ann_doc.block);
        inst.immediate_fee_paid = entries.iter().map(|e| e.amount).sum();
        self.set_phase(idx, Phase::Active);
        self.observe()?;
        Ok(())
    }

    // ---- step 7 -----------------------------------------------------------

    pub fn record_ante(
        &mut self,
        id: InstanceId,
        witness_keys: &KeyPair,
        amount: Coins,
    ) -> Result<(), EngineError> {
        let idx = self.index_of(id)?;
        let inst = &self.instances[idx];
        if !matches!(inst.phase, Phase::Active | Phase::Deliberating) {
            return Err(EngineError::WrongPhase(inst.phase));
        }
        if amount == 0 {
            return Err(EngineError::ZeroAnte);
        }
        let witness = AccountId::of(&witness_keys.public_key);
        let sd = inst.security_deposit;
        let fee_eligible = inst.phase == Phase::Active;
        let transfer =
            self.ledger
                .submit_transfer(witness, sd, amount, &witness_keys.secret_key)?;
        let entry = self.incentives.record_ante_escrow(&transfer, id);
        self.emit_payouts(&[entry]);
        self.instances[idx].ante_record.push(Ante {
            witness,
            amount,
            block: transfer.block,
            fee_eligible,
            transfer_seq: transfer.seq,
        });
        self.emit(
            EventKind::Ante,
            Some(witness),
            format!("{} {} {}", id, amount, fee_eligible),
        );

        if self.instances[idx].phase == Phase::Active && threshold_met(&self.instances[idx]) {
            self.start_deliberation(idx, transfer.seq + 1)?;
        }
        self.observe()?;
        Ok(())
    }

    fn start_deliberation(&mut self, idx: usize, from_seq: u64) -> Result<(), EngineError> {
        let now = self.ledger.height();
        let inst = &mut self.instances[idx];
        let deadline = now + inst.params.deliberation_time;
        inst.deliberation_started = Some(now);
        inst.deliberation_deadline = Some(deadline);
        self.deliberation_seq[idx] = Some(from_seq);
        let sd = inst.security_deposit;
        self.ledger.freeze_account(sd)?;
        self.set_phase(idx, Phase::Deliberating);
        if deadline <= now {
            self.expire_deliberation(idx)?;
        } else {
            self.ledger
                .schedule_timer(deadline, timer_tag(idx, TIMER_EXPIRE));
        }
        Ok(())
    }

    // ---- step 8(b) --------------------------------------------------------

    /// The donor signals life with a zero-coin self-transfer.
    pub fn donor_liveness_move(
        &mut self,
        id: InstanceId,
        donor_keys: &KeyPair,
    ) -> Result<(), EngineError> {
        let idx = self.index_of(id)?;
        let inst = &self.instances[idx];
        let donor = AccountId::of(&donor_keys.public_key);
        if donor != inst.donor {
            return Err(EngineError::NotDonor);
        }
        if inst.phase != Phase::Deliberating {
            return Err(EngineError::WrongPhase(inst.phase));
        }
        let deadline = inst.deliberation_deadline.expect("deliberating");
        let now = self.ledger.height();
        if now >= deadline {
            return Err(EngineError::DeadlinePassed { deadline, now });
        }
        self.ledger
            .submit_transfer(donor, donor, 0, &donor_keys.secret_key)?;
        self.observe()?;
        Ok(())
    }

    /// Scans new ledger transfers for donor-signed moves.
    fn observe(&mut self) -> Result<(), EngineError> {
        while self.observed < self.ledger.transfers().len() {
            let t = self.ledger.transfers()[self.observed].clone();
            self.observed += 1;
            if !t.is_signed() {
                continue;
            }
            let hits: Vec<usize> = (0..self.instances.len())
                .filter(|&i| {
                    let inst = &self.instances[i];
                    inst.phase == Phase::Deliberating
                        && inst.donor == t.from
                        && self.deliberation_seq[i].is_some_and(|s| t.seq >= s)
                        && inst.deliberation_deadline.is_some_and(|d| t.block < d)
                })
                .collect();
            for idx in hits {
                self.abort_donor_alive(idx, t.block)?;
            }
        }
        Ok(())
    }

    fn abort_donor_alive(&mut self, idx: usize, block: BlockHeight) -> Result<(), EngineError> {
        let inst = &mut self.instances[idx];
        inst.liveness_move_block = Some(block);
        inst.abort_reason = Some(AbortReason::DonorAlive);
        let (id, sd) = (inst.id, inst.security_deposit);
        self.set_phase(idx, Phase::Aborted);
        self.emit(
            EventKind::Abort,
            Some(sd),
            format!("{} {}", id, AbortReason::DonorAlive.name()),
        );
        self.ledger.unfreeze_account(sd)?;
        let snapshot = self.instances[idx].clone();
        let entries = self
            .incentives
            .settle_on_abort(&mut self.ledger, &snapshot)?;
        self.emit_payouts(&entries);
        let inst = &mut self.instances[idx];
        inst.settled = true;
        inst.obligations_closed = true;
        Ok(())
    }

    // ---- step 8(a) --------------------------------------------------------

    fn expire_deliberation(&mut self, idx: usize) -> Result<(), EngineError> {
        let inst = &mut self.instances[idx];
        if inst.phase != Phase::Deliberating || inst.reveal_open {
            return Ok(());
        }
        let now = self.ledger.height();
        let close = now + inst.params.deliberation_time.max(1);
        inst.reveal_open = true;
        inst.reveal_deadline = Some(close);
        let (id, sd) = (inst.id, inst.security_deposit);
        self.ledger
            .schedule_timer(close, timer_tag(idx, TIMER_REVEAL_CLOSE));
        self.emit(EventKind::RevealOpen, Some(sd), format!("{} {}", id, close));
        Ok(())
    }

    /// A registrar hands its share to the reveal round. Once `t` valid
    /// shares are in, the acknowledgment is attempted.
    pub fn submit_share_reveal(
        &mut self,
        id: InstanceId,
        registrar_keys: &KeyPair,
        share: Share,
    ) -> Result<(), EngineError> {
        let idx = self.index_of(id)?;
        let registrar = AccountId::of(&registrar_keys.public_key);
        let inst = &self.instances[idx];
        if !inst.reveal_open || inst.obligations_closed {
            return Err(EngineError::RevealNotOpen);
        }
        if !matches!(inst.phase, Phase::Deliberating | Phase::Acknowledged) {
            return Err(EngineError::WrongPhase(inst.phase));
        }
        let delivered = inst
            .shares_delivered
            .get(&registrar)
            .ok_or(EngineError::NotARegistrar(registrar))?;
        if inst.revealed.contains_key(&registrar) || inst.violators.contains(&registrar) {
            return Err(EngineError::AlreadyRevealed(registrar));
        }
        if *delivered != share {
            self.instances[idx].violators.insert(registrar);
            self.incentives
                .record_violation(registrar, id, Violation::InvalidShare);
            self.emit(
                EventKind::Violation,
                Some(registrar),
                format!("{} {}", id, "InvalidShare"),
            );
            self.maybe_close_early(idx)?;
            return Err(EngineError::ShareMismatch);
        }
        let inst = &mut self.instances[idx];
        inst.revealed.insert(registrar, share.clone());
        inst.reveal_order.push(registrar);
        self.emit(
            EventKind::Reveal,
            Some(registrar),
            format!("{} {}", id, share.index()),
        );
        let inst = &self.instances[idx];
        if inst.phase == Phase::Deliberating && inst.revealed.len() >= inst.threshold_t() {
            self.enact_acknowledgment(idx, registrar_keys)?;
        }
        self.maybe_close_early(idx)?;
        self.observe()?;
        Ok(())
    }

    /// Reconstructs the key, decrypts the donor and checks the donor's
    /// signature. The registrar completing the threshold publishes the
    /// public Wills.
    fn enact_acknowledgment(
        &mut self,
        idx: usize,
        publisher_keys: &KeyPair,
    ) -> Result<(), EngineError> {
        let inst = self.instances[idx].clone();
        let shares: Vec<Share> = inst
            .reveal_order
            .iter()
            .map(|r| inst.revealed[r].clone())
            .collect();
        let key = SharedKey::from_slice(&reconstruct_secret(&shares, inst.threshold_t())?)?;
        let wills = self.published_wills(&inst);
        let donor = wills.as_ref().and_then(|w| {
            let plain = decrypt(&key, &w.encrypted_donor_address, DONOR_CONTEXT).ok()?;
            Some(AccountId::from_bytes(plain.try_into().ok()?))
        });
        let public_wills = donor.map(|donor| PublicWills {
            donor,
            original_wills_block: inst.wills_block.expect("active instances have Wills"),
            revealing_registrars: inst.reveal_order.clone(),
            revealed_key: key,
        });
        let valid = match (&public_wills, &wills) {
            (Some(pw), Some(w)) => self
                .ledger
                .public_key_of(&pw.donor)
                .is_ok_and(|pk| documents::verify_public_wills(pw, w, &pk)),
            _ => false,
        };
        let (Some(public_wills), true) = (public_wills, valid) else {
            return self.abort_without_blame(idx, AbortReason::InvalidSignature);
        };

        let registrar = AccountId::of(&publisher_keys.public_key);
        self.ledger.publish_document(
            registrar,
            DocumentKind::PublicWills,
            public_wills.encode(),
            &publisher_keys.secret_key,
        )?;
        let record = AcknowledgmentRecord {
            donor: public_wills.donor,
            instance_id: inst.id,
            block: self.ledger.height(),
            public_wills,
        };
        self.instances[idx].acknowledgment = Some(record.clone());
        self.acknowledgments.push(record);
        self.set_phase(idx, Phase::Acknowledged);
        self.emit(
            EventKind::Ack,
            Some(inst.security_deposit),
            format!("{} {}", inst.id, inst.donor),
        );
        Ok(())
    }

    fn published_wills(&self, inst: &TfcpInstance) -> Option<Wills> {
        let block = inst.wills_block?.0;
        let filter = DocumentFilter::kind(DocumentKind::Wills)
            .with_publisher(inst.security_deposit)
            .in_blocks(block..=block);
        let doc = self.ledger.documents_by(&filter).into_iter().last()?;
        Wills::decode(&doc.payload).ok()
    }

    /// Ends the instance with every ante refunded and no fees paid.
    fn abort_without_blame(&mut self, idx: usize, reason: AbortReason) -> Result<(), EngineError> {
        let inst = &mut self.instances[idx];
        inst.abort_reason = Some(reason);
        let (id, sd) = (inst.id, inst.security_deposit);
        self.set_phase(idx, Phase::Aborted);
        self.emit(
            EventKind::Abort,
            Some(sd),
            format!("{} {}", id, reason.name()),
        );
        self.ledger.unfreeze_account(sd)?;
        let snapshot = self.instances[idx].clone();
        let entries = self
            .incentives
            .settle_refund_only(&mut self.ledger, &snapshot)?;
        self.emit_payouts(&entries);
        self.instances[idx].settled = true;
        Ok(())
    }

    fn maybe_close_early(&mut self, idx: usize) -> Result<(), EngineError> {
        let inst = &self.instances[idx];
        let everyone_answered = inst
            .accepted_registrars
            .iter()
            .all(|r| inst.revealed.contains_key(r) || inst.violators.contains(r));
        if everyone_answered && !inst.obligations_closed && inst.reveal_open {
            self.close_reveal_window(idx)?;
        }
        Ok(())
    }

    /// Settles fees, slashes registrars that stayed silent or revealed a bad
    /// share, and fails the instance if fewer than `t` shares came in.
    fn close_reveal_window(&mut self, idx: usize) -> Result<(), EngineError> {
        if self.instances[idx].obligations_closed || !self.instances[idx].reveal_open {
            return Ok(());
        }
        let inst = self.instances[idx].clone();
        let id = inst.id;
        let mut offenders: Vec<(AccountId, Violation)> = inst
            .violators
            .iter()
            .map(|r| (*r, Violation::InvalidShare))
            .collect();
        if inst.phase != Phase::Aborted {
            for r in inst.silent_registrars() {
                if !inst.violators.contains(&r) {
                    offenders.push((r, Violation::NoReveal));
                }
            }
        }
        match inst.phase {
            Phase::Deliberating => {
                self.abort_without_blame(idx, AbortReason::RevealFailed)?;
            }
            Phase::Acknowledged if !inst.settled => {
                let entries = self
                    .incentives
                    .settle_on_acknowledgment(&mut self.ledger, &inst)?;
                self.emit_payouts(&entries);
                self.instances[idx].settled = true;
            }
            _ => {}
        }

        let mut recipients: Vec<AccountId> = inst.revealed.keys().copied().collect();
        recipients.extend(inst.fee_eligible_antes().map(|a| a.witness));
        recipients.sort();
        recipients.dedup();
        for (registrar, violation) in offenders {
            if violation == Violation::NoReveal {
                self.incentives.record_violation(registrar, id, violation);
                self.emit(
                    EventKind::Violation,
                    Some(registrar),
                    format!("{} {}", id, "NoReveal"),
                );
            }
            if self
                .incentives
                .bail(&registrar)
                .is_some_and(|b| b.status == BailStatus::Staked)
            {
                let entries = self.incentives.slash_bail(
                    &mut self.ledger,
                    &registrar,
                    id,
                    &recipients,
                    inst.security_deposit,
                )?;
                self.emit_payouts(&entries);
            }
        }
        self.instances[idx].obligations_closed = true;
        Ok(())
    }

    // ---- time -------------------------------------------------------------

    /// Advances one block at a time, handling every timer at the height it
    /// comes due.
    pub fn advance_blocks(&mut self, n: u64) -> Result<BlockHeight, EngineError> {
        if n == 0 {
            return Err(LedgerError::ZeroAdvance.into());
        }
        for _ in 0..n {
            self.ledger.advance_block(1)?;
            for timer in self.ledger.take_fired() {
                let idx = (timer.tag >> 1) as usize;
                match timer.tag & 1 {
                    TIMER_EXPIRE => self.expire_deliberation(idx)?,
                    _ => self.close_reveal_window(idx)?,
                }
            }
            self.observe()?;
        }
        Ok(self.ledger.height())
    }

    // ---- queries ----------------------------------------------------------

    /// Most recently opened instance that has not been superseded.
    pub fn latest_valid_instance(&self, lookup: Lookup) -> Option<InstanceId> {
        self.instances
            .iter()
            .filter(|i| match lookup {
                Lookup::SecurityDeposit(sd) => i.security_deposit == sd,
                Lookup::Donor(d) => i.donor == d,
            })
            .filter(|i| i.phase != Phase::Superseded)
            .max_by_key(|i| {
                (
                    i.wills_block.unwrap_or(i.pre_wills_block),
                    i.pre_wills_block,
                )
            })
            .map(|i| i.id)
    }

    /// Checks every engine-level invariant. Acknowledgments are re-derived
    /// from public ledger data only.
    pub fn check_invariants(&self) -> Result<(), InvariantViolation> {
        let (minted, circulating) = (self.ledger.total_supply(), self.ledger.circulating());
        if minted != circulating {
            return Err(InvariantViolation::Conservation {
                minted,
                circulating,
            });
        }
        for t in &self.transitions {
            if !Phase::may_transition(t.from, t.to) {
                return Err(InvariantViolation::PhaseGraph {
                    instance: t.instance,
                    from: t.from,
                    to: t.to,
                });
            }
        }
        let mut donors = BTreeSet::new();
        for ack in &self.acknowledgments {
            if !donors.insert(ack.donor) {
                return Err(InvariantViolation::DuplicateAcknowledgment(ack.donor));
            }
            if let Err(conjunct) = recheck_acknowledgment(&self.ledger, ack) {
                return Err(InvariantViolation::AcknowledgmentConjunct {
                    instance: ack.instance_id,
                    conjunct,
                });
            }
        }
        let payouts = self.incentives.payouts();
        payouts
            .reconcile_with_ledger(&self.ledger)
            .map_err(|e| InvariantViolation::Payout(e.to_string()))?;
        payouts
            .reconcile_bails(&self.ledger)
            .map_err(|e| InvariantViolation::Payout(e.to_string()))?;
        for inst in &self.instances {
            payouts
                .reconcile_registrar_fees(inst.id, inst.params.registrar_fee)
                .map_err(|e| InvariantViolation::Payout(e.to_string()))?;
            if inst.settled {
                payouts
                    .reconcile_antes(inst.id)
                    .map_err(|e| InvariantViolation::Payout(e.to_string()))?;
            }
            if inst.phase == Phase::Superseded {
                let settled = payouts.for_instance(inst.id).any(|e| {
                    matches!(
                        e.kind,
                        PayoutKind::WitnessFee
                            | PayoutKind::RegistrarFeeFinal
                            | PayoutKind::AnteForfeit
                            | PayoutKind::BailSlash
                    )
                });
                if settled || inst.acknowledgment.is_some() {
                    return Err(InvariantViolation::SupersededSettlement(inst.id));
                }
            }
        }
        Ok(())
    }
}

fn inst_phase_name(p: Option<Phase>) -> &'static str {
    p.map_or("-", Phase::name)
}

fn timer_tag(idx: usize, kind: u64) -> u64 {
    ((idx as u64) << 1) | kind
}

fn threshold_met(inst: &TfcpInstance) -> bool {
    let antes = &inst.ante_record;
    let (Some(first), Some(last)) = (antes.first(), antes.last()) else {
        return false;
    };
    inst.total_antes() >= inst.params.threshold_amount
        && inst.distinct_witnesses() >= inst.min_distinct_witnesses as usize
        && last.block.0 - first.block.0 >= inst.min_signaling_span
}

/// Re-derives the five acknowledgment conditions from the ledger: the
/// threshold crossing, the witness count, an undisturbed deliberation
/// window, `t` revealing registrars and the donor's signature.
pub fn recheck_acknowledgment(
    ledger: &Ledger,
    ack: &AcknowledgmentRecord,
) -> Result<(), &'static str> {
    let pw = &ack.public_wills;
    let wills_docs = ledger.documents_by(
        &DocumentFilter::kind(DocumentKind::Wills)
            .in_blocks(pw.original_wills_block.0..=pw.original_wills_block.0),
    );
    let (wills_doc, wills) = wills_docs
        .iter()
        .filter_map(|d| Wills::decode(&d.payload).ok().map(|w| (*d, w)))
        .find(|(_, w)| {
            decrypt(&pw.revealed_key, &w.encrypted_donor_address, DONOR_CONTEXT)
                .is_ok_and(|p| p.as_slice() == pw.donor.as_bytes())
        })
        .ok_or("wills")?;
    let sd = wills_doc.publisher;
    let ann_doc: &PublishedDocument = ledger
        .documents_by(&DocumentFilter::kind(DocumentKind::Announcement).with_publisher(sd))
        .into_iter()
        .filter(|d| d.seq > wills_doc.seq)
        .find(|d| {
            Announcement::decode(&d.payload).is_ok_and(|a| a.wills_reference == wills_doc.block)
        })
        .ok_or("announcement")?;
    let ann = Announcement::decode(&ann_doc.payload).map_err(|_| "announcement")?;

    // Antes: signed transfers into the deposit after the Announcement.
    let ack_seq_limit = ledger
        .transfers()
        .iter()
        .rposition(|t| t.block <= ack.block)
        .map_or(0, |p| p + 1);
    let first_transfer_after_ann = ledger
        .history()
        .iter()
        .take_while(|e| !matches!(e, LedgerEvent::Publication(d) if d.seq == ann_doc.seq))
        .filter(|e| matches!(e, LedgerEvent::Transfer(_)))
        .count();
    let mut total: Coins = 0;
    let mut witnesses = BTreeSet::new();
    let mut first_block = None;
    let mut crossing = None;
    for t in &ledger.transfers()[first_transfer_after_ann..ack_seq_limit] {
        if t.to != sd || !t.is_signed() || t.from == sd || t.amount == 0 {
            continue;
        }
        total += t.amount;
        witnesses.insert(t.from);
        let first = *first_block.get_or_insert(t.block);
        if total >= ann.threshold_amount
            && witnesses.len() >= ann.min_distinct_witnesses as usize
            && t.block.0 - first.0 >= ann.min_signaling_span
        {
            crossing = Some(t.clone());
            break;
        }
    }
    let crossing = crossing.ok_or("threshold-amount")?;
    if witnesses.len() < ann.min_distinct_witnesses as usize {
        return Err("distinct-witnesses");
    }
    let deadline = crossing.block + ann.deliberation_time;
    if ack.block < deadline {
        return Err("deliberation-elapsed");
    }
    let donor_moved = ledger
        .transfers()
        .iter()
        .any(|t| t.seq > crossing.seq && t.block < deadline && t.from == pw.donor && t.is_signed());
    if donor_moved {
        return Err("no-donor-move");
    }
    let distinct: BTreeSet<_> = pw.revealing_registrars.iter().collect();
    let accepted = ledger
        .documents_by(&DocumentFilter::kind(DocumentKind::RegistrarAcceptance))
        .into_iter()
        .filter_map(|d| {
            RegistrarAcceptance::decode(&d.payload)
                .ok()
                .map(|a| (d.publisher, a))
        })
        .filter(|(p, a)| a.security_deposit == sd && *p == a.registrar)
        .map(|(p, _)| p)
        .collect::<BTreeSet<_>>();
    if distinct.len() < wills.threshold_t as usize
        || !distinct.iter().all(|r| accepted.contains(*r))
    {
        return Err("threshold-shares");
    }
    let donor_pk = ledger
        .public_key_of(&pw.donor)
        .map_err(|_| "donor-signature")?;
    if !documents::verify_public_wills(pw, &wills, &donor_pk) {
        return Err("donor-signature");
    }
    Ok(())
}

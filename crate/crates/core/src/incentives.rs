//! Coin-motion policy: registrar bails, witness antes, fee distribution.
//!
//! Every coin movement here is a ledger transfer, and every such transfer is
//! mirrored by exactly one [`PayoutEntry`]. Amounts are integers; when a sum
//! does not divide evenly the remainder goes one coin at a time to the lowest
//! account ids.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::codec::{DecodeError, Wire};
use crate::crypto::KeyPair;
use crate::documents::BailDeclaration;
use crate::engine::{AbortReason, InstanceId, Phase, TfcpInstance};
use crate::ledger::{AccountId, BlockHeight, Coins, DocumentKind, Ledger, LedgerError, Transfer};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IncentiveError {
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error("bail {amount} below network minimum {minimum}")]
    BailBelowMinimum { amount: Coins, minimum: Coins },
    #[error("bail expiry {expiry} is not after current block {now}")]
    ExpiryInPast {
        expiry: BlockHeight,
        now: BlockHeight,
    },
    #[error("registrar {0:?} already has a staked bail")]
    AlreadyStaked(AccountId),
    #[error("registrar {0:?} has no bail")]
    NoBail(AccountId),
    #[error("bail is {0:?}, not staked")]
    NotStaked(BailStatus),
    #[error("bail expires at {expiry}, now {now}")]
    EarlyRelease {
        expiry: BlockHeight,
        now: BlockHeight,
    },
    #[error("registrar still owes a reveal")]
    PendingObligation,
    #[error("no protocol violation recorded for {0:?}")]
    NoViolation(AccountId),
    #[error("settlement requires phase {expected:?}, instance is {found:?}")]
    WrongPhase { expected: Phase, found: Phase },
    #[error("security deposit holds {have}, setup needs {need}")]
    UnderfundedDeposit { have: Coins, need: Coins },
    #[error("invalid fraction {0}/{1}")]
    InvalidFraction(u64, u64),
}

/// A fraction in `[0, 1]`, applied with floor rounding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fraction {
    numerator: u64,
    denominator: u64,
}

impl Fraction {
    pub fn new(numerator: u64, denominator: u64) -> Result<Self, IncentiveError> {
        if denominator == 0 || numerator > denominator {
            return Err(IncentiveError::InvalidFraction(numerator, denominator));
        }
        Ok(Self {
            numerator,
            denominator,
        })
    }

    pub const ZERO: Fraction = Fraction {
        numerator: 0,
        denominator: 1,
    };

    pub fn apply(self, amount: Coins) -> Coins {
        (u128::from(amount) * u128::from(self.numerator) / u128::from(self.denominator)) as Coins
    }

    pub fn numerator(self) -> u64 {
        self.numerator
    }

    pub fn denominator(self) -> u64 {
        self.denominator
    }
}

impl fmt::Display for Fraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.numerator, self.denominator)
    }
}

impl FromStr for Fraction {
    type Err = String;

    /// Accepts `n/d` or a decimal such as `0.25`.
    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        let (n, d) = if let Some((n, d)) = s.split_once('/') {
            let n = n.trim().parse::<u64>().map_err(|e| e.to_string())?;
            let d = d.trim().parse::<u64>().map_err(|e| e.to_string())?;
            (n, d)
        } else if let Some((int, frac)) = s.split_once('.') {
            if frac.is_empty() || frac.len() > 9 || !frac.bytes().all(|b| b.is_ascii_digit()) {
                return Err(format!("bad decimal {s:?}"));
            }
            let scale = 10u64.pow(frac.len() as u32);
            let int = int.parse::<u64>().map_err(|e| e.to_string())?;
            let frac = frac.parse::<u64>().map_err(|e| e.to_string())?;
            (
                int.checked_mul(scale)
                    .and_then(|v| v.checked_add(frac))
                    .ok_or("overflow")?,
                scale,
            )
        } else {
            (s.parse::<u64>().map_err(|e| e.to_string())?, 1)
        };
        Fraction::new(n, d).map_err(|e| e.to_string())
    }
}

/// Network-wide parameters fixed by governance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetworkParams {
    pub min_bail: Coins,
    pub immediate_fee_fraction: Fraction,
    pub default_min_distinct_witnesses: u32,
    /// `None` means "same as the instance's deliberation time".
    pub default_min_signaling_span: Option<u64>,
    pub min_registrar_fee: Coins,
}

impl Default for NetworkParams {
    fn default() -> Self {
        Self {
            min_bail: 100,
            immediate_fee_fraction: Fraction {
                numerator: 1,
                denominator: 4,
            },
            default_min_distinct_witnesses: 2,
            default_min_signaling_span: None,
            min_registrar_fee: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BailStatus {
    Staked,
    Released,
    Slashed,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BailCommitment {
    pub registrar: AccountId,
    /// Keyless escrow account holding the bail.
    pub escrow: AccountId,
    pub amount: Coins,
    pub expiry: BlockHeight,
    pub status: BailStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PayoutKind {
    AnteEscrow,
    AnteRefund,
    AnteForfeit,
    WitnessFee,
    RegistrarFeeImmediate,
    RegistrarFeeFinal,
    BailStake,
    BailRelease,
    BailSlash,
}

impl PayoutKind {
    pub const ALL: [PayoutKind; 9] = [
        PayoutKind::AnteEscrow,
        PayoutKind::AnteRefund,
        PayoutKind::AnteForfeit,
        PayoutKind::WitnessFee,
        PayoutKind::RegistrarFeeImmediate,
        PayoutKind::RegistrarFeeFinal,
        PayoutKind::BailStake,
        PayoutKind::BailRelease,
        PayoutKind::BailSlash,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PayoutKind::AnteEscrow => "AnteEscrow",
            PayoutKind::AnteRefund => "AnteRefund",
            PayoutKind::AnteForfeit => "AnteForfeit",
            PayoutKind::WitnessFee => "WitnessFee",
            PayoutKind::RegistrarFeeImmediate => "RegistrarFeeImmediate",
            PayoutKind::RegistrarFeeFinal => "RegistrarFeeFinal",
            PayoutKind::BailStake => "BailStake",
            PayoutKind::BailRelease => "BailRelease",
            PayoutKind::BailSlash => "BailSlash",
        }
    }
}

impl FromStr for PayoutKind {
    type Err = DecodeError;

    fn from_str(s: &str) -> Result<Self, DecodeError> {
        PayoutKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or(DecodeError::Invalid("unknown payout kind"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PayoutEntry {
    pub block: BlockHeight,
    pub kind: PayoutKind,
    pub from: AccountId,
    pub to: AccountId,
    pub amount: Coins,
    pub instance: Option<InstanceId>,
    /// Sequence number of the mirrored ledger transfer.
    pub transfer_seq: u64,
}

impl PayoutEntry {
    /// `block|kind|from|to|amount`
    pub fn to_line(&self) -> String {
        format!(
            "{}|{}|{}|{}|{}",
            self.block,
            self.kind.name(),
            self.from,
            self.to,
            self.amount
        )
    }
}

/// The five exported columns of a payout entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PayoutLine {
    pub block: BlockHeight,
    pub kind: PayoutKind,
    pub from: AccountId,
    pub to: AccountId,
    pub amount: Coins,
}

impl FromStr for PayoutLine {
    type Err = DecodeError;

    fn from_str(line: &str) -> Result<Self, DecodeError> {
        let cols: Vec<&str> = line.split('|').collect();
        let [block, kind, from, to, amount] = cols.as_slice() else {
            return Err(DecodeError::Invalid("payout line needs 5 columns"));
        };
        Ok(Self {
            block: BlockHeight(block.parse().map_err(|_| DecodeError::Invalid("block"))?),
            kind: kind.parse()?,
            from: from.parse()?,
            to: to.parse()?,
            amount: amount.parse().map_err(|_| DecodeError::Invalid("amount"))?,
        })
    }
}

impl fmt::Display for PayoutLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}|{}|{}|{}|{}",
            self.block,
            self.kind.name(),
            self.from,
            self.to,
            self.amount
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReconcileError {
    #[error("instance {instance:?}: ante escrow {escrow} != refund {refund} + forfeit {forfeit}")]
    Antes {
        instance: InstanceId,
        escrow: Coins,
        refund: Coins,
        forfeit: Coins,
    },
    #[error("instance {instance:?}: registrar fees paid {paid} exceed fee {fee}")]
    RegistrarFees {
        instance: InstanceId,
        paid: Coins,
        fee: Coins,
    },
    #[error("bail escrow {escrow:?}: staked {stake} != released {release} + slashed {slash} + held {held}")]
    Bail {
        escrow: AccountId,
        stake: Coins,
        release: Coins,
        slash: Coins,
        held: Coins,
    },
    #[error("payout entry for transfer {0} has no identical ledger transfer")]
    Unmirrored(u64),
    #[error("ledger transfer {0} is mirrored by more than one payout entry")]
    DoubleMirrored(u64),
}

/// Append-only record of every protocol coin movement.
#[derive(Debug, Clone, Default)]
pub struct PayoutLedger {
    entries: Vec<PayoutEntry>,
}

impl PayoutLedger {
    pub fn entries(&self) -> &[PayoutEntry] {
        &self.entries
    }

    fn push(&mut self, entry: PayoutEntry) {
        self.entries.push(entry);
    }

    pub fn for_instance(&self, id: InstanceId) -> impl Iterator<Item = &PayoutEntry> {
        self.entries.iter().filter(move |e| e.instance == Some(id))
    }

    pub fn sum(&self, id: InstanceId, kind: PayoutKind) -> Coins {
        self.for_instance(id)
            .filter(|e| e.kind == kind)
            .map(|e| e.amount)
            .sum()
    }

    /// `block|kind|from|to|amount`, one entry per line.
    pub fn to_delimited(&self) -> String {
        self.entries.iter().map(|e| e.to_line() + "\n").collect()
    }

    /// Ante identity for `instance`; only meaningful once it has settled.
    pub fn reconcile_antes(&self, id: InstanceId) -> Result<(), ReconcileError> {
        let escrow = self.sum(id, PayoutKind::AnteEscrow);
        let refund = self.sum(id, PayoutKind::AnteRefund);
        let forfeit = self.sum(id, PayoutKind::AnteForfeit);
        if escrow != refund + forfeit {
            return Err(ReconcileError::Antes {
                instance: id,
                escrow,
                refund,
                forfeit,
            });
        }
        Ok(())
    }

    pub fn reconcile_registrar_fees(
        &self,
        id: InstanceId,
        fee: Coins,
    ) -> Result<(), ReconcileError> {
        let paid = self.sum(id, PayoutKind::RegistrarFeeImmediate)
            + self.sum(id, PayoutKind::RegistrarFeeFinal);
        if paid > fee {
            return Err(ReconcileError::RegistrarFees {
                instance: id,
                paid,
                fee,
            });
        }
        Ok(())
    }

    /// Per escrow account: staked = released + slashed + still held.
    pub fn reconcile_bails(&self, ledger: &Ledger) -> Result<(), ReconcileError> {
        let mut flows: BTreeMap<AccountId, [Coins; 3]> = BTreeMap::new();
        for e in &self.entries {
            match e.kind {
                PayoutKind::BailStake => flows.entry(e.to).or_default()[0] += e.amount,
                PayoutKind::BailRelease => flows.entry(e.from).or_default()[1] += e.amount,
                PayoutKind::BailSlash => flows.entry(e.from).or_default()[2] += e.amount,
                _ => {}
            }
        }
        for (escrow, [stake, release, slash]) in flows {
            let held = ledger.balance_of(&escrow).unwrap_or(0);
            if stake != release + slash + held {
                return Err(ReconcileError::Bail {
                    escrow,
                    stake,
                    release,
                    slash,
                    held,
                });
            }
        }
        Ok(())
    }

    /// Every entry matches exactly one ledger transfer with identical amount
    /// and endpoints.
    pub fn reconcile_with_ledger(&self, ledger: &Ledger) -> Result<(), ReconcileError> {
        let mut seen = BTreeSet::new();
        for e in &self.entries {
            if !seen.insert(e.transfer_seq) {
                return Err(ReconcileError::DoubleMirrored(e.transfer_seq));
            }
            let ok = ledger.transfer(e.transfer_seq).is_some_and(|t| {
                t.from == e.from && t.to == e.to && t.amount == e.amount && t.block == e.block
            });
            if !ok {
                return Err(ReconcileError::Unmirrored(e.transfer_seq));
            }
        }
        Ok(())
    }
}

/// Splits `total` in proportion to `weights`, floor first, then one extra
/// coin per recipient in ascending account-id order until nothing is left.
/// Zero total weight yields no allocation.
pub fn split_weighted(total: Coins, weights: &[(AccountId, Coins)]) -> Vec<(AccountId, Coins)> {
    let mut merged: BTreeMap<AccountId, u128> = BTreeMap::new();
    for (id, w) in weights {
        *merged.entry(*id).or_default() += u128::from(*w);
    }
    let weight_sum: u128 = merged.values().sum();
    if weight_sum == 0 {
        return Vec::new();
    }
    let mut out: Vec<(AccountId, Coins)> = merged
        .iter()
        .map(|(id, w)| (*id, (u128::from(total) * w / weight_sum) as Coins))
        .collect();
    let mut remainder = total - out.iter().map(|(_, a)| a).sum::<Coins>();
    for (_, amount) in out.iter_mut() {
        if remainder == 0 {
            break;
        }
        *amount += 1;
        remainder -= 1;
    }
    out
}

pub fn split_equally(total: Coins, recipients: &[AccountId]) -> Vec<(AccountId, Coins)> {
    let weights: Vec<(AccountId, Coins)> = recipients.iter().map(|r| (*r, 1)).collect();
    split_weighted(total, &weights)
}

fn bail_escrow_label(registrar: &AccountId) -> String {
    format!("bail/{}", registrar.to_hex())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Violation {
    NoReveal,
    InvalidShare,
}

#[derive(Debug, Clone, Default)]
pub struct Incentives {
    params: NetworkParams,
    bails: BTreeMap<AccountId, BailCommitment>,
    violations: BTreeMap<AccountId, Vec<(InstanceId, Violation)>>,
    payouts: PayoutLedger,
}

impl Incentives {
    pub fn new(params: NetworkParams) -> Self {
        Self {
            params,
            ..Self::default()
        }
    }

    pub fn params(&self) -> &NetworkParams {
        &self.params
    }

    pub fn payouts(&self) -> &PayoutLedger {
        &self.payouts
    }

    pub fn bail(&self, registrar: &AccountId) -> Option<&BailCommitment> {
        self.bails.get(registrar)
    }

    pub fn bails(&self) -> impl Iterator<Item = &BailCommitment> {
        self.bails.values()
    }

    /// A staked bail that has not yet expired.
    pub fn has_active_bail(&self, registrar: &AccountId, now: BlockHeight) -> bool {
        self.bails
            .get(registrar)
            .is_some_and(|b| b.status == BailStatus::Staked && b.expiry > now)
    }

    fn record(
        &mut self,
        kind: PayoutKind,
        transfer: &Transfer,
        instance: Option<InstanceId>,
    ) -> PayoutEntry {
        let entry = PayoutEntry {
            block: transfer.block,
            kind,
            from: transfer.from,
            to: transfer.to,
            amount: transfer.amount,
            instance,
            transfer_seq: transfer.seq,
        };
        self.payouts.push(entry.clone());
        entry
    }

    fn protocol_pay(
        &mut self,
        ledger: &mut Ledger,
        kind: PayoutKind,
        from: AccountId,
        to: AccountId,
        amount: Coins,
        instance: Option<InstanceId>,
    ) -> Result<PayoutEntry, IncentiveError> {
        let t = ledger.protocol_transfer(from, to, amount)?;
        Ok(self.record(kind, &t, instance))
    }

    /// Records an escrowed ante; the transfer itself is made by the witness.
    pub fn record_ante_escrow(&mut self, transfer: &Transfer, instance: InstanceId) -> PayoutEntry {
        self.record(PayoutKind::AnteEscrow, transfer, Some(instance))
    }

    pub fn stake_bail(
        &mut self,
        ledger: &mut Ledger,
        registrar_keys: &KeyPair,
        amount: Coins,
        expiry: BlockHeight,
    ) -> Result<(BailCommitment, PayoutEntry), IncentiveError> {
        let registrar = AccountId::of(&registrar_keys.public_key);
        if amount < self.params.min_bail {
            return Err(IncentiveError::BailBelowMinimum {
                amount,
                minimum: self.params.min_bail,
            });
        }
        let now = ledger.height();
        if expiry <= now {
            return Err(IncentiveError::ExpiryInPast { expiry, now });
        }
        if self
            .bails
            .get(&registrar)
            .is_some_and(|b| b.status == BailStatus::Staked)
        {
            return Err(IncentiveError::AlreadyStaked(registrar));
        }
        let have = ledger.balance_of(&registrar)?;
        if have < amount {
            return Err(LedgerError::InsufficientBalance { have, need: amount }.into());
        }
        let label = bail_escrow_label(&registrar);
        let escrow = AccountId::system(&label);
        if !ledger.contains(&escrow) {
            ledger.create_system_account(&label, 0)?;
        }
        let declaration = BailDeclaration {
            registrar,
            amount,
            expiry,
        };
        ledger.publish_document(
            registrar,
            DocumentKind::BailCommitment,
            declaration.encode(),
            &registrar_keys.secret_key,
        )?;
        let t = ledger.submit_transfer(registrar, escrow, amount, &registrar_keys.secret_key)?;
        let entry = self.record(PayoutKind::BailStake, &t, None);
        let commitment = BailCommitment {
            registrar,
            escrow,
            amount,
            expiry,
            status: BailStatus::Staked,
        };
        self.bails.insert(registrar, commitment.clone());
        Ok((commitment, entry))
    }

    pub fn release_bail(
        &mut self,
        ledger: &mut Ledger,
        registrar: &AccountId,
        has_pending_obligations: bool,
    ) -> Result<BailCommitment, IncentiveError> {
        let bail = self
            .bails
            .get(registrar)
            .ok_or(IncentiveError::NoBail(*registrar))?
            .clone();
        if bail.status != BailStatus::Staked {
            return Err(IncentiveError::NotStaked(bail.status));
        }
        let now = ledger.height();
        if now < bail.expiry {
            return Err(IncentiveError::EarlyRelease {
                expiry: bail.expiry,
                now,
            });
        }
        if has_pending_obligations {
            return Err(IncentiveError::PendingObligation);
        }
        self.protocol_pay(
            ledger,
            PayoutKind::BailRelease,
            bail.escrow,
            *registrar,
            bail.amount,
            None,
        )?;
        let b = self.bails.get_mut(registrar).expect("checked above");
        b.status = BailStatus::Released;
        Ok(b.clone())
    }

    pub fn record_violation(
        &mut self,
        registrar: AccountId,
        instance: InstanceId,
        violation: Violation,
    ) {
        self.violations
            .entry(registrar)
            .or_default()
            .push((instance, violation));
    }

    pub fn violations_of(&self, registrar: &AccountId) -> &[(InstanceId, Violation)] {
        self.violations.get(registrar).map_or(&[], Vec::as_slice)
    }

    /// Moves the whole bail to `recipients`, split per head. With no
    /// recipients the bail goes to `fallback`.
    pub fn slash_bail(
        &mut self,
        ledger: &mut Ledger,
        registrar: &AccountId,
        instance: InstanceId,
        recipients: &[AccountId],
        fallback: AccountId,
    ) -> Result<Vec<PayoutEntry>, IncentiveError> {
        if !self
            .violations_of(registrar)
            .iter()
            .any(|(i, _)| *i == instance)
        {
            return Err(IncentiveError::NoViolation(*registrar));
        }
        let bail = self
            .bails
            .get(registrar)
            .ok_or(IncentiveError::NoBail(*registrar))?
            .clone();
        if bail.status != BailStatus::Staked {
            return Err(IncentiveError::NotStaked(bail.status));
        }
        let shares = if recipients.is_empty() {
            vec![(fallback, bail.amount)]
        } else {
            split_equally(bail.amount, recipients)
        };
        let mut out = Vec::new();
        for (to, amount) in shares {
            if amount > 0 {
                out.push(self.protocol_pay(
                    ledger,
                    PayoutKind::BailSlash,
                    bail.escrow,
                    to,
                    amount,
                    Some(instance),
                )?);
            }
        }
        self.bails.get_mut(registrar).expect("checked above").status = BailStatus::Slashed;
        Ok(out)
    }

    /// Total immediate fee for `instance` under the current fraction.
    pub fn immediate_fee_total(&self, registrar_fee: Coins) -> Coins {
        self.params.immediate_fee_fraction.apply(registrar_fee)
    }

    /// Pays the up-front share of the registrar fee from the Security Deposit,
    /// split equally among accepting registrars.
    pub fn pay_immediate_registrar_fee(
        &mut self,
        ledger: &mut Ledger,
        instance: &TfcpInstance,
        security_deposit_keys: &KeyPair,
    ) -> Result<Vec<PayoutEntry>, IncentiveError> {
        let total = self.immediate_fee_total(instance.params.registrar_fee);
        let have = ledger.balance_of(&instance.security_deposit)?;
        if have < total {
            return Err(IncentiveError::UnderfundedDeposit { have, need: total });
        }
        let mut out = Vec::new();
        for (to, amount) in split_equally(total, &instance.accepted_registrars) {
            if amount == 0 {
                continue;
            }
            let t = ledger.submit_transfer(
                instance.security_deposit,
                to,
                amount,
                &security_deposit_keys.secret_key,
            )?;
            out.push(self.record(PayoutKind::RegistrarFeeImmediate, &t, Some(instance.id)));
        }
        Ok(out)
    }

    fn refund_antes(
        &mut self,
        ledger: &mut Ledger,
        instance: &TfcpInstance,
        out: &mut Vec<PayoutEntry>,
    ) -> Result<(), IncentiveError> {
        for ante in &instance.ante_record {
            out.push(self.protocol_pay(
                ledger,
                PayoutKind::AnteRefund,
                instance.security_deposit,
                ante.witness,
                ante.amount,
                Some(instance.id),
            )?);
        }
        Ok(())
    }

    /// Pays final registrar fees to revealers and witness fees pro rata, then
    /// refunds every ante. Fee payments are capped by what the deposit holds.
    pub fn settle_on_acknowledgment(
        &mut self,
        ledger: &mut Ledger,
        instance: &TfcpInstance,
    ) -> Result<Vec<PayoutEntry>, IncentiveError> {
        if instance.phase != Phase::Acknowledged {
            return Err(IncentiveError::WrongPhase {
                expected: Phase::Acknowledged,
                found: instance.phase,
            });
        }
        let sd = instance.security_deposit;
        let mut out = Vec::new();
        self.refund_antes(ledger, instance, &mut out)?;

        let remaining_fee = instance
            .params
            .registrar_fee
            .saturating_sub(instance.immediate_fee_paid);
        let revealers: Vec<AccountId> = instance.revealed.keys().copied().collect();
        let budget = remaining_fee.min(ledger.balance_of(&sd)?);
        for (to, amount) in split_equally(budget, &revealers) {
            if amount > 0 {
                out.push(self.protocol_pay(
                    ledger,
                    PayoutKind::RegistrarFeeFinal,
                    sd,
                    to,
                    amount,
                    Some(instance.id),
                )?);
            }
        }

        let weights: Vec<(AccountId, Coins)> = instance
            .fee_eligible_antes()
            .map(|a| (a.witness, a.amount))
            .collect();
        let budget = instance.params.witness_fees.min(ledger.balance_of(&sd)?);
        for (to, amount) in split_weighted(budget, &weights) {
            if amount > 0 {
                out.push(self.protocol_pay(
                    ledger,
                    PayoutKind::WitnessFee,
                    sd,
                    to,
                    amount,
                    Some(instance.id),
                )?);
            }
        }
        Ok(out)
    }

    /// The donor was alive: every ante, late ones included, is forfeited to
    /// the Security Deposit. The escrow already sits there, so each forfeit is
    /// a zero-motion transfer from the deposit to itself.
    pub fn settle_on_abort(
        &mut self,
        ledger: &mut Ledger,
        instance: &TfcpInstance,
    ) -> Result<Vec<PayoutEntry>, IncentiveError> {
        if instance.phase != Phase::Aborted
            || instance.abort_reason != Some(AbortReason::DonorAlive)
        {
            return Err(IncentiveError::WrongPhase {
                expected: Phase::Aborted,
                found: instance.phase,
            });
        }
        assert!(
            !instance.ante_record.is_empty(),
            "an aborted instance reached deliberation, so it holds antes"
        );
        let sd = instance.security_deposit;
        let mut out = Vec::new();
        for ante in &instance.ante_record {
            out.push(self.protocol_pay(
                ledger,
                PayoutKind::AnteForfeit,
                sd,
                sd,
                ante.amount,
                Some(instance.id),
            )?);
        }
        Ok(out)
    }

    /// Aborts not caused by the donor (failed reveal, invalid signature) and
    /// supersession: witnesses get their antes back, nobody earns fees.
    pub fn settle_refund_only(
        &mut self,
        ledger: &mut Ledger,
        instance: &TfcpInstance,
    ) -> Result<Vec<PayoutEntry>, IncentiveError> {
        let mut out = Vec::new();
        self.refund_antes(ledger, instance, &mut out)?;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::keygen;

    fn ids(n: u8) -> Vec<AccountId> {
        let mut v: Vec<AccountId> = (0..n)
            .map(|i| AccountId::system(&format!("a{i}")))
            .collect();
        v.sort();
        v
    }

    #[test]
    fn immediate_fee_split_gives_remainder_to_lowest_id() {
        let f = Fraction::new(1, 4).unwrap();
        let total = f.apply(100);
        assert_eq!(total, 25);
        let r = ids(2);
        let split = split_equally(total, &[r[1], r[0]]);
        assert_eq!(split, vec![(r[0], 13), (r[1], 12)]);
        assert_eq!(split_equally(f.apply(100), &r[..1]), vec![(r[0], 25)]);
        assert_eq!(Fraction::ZERO.apply(100), 0);
    }

    #[test]
    fn pro_rata_witness_fees() {
        let w = ids(2);
        assert_eq!(
            split_weighted(10, &[(w[0], 60), (w[1], 40)]),
            vec![(w[0], 6), (w[1], 4)]
        );
        // 7 * 1/3 each = 2 rem 1
        let three = ids(3);
        let s = split_weighted(7, &[(three[0], 1), (three[1], 1), (three[2], 1)]);
        assert_eq!(s.iter().map(|x| x.1).collect::<Vec<_>>(), vec![3, 2, 2]);
        assert!(split_weighted(5, &[]).is_empty());
    }

    #[test]
    fn fraction_parsing() {
        assert_eq!(
            "1/4".parse::<Fraction>().unwrap(),
            Fraction::new(1, 4).unwrap()
        );
        assert_eq!("0.25".parse::<Fraction>().unwrap().apply(100), 25);
        assert_eq!("0".parse::<Fraction>().unwrap().apply(100), 0);
        assert!("5/4".parse::<Fraction>().is_err());
        assert!("1/0".parse::<Fraction>().is_err());
        assert!("x".parse::<Fraction>().is_err());
    }

    fn bail_world() -> (Ledger, Incentives, KeyPair, AccountId) {
        let mut l = Ledger::default();
        let k = keygen(&[1; 32]).unwrap();
        let r = l.create_account(&k.public_key, 1000).unwrap();
        (l, Incentives::new(NetworkParams::default()), k, r)
    }

    #[test]
    fn stake_minimum_boundary() {
        let (mut l, mut inc, k, r) = bail_world();
        assert_eq!(
            inc.stake_bail(&mut l, &k, 99, BlockHeight(10)).unwrap_err(),
            IncentiveError::BailBelowMinimum {
                amount: 99,
                minimum: 100
            }
        );
        let (b, _) = inc.stake_bail(&mut l, &k, 100, BlockHeight(10)).unwrap();
        assert_eq!(b.status, BailStatus::Staked);
        assert_eq!(l.balance_of(&r).unwrap(), 900);
        assert_eq!(l.balance_of(&b.escrow).unwrap(), 100);
        assert_eq!(
            l.documents_by(&crate::ledger::DocumentFilter::kind(
                DocumentKind::BailCommitment
            ))
            .len(),
            1
        );
        assert!(matches!(
            inc.stake_bail(&mut l, &k, 100, BlockHeight(10)),
            Err(IncentiveError::AlreadyStaked(_))
        ));
    }

    #[test]
    fn stake_rejects_past_expiry_and_poor_registrar() {
        let (mut l, mut inc, k, _) = bail_world();
        l.advance_block(5).unwrap();
        assert!(matches!(
            inc.stake_bail(&mut l, &k, 100, BlockHeight(5)),
            Err(IncentiveError::ExpiryInPast { .. })
        ));
        assert!(matches!(
            inc.stake_bail(&mut l, &k, 5000, BlockHeight(50)),
            Err(IncentiveError::Ledger(
                LedgerError::InsufficientBalance { .. }
            ))
        ));
    }

    #[test]
    fn release_rules() {
        let (mut l, mut inc, k, r) = bail_world();
        inc.stake_bail(&mut l, &k, 100, BlockHeight(10)).unwrap();
        l.advance_block(9).unwrap();
        assert!(matches!(
            inc.release_bail(&mut l, &r, false),
            Err(IncentiveError::EarlyRelease { .. })
        ));
        l.advance_block(1).unwrap();
        assert_eq!(
            inc.release_bail(&mut l, &r, true),
            Err(IncentiveError::PendingObligation)
        );
        let b = inc.release_bail(&mut l, &r, false).unwrap();
        assert_eq!(b.status, BailStatus::Released);
        assert_eq!(l.balance_of(&r).unwrap(), 1000);
        inc.payouts().reconcile_bails(&l).unwrap();
        inc.payouts().reconcile_with_ledger(&l).unwrap();
    }

    #[test]
    fn slash_requires_violation_and_is_terminal() {
        let (mut l, mut inc, k, r) = bail_world();
        inc.stake_bail(&mut l, &k, 101, BlockHeight(10)).unwrap();
        let id = InstanceId(crate::crypto::hash(b"i"));
        let sd = AccountId::system("sd");
        l.create_system_account("sd", 0).unwrap();
        let rec = ids(2);
        for a in &rec {
            l.create_system_account(&format!("{a:?}"), 0).ok();
        }
        let recipients: Vec<AccountId> = (0..2)
            .map(|i| {
                let kp = keygen(&[10 + i; 32]).unwrap();
                l.create_account(&kp.public_key, 0).unwrap()
            })
            .collect();
        assert_eq!(
            inc.slash_bail(&mut l, &r, id, &recipients, sd),
            Err(IncentiveError::NoViolation(r))
        );
        inc.record_violation(r, id, Violation::NoReveal);
        let entries = inc.slash_bail(&mut l, &r, id, &recipients, sd).unwrap();
        assert_eq!(entries.iter().map(|e| e.amount).sum::<Coins>(), 101);
        assert_eq!(inc.bail(&r).unwrap().status, BailStatus::Slashed);
        assert_eq!(
            inc.slash_bail(&mut l, &r, id, &recipients, sd),
            Err(IncentiveError::NotStaked(BailStatus::Slashed))
        );
        inc.payouts().reconcile_bails(&l).unwrap();
    }

    #[test]
    fn payout_line_round_trip() {
        let a = ids(2);
        let line = PayoutLine {
            block: BlockHeight(4),
            kind: PayoutKind::WitnessFee,
            from: a[0],
            to: a[1],
            amount: 9,
        };
        assert_eq!(line.to_string().parse::<PayoutLine>().unwrap(), line);
        assert!("1|Nope|x|y|2".parse::<PayoutLine>().is_err());
        assert!("1|2".parse::<PayoutLine>().is_err());
    }
}

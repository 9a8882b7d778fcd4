use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use crate::crypto::{Digest, Share, SharedKey};
use crate::documents::{CivilIdentity, PreWills, PublicWills};
use crate::ledger::{AccountId, BlockHeight, Coins};

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct InstanceId(pub(crate) Digest);

impl InstanceId {
    pub fn as_bytes(&self) -> &[u8; 32] {
        self.0.as_bytes()
    }

    pub fn to_hex(&self) -> String {
        self.0.to_hex()
    }

    pub fn short(&self) -> String {
        self.to_hex()[..8].to_string()
    }
}

impl fmt::Debug for InstanceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "InstanceId({})", self.short())
    }
}

impl fmt::Display for InstanceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Phase {
    Recruiting,
    SharesDistributed,
    Active,
    Deliberating,
    Acknowledged,
    Aborted,
    Superseded,
}

impl Phase {
    pub const ALL: [Phase; 7] = [
        Phase::Recruiting,
        Phase::SharesDistributed,
        Phase::Active,
        Phase::Deliberating,
        Phase::Acknowledged,
        Phase::Aborted,
        Phase::Superseded,
    ];

    pub fn is_terminal(self) -> bool {
        matches!(
            self,
            Phase::Acknowledged | Phase::Aborted | Phase::Superseded
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            Phase::Recruiting => "Recruiting",
            Phase::SharesDistributed => "SharesDistributed",
            Phase::Active => "Active",
            Phase::Deliberating => "Deliberating",
            Phase::Acknowledged => "Acknowledged",
            Phase::Aborted => "Aborted",
            Phase::Superseded => "Superseded",
        }
    }

    /// The declared phase graph. Supersession may interrupt any live phase.
    pub fn may_transition(from: Option<Phase>, to: Phase) -> bool {
        use Phase::*;
        match (from, to) {
            (None, Recruiting) => true,
            (Some(Recruiting), SharesDistributed)
            | (Some(SharesDistributed), Active)
            | (Some(Active), Deliberating)
            | (Some(Deliberating), Acknowledged)
            | (Some(Deliberating), Aborted) => true,
            (Some(f), Superseded) => !f.is_terminal(),
            _ => false,
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Phase {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        Phase::ALL.into_iter().find(|p| p.name() == s).ok_or(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AbortReason {
    /// A donor-signed transaction landed inside the deliberation window.
    DonorAlive,
    /// The revealed Wills did not carry a valid donor signature.
    InvalidSignature,
    /// Fewer than `t` registrars revealed before the window closed.
    RevealFailed,
}

impl AbortReason {
    pub fn name(self) -> &'static str {
        match self {
            AbortReason::DonorAlive => "DonorAlive",
            AbortReason::InvalidSignature => "InvalidSignature",
            AbortReason::RevealFailed => "RevealFailed",
        }
    }
}

/// Donor-chosen parameters for one instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstanceParams {
    pub threshold_t: u32,
    pub acceptable_registrars: Option<Vec<AccountId>>,
    pub registrar_fee: Coins,
    pub civil_identity: CivilIdentity,
    pub witness_fees: Coins,
    pub deliberation_time: u64,
    pub threshold_amount: Coins,
    /// Falls back to the network default when unset.
    pub min_distinct_witnesses: Option<u32>,
    /// Falls back to the network default, then to `deliberation_time`.
    pub min_signaling_span: Option<u64>,
    pub heritage: Vec<u8>,
}

impl InstanceParams {
    pub fn new(
        name: &str,
        threshold_t: u32,
        registrar_fee: Coins,
        threshold_amount: Coins,
    ) -> Self {
        Self {
            threshold_t,
            acceptable_registrars: None,
            registrar_fee,
            civil_identity: CivilIdentity {
                name: name.to_string(),
                ..CivilIdentity::default()
            },
            witness_fees: 0,
            deliberation_time: 10,
            threshold_amount,
            min_distinct_witnesses: None,
            min_signaling_span: None,
            heritage: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ante {
    pub witness: AccountId,
    pub amount: Coins,
    pub block: BlockHeight,
    /// Antes made while Active; later ones are escrowed but earn no fees.
    pub fee_eligible: bool,
    pub transfer_seq: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AcknowledgmentRecord {
    pub donor: AccountId,
    pub instance_id: InstanceId,
    pub block: BlockHeight,
    pub public_wills: PublicWills,
}

/// Per-donor protocol state.
///
/// `donor`, `shared_key` and `shares_delivered` are the donor's and the
/// registrars' private knowledge; none of it is on the ledger until the
/// reveal.
#[derive(Debug, Clone)]
pub struct TfcpInstance {
    pub id: InstanceId,
    pub phase: Phase,
    pub abort_reason: Option<AbortReason>,
    pub donor: AccountId,
    pub security_deposit: AccountId,
    pub shared_key: SharedKey,
    pub pre_wills: PreWills,
    pub params: InstanceParams,
    pub min_distinct_witnesses: u32,
    pub min_signaling_span: u64,
    pub pre_wills_block: BlockHeight,
    pub wills_block: Option<BlockHeight>,
    pub announcement_block: Option<BlockHeight>,
    pub accepted_registrars: Vec<AccountId>,
    pub shares_delivered: BTreeMap<AccountId, Share>,
    pub ante_record: Vec<Ante>,
    pub deliberation_started: Option<BlockHeight>,
    pub deliberation_deadline: Option<BlockHeight>,
    pub reveal_deadline: Option<BlockHeight>,
    pub reveal_open: bool,
    pub revealed: BTreeMap<AccountId, Share>,
    pub reveal_order: Vec<AccountId>,
    pub violators: BTreeSet<AccountId>,
    pub liveness_move_block: Option<BlockHeight>,
    pub acknowledgment: Option<AcknowledgmentRecord>,
    pub immediate_fee_paid: Coins,
    pub settled: bool,
    /// True once no registrar owes this instance anything.
    pub obligations_closed: bool,
}

impl TfcpInstance {
    pub fn total_antes(&self) -> Coins {
        self.ante_record.iter().map(|a| a.amount).sum()
    }

    pub fn distinct_witnesses(&self) -> usize {
        self.ante_record
            .iter()
            .map(|a| a.witness)
            .collect::<BTreeSet<_>>()
            .len()
    }

    pub fn is_eligible_for_distribution(&self) -> bool {
        self.phase == Phase::Recruiting
            && self.accepted_registrars.len() >= self.params.threshold_t as usize
    }

    pub fn threshold_t(&self) -> usize {
        self.params.threshold_t as usize
    }

    pub fn fee_eligible_antes(&self) -> impl Iterator<Item = &Ante> {
        self.ante_record.iter().filter(|a| a.fee_eligible)
    }

    /// Registrars that accepted but have not (validly) revealed.
    pub fn silent_registrars(&self) -> Vec<AccountId> {
        self.accepted_registrars
            .iter()
            .filter(|r| !self.revealed.contains_key(r))
            .copied()
            .collect()
    }
}

/// One recorded phase change.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Transition {
    pub instance: InstanceId,
    pub from: Option<Phase>,
    pub to: Phase,
    pub block: BlockHeight,
}

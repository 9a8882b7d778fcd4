//! Account-based ledger with discrete block time.
//!
//! The ledger is the only public state in a simulated world: balances,
//! signed transfers and published documents. Everything the protocol needs to
//! prove after the fact must be recoverable from [`Ledger::history`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::{Add, RangeInclusive};
use std::str::FromStr;

use thiserror::Error;

use crate::codec::{DecodeError, Writer};
use crate::crypto::{self, hash_parts, Digest, PublicKey, SecretKey, Signature};
use crate::documents;

pub type Coins = u64;

/// Identity on the ledger: the digest of an account's public key, or of a
/// label for keyless system accounts (bail escrows, fee sink).
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AccountId(Digest);

impl AccountId {
    pub fn of(public_key: &PublicKey) -> Self {
        Self(hash_parts(&[b"tfcp/account", public_key.as_bytes()]))
    }

    pub fn system(label: &str) -> Self {
        Self(hash_parts(&[b"tfcp/system-account", label.as_bytes()]))
    }

    pub fn from_bytes(bytes: [u8; 32]) -> Self {
        Self(Digest::from_bytes(bytes))
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        self.0.as_bytes()
    }

    pub fn to_hex(&self) -> String {
        self.0.to_hex()
    }

    /// First 8 hex digits, for human-facing tables.
    pub fn short(&self) -> String {
        self.to_hex()[..8].to_string()
    }
}

impl fmt::Debug for AccountId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "AccountId({})", self.short())
    }
}

impl fmt::Display for AccountId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl FromStr for AccountId {
    type Err = DecodeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bytes = hex::decode(s).map_err(|_| DecodeError::Invalid("account id hex"))?;
        let arr: [u8; 32] = bytes
            .try_into()
            .map_err(|_| DecodeError::Invalid("account id length"))?;
        Ok(Self::from_bytes(arr))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct BlockHeight(pub u64);

impl BlockHeight {
    pub fn value(self) -> u64 {
        self.0
    }
}

impl Add<u64> for BlockHeight {
    type Output = BlockHeight;

    fn add(self, rhs: u64) -> BlockHeight {
        BlockHeight(self.0.saturating_add(rhs))
    }
}

impl fmt::Display for BlockHeight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum DocumentKind {
    PreWills = 0x10,
    Wills = 0x11,
    Announcement = 0x12,
    PublicWills = 0x13,
    RegistrarAcceptance = 0x14,
    BailCommitment = 0x15,
}

impl DocumentKind {
    pub const ALL: [DocumentKind; 6] = [
        DocumentKind::PreWills,
        DocumentKind::Wills,
        DocumentKind::Announcement,
        DocumentKind::PublicWills,
        DocumentKind::RegistrarAcceptance,
        DocumentKind::BailCommitment,
    ];

    /// Wire type tag of the document's canonical encoding.
    pub fn tag(self) -> u8 {
        self as u8
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.tag() == tag)
    }

    /// Name used as the `kind` column of trace records.
    pub fn trace_name(self) -> &'static str {
        match self {
            DocumentKind::PreWills => "PRE_WILLS",
            DocumentKind::Wills => "WILLS",
            DocumentKind::Announcement => "ANNOUNCEMENT",
            DocumentKind::PublicWills => "PUBLIC_WILLS",
            DocumentKind::RegistrarAcceptance => "REGISTRAR_ACCEPTANCE",
            DocumentKind::BailCommitment => "BAIL_COMMITMENT",
        }
    }

    pub fn from_trace_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.trace_name() == name)
    }
}

/// Who authorised a balance change.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Authority {
    /// Signed by the sender's key; subject to freezing.
    Signed(Signature),
    /// Enacted by the protocol itself (settlement, bail escrow, publication
    /// fees). Bypasses freezing but never overdraws.
    Protocol,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transfer {
    pub seq: u64,
    pub from: AccountId,
    pub to: AccountId,
    pub amount: Coins,
    pub nonce: u64,
    pub authority: Authority,
    pub block: BlockHeight,
}

impl Transfer {
    pub fn signature(&self) -> Option<&Signature> {
        match &self.authority {
            Authority::Signed(sig) => Some(sig),
            Authority::Protocol => None,
        }
    }

    pub fn is_signed(&self) -> bool {
        matches!(self.authority, Authority::Signed(_))
    }
}

/// Bytes covered by a transfer signature.
pub fn transfer_message(from: &AccountId, to: &AccountId, amount: Coins, nonce: u64) -> Vec<u8> {
    let mut w = Writer::new();
    w.put_array(b"tfcp/transfer");
    w.put_array(from.as_bytes());
    w.put_array(to.as_bytes());
    w.put_u64(amount);
    w.put_u64(nonce);
    w.into_bytes()
}

/// Bytes covered by a publication signature.
pub fn publication_message(publisher: &AccountId, kind: DocumentKind, payload: &[u8]) -> Vec<u8> {
    let mut w = Writer::new();
    w.put_array(b"tfcp/publish");
    w.put_array(publisher.as_bytes());
    w.put_u8(kind.tag());
    w.put_bytes(payload);
    w.into_bytes()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PublishedDocument {
    pub seq: u64,
    pub publisher: AccountId,
    pub kind: DocumentKind,
    pub payload: Vec<u8>,
    pub signature: Signature,
    pub block: BlockHeight,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LedgerEvent {
    AccountCreated {
        account: AccountId,
        public_key: Option<PublicKey>,
        label: Option<String>,
        balance: Coins,
        block: BlockHeight,
    },
    Transfer(Transfer),
    Publication(PublishedDocument),
    FreezeChanged {
        account: AccountId,
        frozen: bool,
        block: BlockHeight,
    },
    BlockAdvanced {
        height: BlockHeight,
    },
}

impl LedgerEvent {
    pub fn block(&self) -> BlockHeight {
        match self {
            LedgerEvent::AccountCreated { block, .. } => *block,
            LedgerEvent::Transfer(t) => t.block,
            LedgerEvent::Publication(d) => d.block,
            LedgerEvent::FreezeChanged { block, .. } => *block,
            LedgerEvent::BlockAdvanced { height } => *height,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LedgerError {
    #[error("unknown account {0:?}")]
    UnknownAccount(AccountId),
    #[error("account {0:?} already exists")]
    DuplicateAccount(AccountId),
    #[error("insufficient balance: have {have}, need {need}")]
    InsufficientBalance { have: Coins, need: Coins },
    #[error("signature does not verify")]
    BadSignature,
    #[error("account {0:?} is frozen")]
    Frozen(AccountId),
    #[error("account {0:?} has no signing key")]
    Keyless(AccountId),
    #[error("block advance must be at least 1")]
    ZeroAdvance,
    #[error("payload does not parse as {kind:?}: {source}")]
    MalformedDocument {
        kind: DocumentKind,
        source: DecodeError,
    },
    #[error("replay diverged at event {0}")]
    ReplayDiverged(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Account {
    public_key: Option<PublicKey>,
    label: Option<String>,
    balance: Coins,
    nonce: u64,
    frozen: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[derive(Default)]
pub struct LedgerConfig {
    /// Debited from the publisher on every document publication and credited
    /// to the fee sink.
    pub publication_fee: Coins,
}


/// A timer that came due during [`Ledger::advance_block`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FiredTimer {
    pub height: BlockHeight,
    pub tag: u64,
}

/// Document query. Unset fields match everything.
#[derive(Debug, Clone, Default)]
pub struct DocumentFilter {
    pub kind: Option<DocumentKind>,
    pub publisher: Option<AccountId>,
    pub blocks: Option<RangeInclusive<u64>>,
}

impl DocumentFilter {
    pub fn kind(kind: DocumentKind) -> Self {
        Self {
            kind: Some(kind),
            ..Self::default()
        }
    }

    pub fn publisher(publisher: AccountId) -> Self {
        Self {
            publisher: Some(publisher),
            ..Self::default()
        }
    }

    pub fn with_kind(mut self, kind: DocumentKind) -> Self {
        self.kind = Some(kind);
        self
    }

    pub fn with_publisher(mut self, publisher: AccountId) -> Self {
        self.publisher = Some(publisher);
        self
    }

    pub fn in_blocks(mut self, blocks: RangeInclusive<u64>) -> Self {
        self.blocks = Some(blocks);
        self
    }

    pub fn up_to(self, block: BlockHeight) -> Self {
        self.in_blocks(0..=block.0)
    }

    fn matches(&self, doc: &PublishedDocument) -> bool {
        self.kind.is_none_or(|k| k == doc.kind)
            && self.publisher.is_none_or(|p| p == doc.publisher)
            && self
                .blocks
                .as_ref()
                .is_none_or(|r| r.contains(&doc.block.0))
    }
}

#[derive(Debug, Clone)]
pub struct Ledger {
    config: LedgerConfig,
    height: BlockHeight,
    accounts: BTreeMap<AccountId, Account>,
    transfers: Vec<Transfer>,
    documents: Vec<PublishedDocument>,
    history: Vec<LedgerEvent>,
    genesis_supply: Coins,
    fee_sink: AccountId,
    timers: BTreeMap<(BlockHeight, u64), u64>,
    timer_seq: u64,
    fired: Vec<FiredTimer>,
}

impl Default for Ledger {
    fn default() -> Self {
        Self::new(LedgerConfig::default())
    }
}

impl Ledger {
    pub const FEE_SINK_LABEL: &'static str = "network-fees";

    pub fn new(config: LedgerConfig) -> Self {
        let mut ledger = Self {
            config,
            height: BlockHeight(0),
            accounts: BTreeMap::new(),
            transfers: Vec::new(),
            documents: Vec::new(),
            history: Vec::new(),
            genesis_supply: 0,
            fee_sink: AccountId::system(Self::FEE_SINK_LABEL),
            timers: BTreeMap::new(),
            timer_seq: 0,
            fired: Vec::new(),
        };
        ledger
            .create_system_account(Self::FEE_SINK_LABEL, 0)
            .expect("fresh ledger has no accounts");
        ledger
    }

    pub fn config(&self) -> LedgerConfig {
        self.config
    }

    pub fn height(&self) -> BlockHeight {
        self.height
    }

    pub fn fee_sink(&self) -> AccountId {
        self.fee_sink
    }

    /// Coins minted into existence by account creation.
    pub fn total_supply(&self) -> Coins {
        self.genesis_supply
    }

    /// Sum of all balances; equals [`Ledger::total_supply`] at all times.
    pub fn circulating(&self) -> Coins {
        self.accounts.values().map(|a| a.balance).sum()
    }

    pub fn create_account(
        &mut self,
        public_key: &PublicKey,
        initial_balance: Coins,
    ) -> Result<AccountId, LedgerError> {
        let id = AccountId::of(public_key);
        self.insert_account(id, Some(*public_key), None, initial_balance)?;
        Ok(id)
    }

    /// Keyless account whose coins move only through protocol transfers.
    pub fn create_system_account(
        &mut self,
        label: &str,
        initial_balance: Coins,
    ) -> Result<AccountId, LedgerError> {
        let id = AccountId::system(label);
        self.insert_account(id, None, Some(label.to_string()), initial_balance)?;
        Ok(id)
    }

    fn insert_account(
        &mut self,
        id: AccountId,
        public_key: Option<PublicKey>,
        label: Option<String>,
        balance: Coins,
    ) -> Result<(), LedgerError> {
        if self.accounts.contains_key(&id) {
            return Err(LedgerError::DuplicateAccount(id));
        }
        self.accounts.insert(
            id,
            Account {
                public_key,
                label: label.clone(),
                balance,
                nonce: 0,
                frozen: false,
            },
        );
        self.genesis_supply += balance;
        self.history.push(LedgerEvent::AccountCreated {
            account: id,
            public_key,
            label,
            balance,
            block: self.height,
        });
        Ok(())
    }

    pub fn contains(&self, account: &AccountId) -> bool {
        self.accounts.contains_key(account)
    }

    fn account(&self, id: &AccountId) -> Result<&Account, LedgerError> {
        self.accounts
            .get(id)
            .ok_or(LedgerError::UnknownAccount(*id))
    }

    pub fn balance_of(&self, account: &AccountId) -> Result<Coins, LedgerError> {
        Ok(self.account(account)?.balance)
    }

    pub fn nonce_of(&self, account: &AccountId) -> Result<u64, LedgerError> {
        Ok(self.account(account)?.nonce)
    }

    pub fn is_frozen(&self, account: &AccountId) -> Result<bool, LedgerError> {
        Ok(self.account(account)?.frozen)
    }

    pub fn public_key_of(&self, account: &AccountId) -> Result<PublicKey, LedgerError> {
        self.account(account)?
            .public_key
            .ok_or(LedgerError::Keyless(*account))
    }

    pub fn is_system_account(&self, account: &AccountId) -> bool {
        self.accounts
            .get(account)
            .is_some_and(|a| a.public_key.is_none())
    }

    pub fn label_of(&self, account: &AccountId) -> Option<&str> {
        self.accounts.get(account).and_then(|a| a.label.as_deref())
    }

    pub fn account_ids(&self) -> impl Iterator<Item = &AccountId> {
        self.accounts.keys()
    }

    /// Signs with `secret_key` and submits. The signature is checked against
    /// the sender's registered public key, so a wrong key is rejected.
    pub fn submit_transfer(
        &mut self,
        from: AccountId,
        to: AccountId,
        amount: Coins,
        secret_key: &SecretKey,
    ) -> Result<Transfer, LedgerError> {
        let nonce = self.nonce_of(&from)?;
        let sig = crypto::sign(secret_key, &transfer_message(&from, &to, amount, nonce));
        self.submit_signed_transfer(from, to, amount, nonce, sig)
    }

    pub fn submit_signed_transfer(
        &mut self,
        from: AccountId,
        to: AccountId,
        amount: Coins,
        nonce: u64,
        signature: Signature,
    ) -> Result<Transfer, LedgerError> {
        let sender = self.account(&from)?;
        let pk = sender.public_key.ok_or(LedgerError::Keyless(from))?;
        if nonce != sender.nonce
            || !crypto::verify(
                &pk,
                &transfer_message(&from, &to, amount, nonce),
                &signature,
            )
        {
            return Err(LedgerError::BadSignature);
        }
        if sender.frozen {
            return Err(LedgerError::Frozen(from));
        }
        self.apply_transfer(from, to, amount, Authority::Signed(signature))
    }

    /// Protocol-enacted transfer: no signature, ignores freezing.
    pub fn protocol_transfer(
        &mut self,
        from: AccountId,
        to: AccountId,
        amount: Coins,
    ) -> Result<Transfer, LedgerError> {
        self.account(&from)?;
        self.apply_transfer(from, to, amount, Authority::Protocol)
    }

    fn apply_transfer(
        &mut self,
        from: AccountId,
        to: AccountId,
        amount: Coins,
        authority: Authority,
    ) -> Result<Transfer, LedgerError> {
        let have = self.account(&from)?.balance;
        if !self.accounts.contains_key(&to) {
            return Err(LedgerError::UnknownAccount(to));
        }
        if amount > have {
            return Err(LedgerError::InsufficientBalance { have, need: amount });
        }
        let sender = self.accounts.get_mut(&from).expect("checked above");
        let nonce = sender.nonce;
        sender.balance -= amount;
        if matches!(authority, Authority::Signed(_)) {
            sender.nonce += 1;
        }
        self.accounts.get_mut(&to).expect("checked above").balance += amount;
        let transfer = Transfer {
            seq: self.transfers.len() as u64,
            from,
            to,
            amount,
            nonce,
            authority,
            block: self.height,
        };
        self.transfers.push(transfer.clone());
        self.history.push(LedgerEvent::Transfer(transfer.clone()));
        Ok(transfer)
    }

    pub fn publish_document(
        &mut self,
        publisher: AccountId,
        kind: DocumentKind,
        payload: Vec<u8>,
        secret_key: &SecretKey,
    ) -> Result<PublishedDocument, LedgerError> {
        let sig = crypto::sign(secret_key, &publication_message(&publisher, kind, &payload));
        self.publish_signed_document(publisher, kind, payload, sig)
    }

    pub fn publish_signed_document(
        &mut self,
        publisher: AccountId,
        kind: DocumentKind,
        payload: Vec<u8>,
        signature: Signature,
    ) -> Result<PublishedDocument, LedgerError> {
        let pk = self.public_key_of(&publisher)?;
        if !crypto::verify(
            &pk,
            &publication_message(&publisher, kind, &payload),
            &signature,
        ) {
            return Err(LedgerError::BadSignature);
        }
        documents::check_payload(kind, &payload)
            .map_err(|source| LedgerError::MalformedDocument { kind, source })?;
        if self.config.publication_fee > 0 {
            self.apply_transfer(
                publisher,
                self.fee_sink,
                self.config.publication_fee,
                Authority::Protocol,
            )?;
        }
        let doc = PublishedDocument {
            seq: self.documents.len() as u64,
            publisher,
            kind,
            payload,
            signature,
            block: self.height,
        };
        self.documents.push(doc.clone());
        self.history.push(LedgerEvent::Publication(doc.clone()));
        Ok(doc)
    }

    pub fn freeze_account(&mut self, account: AccountId) -> Result<(), LedgerError> {
        self.set_frozen(account, true)
    }

    pub fn unfreeze_account(&mut self, account: AccountId) -> Result<(), LedgerError> {
        self.set_frozen(account, false)
    }

    fn set_frozen(&mut self, account: AccountId, frozen: bool) -> Result<(), LedgerError> {
        let acct = self
            .accounts
            .get_mut(&account)
            .ok_or(LedgerError::UnknownAccount(account))?;
        if acct.frozen != frozen {
            acct.frozen = frozen;
            self.history.push(LedgerEvent::FreezeChanged {
                account,
                frozen,
                block: self.height,
            });
        }
        Ok(())
    }

    /// Registers a callback tag to fire once the chain reaches `at`.
    pub fn schedule_timer(&mut self, at: BlockHeight, tag: u64) {
        self.timers.insert((at, self.timer_seq), tag);
        self.timer_seq += 1;
    }

    pub fn pending_timers(&self) -> usize {
        self.timers.len()
    }

    /// Advances `n` blocks. Timers due at each intermediate height fire in
    /// (height, registration order) and are queued for [`Ledger::take_fired`].
    pub fn advance_block(&mut self, n: u64) -> Result<BlockHeight, LedgerError> {
        if n < 1 {
            return Err(LedgerError::ZeroAdvance);
        }
        for _ in 0..n {
            self.height = self.height + 1;
            while let Some(entry) = self.timers.first_entry() {
                if entry.key().0 > self.height {
                    break;
                }
                let tag = entry.remove();
                self.fired.push(FiredTimer {
                    height: self.height,
                    tag,
                });
            }
        }
        self.history.push(LedgerEvent::BlockAdvanced {
            height: self.height,
        });
        Ok(self.height)
    }

    pub fn take_fired(&mut self) -> Vec<FiredTimer> {
        std::mem::take(&mut self.fired)
    }

    pub fn documents_by(&self, filter: &DocumentFilter) -> Vec<&PublishedDocument> {
        self.documents
            .iter()
            .filter(|d| filter.matches(d))
            .collect()
    }

    pub fn documents(&self) -> &[PublishedDocument] {
        &self.documents
    }

    pub fn document(&self, seq: u64) -> Option<&PublishedDocument> {
        self.documents.get(seq as usize)
    }

    pub fn transfers(&self) -> &[Transfer] {
        &self.transfers
    }

    pub fn transfer(&self, seq: u64) -> Option<&Transfer> {
        self.transfers.get(seq as usize)
    }

    pub fn history(&self) -> &[LedgerEvent] {
        &self.history
    }

    /// Rebuilds a ledger from an event log, re-verifying every signature.
    pub fn replay(config: LedgerConfig, events: &[LedgerEvent]) -> Result<Ledger, LedgerError> {
        let mut ledger = Ledger {
            config,
            height: BlockHeight(0),
            accounts: BTreeMap::new(),
            transfers: Vec::new(),
            documents: Vec::new(),
            history: Vec::new(),
            genesis_supply: 0,
            fee_sink: AccountId::system(Self::FEE_SINK_LABEL),
            timers: BTreeMap::new(),
            timer_seq: 0,
            fired: Vec::new(),
        };
        for (i, event) in events.iter().enumerate() {
            let diverged = |_| LedgerError::ReplayDiverged(i);
            if event.block() != ledger.height && !matches!(event, LedgerEvent::BlockAdvanced { .. })
            {
                return Err(LedgerError::ReplayDiverged(i));
            }
            match event {
                LedgerEvent::AccountCreated {
                    account,
                    public_key,
                    label,
                    balance,
                    ..
                } => {
                    ledger.insert_account(*account, *public_key, label.clone(), *balance)?;
                }
                LedgerEvent::Transfer(t) => {
                    // publication fees are replayed by the publication itself
                    let next_is_fee = t.to == ledger.fee_sink
                        && !t.is_signed()
                        && config.publication_fee > 0
                        && t.amount == config.publication_fee
                        && matches!(events.get(i + 1), Some(LedgerEvent::Publication(d)) if d.publisher == t.from);
                    if next_is_fee {
                        continue;
                    }
                    let replayed = match t.authority {
                        Authority::Signed(sig) => ledger
                            .submit_signed_transfer(t.from, t.to, t.amount, t.nonce, sig)
                            .map_err(diverged)?,
                        Authority::Protocol => ledger
                            .protocol_transfer(t.from, t.to, t.amount)
                            .map_err(diverged)?,
                    };
                    if &replayed != t {
                        return Err(LedgerError::ReplayDiverged(i));
                    }
                }
                LedgerEvent::Publication(d) => {
                    let replayed = ledger
                        .publish_signed_document(
                            d.publisher,
                            d.kind,
                            d.payload.clone(),
                            d.signature,
                        )
                        .map_err(diverged)?;
                    if &replayed != d {
                        return Err(LedgerError::ReplayDiverged(i));
                    }
                }
                LedgerEvent::FreezeChanged {
                    account, frozen, ..
                } => {
                    ledger.set_frozen(*account, *frozen)?;
                }
                LedgerEvent::BlockAdvanced { height } => {
                    if *height <= ledger.height {
                        return Err(LedgerError::ReplayDiverged(i));
                    }
                    ledger.advance_block(height.0 - ledger.height.0)?;
                }
            }
        }
        Ok(ledger)
    }

    /// Canonical serialization of the full public state.
    pub fn state_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.put_u64(self.height.0);
        w.put_u64(self.genesis_supply);
        w.put_u32(self.accounts.len() as u32);
        for (id, a) in &self.accounts {
            w.put_array(id.as_bytes());
            w.put_bool(a.public_key.is_some());
            if let Some(pk) = &a.public_key {
                w.put_array(pk.as_bytes());
            }
            w.put_u64(a.balance);
            w.put_u64(a.nonce);
            w.put_bool(a.frozen);
        }
        w.put_u32(self.transfers.len() as u32);
        for t in &self.transfers {
            w.put_array(t.from.as_bytes());
            w.put_array(t.to.as_bytes());
            w.put_u64(t.amount);
            w.put_u64(t.nonce);
            w.put_u64(t.block.0);
            match &t.authority {
                Authority::Signed(sig) => {
                    w.put_u8(1);
                    w.put_array(sig.as_bytes());
                }
                Authority::Protocol => w.put_u8(0),
            }
        }
        w.put_u32(self.documents.len() as u32);
        for d in &self.documents {
            w.put_array(d.publisher.as_bytes());
            w.put_u8(d.kind.tag());
            w.put_bytes(&d.payload);
            w.put_array(d.signature.as_bytes());
            w.put_u64(d.block.0);
        }
        w.into_bytes()
    }

    /// Accounts that sent at least one signed transfer within `blocks`.
    pub fn active_senders(&self, blocks: RangeInclusive<u64>) -> BTreeSet<AccountId> {
        self.transfers
            .iter()
            .filter(|t| t.is_signed() && blocks.contains(&t.block.0))
            .map(|t| t.from)
            .collect()
    }
}

//! The public documents of a protocol instance and their canonical encoding.
//!
//! Field order is fixed and every variable-length field is length-prefixed.
//! The donor signs the hash of the Wills content before anything is
//! published, so the encoding must be byte-stable: the Wills produced by
//! stripping a pre-Wills has to hash to exactly what the donor signed.

use std::fmt;
use std::ops::Range;

use thiserror::Error;

use crate::codec::{DecodeError, Reader, Wire, Writer};
use crate::crypto::{
    self, decrypt, encrypt, hash_parts, Ciphertext, Digest, KeyPair, PublicKey, SharedKey,
    Signature, SIGNATURE_LEN,
};
use crate::ledger::{
    AccountId, BlockHeight, Coins, DocumentFilter, DocumentKind, Ledger, PublishedDocument,
};

/// Associated data binding the encrypted donor address to its role.
pub const DONOR_CONTEXT: &[u8] = b"TFCP-donor";
pub const HERITAGE_CONTEXT: &[u8] = b"TFCP-heritage";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DocumentError {
    #[error("threshold must be at least 1")]
    ZeroThreshold,
    #[error("acceptable registrar list is present but empty")]
    EmptyRegistrarList,
    #[error("threshold amount must be positive")]
    ZeroThresholdAmount,
    #[error("malformed document: {0}")]
    Malformed(#[from] DecodeError),
    #[error("document is a {found:?}, expected {expected:?}")]
    WrongKind {
        expected: DocumentKind,
        found: DocumentKind,
    },
}

fn put_account(w: &mut Writer, id: &AccountId) {
    w.put_array(id.as_bytes());
}

fn get_account(r: &mut Reader<'_>) -> Result<AccountId, DecodeError> {
    Ok(AccountId::from_bytes(r.get_array::<32>()?))
}

fn get_signature(r: &mut Reader<'_>) -> Result<Signature, DecodeError> {
    Ok(Signature::from_bytes(r.get_array::<SIGNATURE_LEN>()?))
}

fn get_ciphertext(r: &mut Reader<'_>) -> Result<Ciphertext, DecodeError> {
    Ciphertext::decode(&r.get_bytes()?)
}

/// Setup document published by the Security Deposit to recruit registrars.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreWills {
    pub encrypted_donor_address: Ciphertext,
    pub security_deposit: AccountId,
    pub threshold_t: u32,
    pub acceptable_registrars: Option<Vec<AccountId>>,
    pub registrar_fee: Coins,
    /// Opaque succession instructions, sealed under the shared key.
    pub sealed_heritage: Ciphertext,
    pub donor_signature_of_wills_hash: Signature,
}

/// The pre-Wills without its acceptable-registrar list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Wills {
    pub encrypted_donor_address: Ciphertext,
    pub security_deposit: AccountId,
    pub threshold_t: u32,
    pub registrar_fee: Coins,
    pub sealed_heritage: Ciphertext,
    pub donor_signature_of_wills_hash: Signature,
}

fn wills_content_hash(
    encrypted_donor_address: &Ciphertext,
    security_deposit: &AccountId,
    threshold_t: u32,
    registrar_fee: Coins,
    sealed_heritage: &Ciphertext,
) -> Digest {
    hash_parts(&[
        b"tfcp/wills-content",
        &encrypted_donor_address.encode(),
        security_deposit.as_bytes(),
        &threshold_t.to_be_bytes(),
        &registrar_fee.to_be_bytes(),
        &sealed_heritage.encode(),
    ])
}

impl Wills {
    /// Digest the donor signs: every Wills field except the signature itself.
    pub fn content_hash(&self) -> Digest {
        wills_content_hash(
            &self.encrypted_donor_address,
            &self.security_deposit,
            self.threshold_t,
            self.registrar_fee,
            &self.sealed_heritage,
        )
    }
}

impl PreWills {
    fn encode_head(&self, w: &mut Writer) {
        w.put_bytes(&self.encrypted_donor_address.encode());
        put_account(w, &self.security_deposit);
        w.put_u32(self.threshold_t);
    }

    fn encode_list(&self, w: &mut Writer) {
        match &self.acceptable_registrars {
            None => w.put_u8(0),
            Some(list) => {
                w.put_u8(1);
                w.put_u32(list.len() as u32);
                for id in list {
                    put_account(w, id);
                }
            }
        }
    }

    /// Byte range of the registrar list inside [`Wire::encode`] output.
    pub fn registrar_list_region(&self) -> Range<usize> {
        let mut w = Writer::new();
        w.put_u8(0);
        w.put_u8(0);
        self.encode_head(&mut w);
        let start = w.len();
        self.encode_list(&mut w);
        start..w.len()
    }

    pub fn accepts(&self, registrar: &AccountId) -> bool {
        self.acceptable_registrars
            .as_ref()
            .is_none_or(|l| l.contains(registrar))
    }
}

impl Wire for PreWills {
    const TAG: u8 = DocumentKind::PreWills as u8;

    fn encode_body(&self, w: &mut Writer) {
        self.encode_head(w);
        self.encode_list(w);
        w.put_u64(self.registrar_fee);
        w.put_bytes(&self.sealed_heritage.encode());
        w.put_array(self.donor_signature_of_wills_hash.as_bytes());
    }

    fn decode_body(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let encrypted_donor_address = get_ciphertext(r)?;
        let security_deposit = get_account(r)?;
        let threshold_t = r.get_u32()?;
        let acceptable_registrars = if r.get_bool()? {
            let n = r.get_count(32)?;
            Some(
                (0..n)
                    .map(|_| get_account(r))
                    .collect::<Result<Vec<_>, _>>()?,
            )
        } else {
            None
        };
        Ok(Self {
            encrypted_donor_address,
            security_deposit,
            threshold_t,
            acceptable_registrars,
            registrar_fee: r.get_u64()?,
            sealed_heritage: get_ciphertext(r)?,
            donor_signature_of_wills_hash: get_signature(r)?,
        })
    }
}

impl Wire for Wills {
    const TAG: u8 = DocumentKind::Wills as u8;

    fn encode_body(&self, w: &mut Writer) {
        w.put_bytes(&self.encrypted_donor_address.encode());
        put_account(w, &self.security_deposit);
        w.put_u32(self.threshold_t);
        w.put_u64(self.registrar_fee);
        w.put_bytes(&self.sealed_heritage.encode());
        w.put_array(self.donor_signature_of_wills_hash.as_bytes());
    }

    fn decode_body(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(Self {
            encrypted_donor_address: get_ciphertext(r)?,
            security_deposit: get_account(r)?,
            threshold_t: r.get_u32()?,
            registrar_fee: r.get_u64()?,
            sealed_heritage: get_ciphertext(r)?,
            donor_signature_of_wills_hash: get_signature(r)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CivilIdentity {
    pub name: String,
    pub birth_date: String,
    pub birth_place: String,
    pub extra_ids: Vec<String>,
}

/// Public document binding a civil identity to a Security Deposit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Announcement {
    pub civil_identity: CivilIdentity,
    pub wills_reference: BlockHeight,
    pub security_deposit: AccountId,
    pub witness_fees: Coins,
    pub deliberation_time: u64,
    pub threshold_amount: Coins,
    /// Distinct witnesses required before deliberation may start.
    pub min_distinct_witnesses: u32,
    /// Blocks between the first and last counted ante.
    pub min_signaling_span: u64,
}

impl Wire for Announcement {
    const TAG: u8 = DocumentKind::Announcement as u8;

    fn encode_body(&self, w: &mut Writer) {
        let c = &self.civil_identity;
        w.put_str(&c.name);
        w.put_str(&c.birth_date);
        w.put_str(&c.birth_place);
        w.put_u32(c.extra_ids.len() as u32);
        for id in &c.extra_ids {
            w.put_str(id);
        }
        w.put_u64(self.wills_reference.0);
        put_account(w, &self.security_deposit);
        w.put_u64(self.witness_fees);
        w.put_u64(self.deliberation_time);
        w.put_u64(self.threshold_amount);
        w.put_u32(self.min_distinct_witnesses);
        w.put_u64(self.min_signaling_span);
    }

    fn decode_body(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let name = r.get_str()?;
        let birth_date = r.get_str()?;
        let birth_place = r.get_str()?;
        let n = r.get_count(4)?;
        let extra_ids = (0..n).map(|_| r.get_str()).collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            civil_identity: CivilIdentity {
                name,
                birth_date,
                birth_place,
                extra_ids,
            },
            wills_reference: BlockHeight(r.get_u64()?),
            security_deposit: get_account(r)?,
            witness_fees: r.get_u64()?,
            deliberation_time: r.get_u64()?,
            threshold_amount: r.get_u64()?,
            min_distinct_witnesses: r.get_u32()?,
            min_signaling_span: r.get_u64()?,
        })
    }
}

/// Decrypted Wills, published by the revealing registrars.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PublicWills {
    pub donor: AccountId,
    pub original_wills_block: BlockHeight,
    pub revealing_registrars: Vec<AccountId>,
    /// Once the death is acknowledged the key is no longer secret; publishing
    /// it lets anyone re-run the decryption.
    pub revealed_key: SharedKey,
}

impl Wire for PublicWills {
    const TAG: u8 = DocumentKind::PublicWills as u8;

    fn encode_body(&self, w: &mut Writer) {
        put_account(w, &self.donor);
        w.put_u64(self.original_wills_block.0);
        w.put_u32(self.revealing_registrars.len() as u32);
        for id in &self.revealing_registrars {
            put_account(w, id);
        }
        w.put_array(self.revealed_key.as_bytes());
    }

    fn decode_body(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let donor = get_account(r)?;
        let original_wills_block = BlockHeight(r.get_u64()?);
        let n = r.get_count(32)?;
        let revealing_registrars = (0..n)
            .map(|_| get_account(r))
            .collect::<Result<Vec<_>, _>>()?;
        let revealed_key = SharedKey::from_bytes(r.get_array::<32>()?);
        Ok(Self {
            donor,
            original_wills_block,
            revealing_registrars,
            revealed_key,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegistrarAcceptance {
    pub registrar: AccountId,
    pub security_deposit: AccountId,
    pub pre_wills_digest: Digest,
}

impl Wire for RegistrarAcceptance {
    const TAG: u8 = DocumentKind::RegistrarAcceptance as u8;

    fn encode_body(&self, w: &mut Writer) {
        put_account(w, &self.registrar);
        put_account(w, &self.security_deposit);
        w.put_array(self.pre_wills_digest.as_bytes());
    }

    fn decode_body(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(Self {
            registrar: get_account(r)?,
            security_deposit: get_account(r)?,
            pre_wills_digest: Digest::from_bytes(r.get_array::<32>()?),
        })
    }
}

/// Public record of a registrar's bail, so donors can pick registrars whose
/// bail runs far enough into the future.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BailDeclaration {
    pub registrar: AccountId,
    pub amount: Coins,
    pub expiry: BlockHeight,
}

impl Wire for BailDeclaration {
    const TAG: u8 = DocumentKind::BailCommitment as u8;

    fn encode_body(&self, w: &mut Writer) {
        put_account(w, &self.registrar);
        w.put_u64(self.amount);
        w.put_u64(self.expiry.0);
    }

    fn decode_body(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(Self {
            registrar: get_account(r)?,
            amount: r.get_u64()?,
            expiry: BlockHeight(r.get_u64()?),
        })
    }
}

/// Checks that `payload` decodes as `kind`.
pub fn check_payload(kind: DocumentKind, payload: &[u8]) -> Result<(), DecodeError> {
    match kind {
        DocumentKind::PreWills => PreWills::decode(payload).map(drop),
        DocumentKind::Wills => Wills::decode(payload).map(drop),
        DocumentKind::Announcement => Announcement::decode(payload).map(drop),
        DocumentKind::PublicWills => PublicWills::decode(payload).map(drop),
        DocumentKind::RegistrarAcceptance => RegistrarAcceptance::decode(payload).map(drop),
        DocumentKind::BailCommitment => BailDeclaration::decode(payload).map(drop),
    }
}

/// Any document, decoded according to its kind.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Document {
    PreWills(PreWills),
    Wills(Wills),
    Announcement(Announcement),
    PublicWills(PublicWills),
    RegistrarAcceptance(RegistrarAcceptance),
    BailCommitment(BailDeclaration),
}

impl Document {
    pub fn decode(kind: DocumentKind, payload: &[u8]) -> Result<Self, DecodeError> {
        Ok(match kind {
            DocumentKind::PreWills => Document::PreWills(PreWills::decode(payload)?),
            DocumentKind::Wills => Document::Wills(Wills::decode(payload)?),
            DocumentKind::Announcement => Document::Announcement(Announcement::decode(payload)?),
            DocumentKind::PublicWills => Document::PublicWills(PublicWills::decode(payload)?),
            DocumentKind::RegistrarAcceptance => {
                Document::RegistrarAcceptance(RegistrarAcceptance::decode(payload)?)
            }
            DocumentKind::BailCommitment => {
                Document::BailCommitment(BailDeclaration::decode(payload)?)
            }
        })
    }

    /// Decodes from the self-describing form: the type tag picks the kind.
    pub fn decode_any(bytes: &[u8]) -> Result<Self, DecodeError> {
        let tag = *bytes.get(1).ok_or(DecodeError::UnexpectedEof {
            needed: 2,
            offset: 0,
        })?;
        let kind = DocumentKind::ALL
            .into_iter()
            .find(|k| k.tag() == tag)
            .ok_or(DecodeError::Invalid("unknown document tag"))?;
        Self::decode(kind, bytes)
    }

    pub fn encode(&self) -> Vec<u8> {
        match self {
            Document::PreWills(d) => d.encode(),
            Document::Wills(d) => d.encode(),
            Document::Announcement(d) => d.encode(),
            Document::PublicWills(d) => d.encode(),
            Document::RegistrarAcceptance(d) => d.encode(),
            Document::BailCommitment(d) => d.encode(),
        }
    }
}

impl fmt::Display for Document {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Document::PreWills(d) => write!(
                f,
                "{{\"kind\": \"PreWills\", \"encrypted_donor_address\": \"{}\", \"security_deposit\": \"{}\", \"threshold_t\": {}, \"acceptable_registrars\": {}, \"registrar_fee\": {}}}",
                hex::encode(d.encrypted_donor_address.encode()),
                d.security_deposit,
                d.threshold_t,
                d.acceptable_registrars
                    .as_ref()
                    .map_or("null".to_string(), |l| format!("{}", l.len())),
                d.registrar_fee
            ),
            Document::Wills(d) => write!(
                f,
                "{{\"kind\": \"Wills\", \"encrypted_donor_address\": \"{}\", \"security_deposit\": \"{}\", \"threshold_t\": {}, \"registrar_fee\": {}}}",
                hex::encode(d.encrypted_donor_address.encode()),
                d.security_deposit,
                d.threshold_t,
                d.registrar_fee
            ),
            Document::Announcement(d) => write!(
                f,
                "{{\"kind\": \"Announcement\", \"name\": {:?}, \"wills_reference\": {}, \"security_deposit\": \"{}\", \"witness_fees\": {}, \"deliberation_time\": {}, \"threshold_amount\": {}}}",
                d.civil_identity.name,
                d.wills_reference,
                d.security_deposit,
                d.witness_fees,
                d.deliberation_time,
                d.threshold_amount
            ),
            Document::PublicWills(d) => write!(
                f,
                "{{\"kind\": \"PublicWills\", \"donor\": \"{}\", \"original_wills_block\": {}, \"revealing_registrars\": {}}}",
                d.donor,
                d.original_wills_block,
                d.revealing_registrars.len()
            ),
            Document::RegistrarAcceptance(d) => write!(
                f,
                "{{\"kind\": \"RegistrarAcceptance\", \"registrar\": \"{}\", \"security_deposit\": \"{}\"}}",
                d.registrar, d.security_deposit
            ),
            Document::BailCommitment(d) => write!(
                f,
                "{{\"kind\": \"BailCommitment\", \"registrar\": \"{}\", \"amount\": {}, \"expiry\": {}}}",
                d.registrar, d.amount, d.expiry
            ),
        }
    }
}

/// Builds the pre-Wills and the donor's signature over the future Wills.
pub fn build_pre_wills(
    donor_keys: &KeyPair,
    security_deposit: AccountId,
    shared_key: &SharedKey,
    threshold_t: u32,
    acceptable_registrars: Option<Vec<AccountId>>,
    registrar_fee: Coins,
    heritage: &[u8],
) -> Result<PreWills, DocumentError> {
    if threshold_t < 1 {
        return Err(DocumentError::ZeroThreshold);
    }
    if acceptable_registrars.as_ref().is_some_and(Vec::is_empty) {
        return Err(DocumentError::EmptyRegistrarList);
    }
    let donor = AccountId::of(&donor_keys.public_key);
    let encrypted_donor_address = encrypt(shared_key, donor.as_bytes(), DONOR_CONTEXT);
    let sealed_heritage = encrypt(shared_key, heritage, HERITAGE_CONTEXT);
    let digest = wills_content_hash(
        &encrypted_donor_address,
        &security_deposit,
        threshold_t,
        registrar_fee,
        &sealed_heritage,
    );
    let donor_signature_of_wills_hash = crypto::sign(&donor_keys.secret_key, digest.as_bytes());
    Ok(PreWills {
        encrypted_donor_address,
        security_deposit,
        threshold_t,
        acceptable_registrars,
        registrar_fee,
        sealed_heritage,
        donor_signature_of_wills_hash,
    })
}

pub fn strip_to_wills(pre: &PreWills) -> Wills {
    Wills {
        encrypted_donor_address: pre.encrypted_donor_address.clone(),
        security_deposit: pre.security_deposit,
        threshold_t: pre.threshold_t,
        registrar_fee: pre.registrar_fee,
        sealed_heritage: pre.sealed_heritage.clone(),
        donor_signature_of_wills_hash: pre.donor_signature_of_wills_hash,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Check {
    SecurityDepositSignature,
    FeeMinimum,
    Threshold,
    RegistrarList,
    DonorSignature,
    WillsReference,
    ThresholdAmount,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CheckOutcome {
    Pass,
    Fail(String),
    /// Cannot be decided with the information available at this stage.
    Uncheckable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flag {
    /// No adjudication window: liveness moves cannot abort.
    ZeroDeliberation,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ValidationReport {
    pub checks: Vec<(Check, CheckOutcome)>,
    pub flags: Vec<Flag>,
}

impl ValidationReport {
    fn record(&mut self, check: Check, ok: bool, why: impl Into<String>) {
        let outcome = if ok {
            CheckOutcome::Pass
        } else {
            CheckOutcome::Fail(why.into())
        };
        self.checks.push((check, outcome));
    }

    pub fn is_valid(&self) -> bool {
        !self
            .checks
            .iter()
            .any(|(_, o)| matches!(o, CheckOutcome::Fail(_)))
    }

    pub fn outcome(&self, check: Check) -> Option<&CheckOutcome> {
        self.checks
            .iter()
            .find(|(c, _)| *c == check)
            .map(|(_, o)| o)
    }
}

fn publisher_signature_ok(doc: &PublishedDocument, ledger: &Ledger) -> bool {
    ledger.public_key_of(&doc.publisher).is_ok_and(|pk| {
        crypto::verify(
            &pk,
            &crate::ledger::publication_message(&doc.publisher, doc.kind, &doc.payload),
            &doc.signature,
        )
    })
}

fn expect_kind(doc: &PublishedDocument, expected: DocumentKind) -> Result<(), DocumentError> {
    if doc.kind != expected {
        return Err(DocumentError::WrongKind {
            expected,
            found: doc.kind,
        });
    }
    Ok(())
}

/// What a registrar can check on receiving a pre-Wills. The donor signature
/// is reported as uncheckable: the donor stays anonymous until the reveal.
pub fn validate_pre_wills(
    doc: &PublishedDocument,
    ledger: &Ledger,
    min_registrar_fee: Coins,
) -> Result<ValidationReport, DocumentError> {
    expect_kind(doc, DocumentKind::PreWills)?;
    let pre = PreWills::decode(&doc.payload)?;
    let mut report = ValidationReport::default();
    report.record(
        Check::SecurityDepositSignature,
        doc.publisher == pre.security_deposit && publisher_signature_ok(doc, ledger),
        "not signed by the named security deposit",
    );
    report.record(
        Check::FeeMinimum,
        pre.registrar_fee >= min_registrar_fee,
        format!(
            "fee {} below minimum {}",
            pre.registrar_fee, min_registrar_fee
        ),
    );
    let list_len = pre.acceptable_registrars.as_ref().map(Vec::len);
    report.record(
        Check::Threshold,
        pre.threshold_t >= 1
            && pre.threshold_t <= 255
            && list_len.is_none_or(|n| pre.threshold_t as usize <= n),
        format!("threshold {} unusable", pre.threshold_t),
    );
    let list_ok = pre.acceptable_registrars.as_ref().is_none_or(|l| {
        let mut sorted = l.clone();
        sorted.sort();
        sorted.dedup();
        !l.is_empty() && sorted.len() == l.len()
    });
    report.record(
        Check::RegistrarList,
        list_ok,
        "registrar list empty or has duplicates",
    );
    report
        .checks
        .push((Check::DonorSignature, CheckOutcome::Uncheckable));
    Ok(report)
}

#[allow(clippy::too_many_arguments)]
pub fn build_announcement(
    civil_identity: CivilIdentity,
    wills_reference: BlockHeight,
    security_deposit: AccountId,
    witness_fees: Coins,
    deliberation_time: u64,
    threshold_amount: Coins,
    min_distinct_witnesses: u32,
    min_signaling_span: u64,
) -> Result<Announcement, DocumentError> {
    if threshold_amount == 0 {
        return Err(DocumentError::ZeroThresholdAmount);
    }
    Ok(Announcement {
        civil_identity,
        wills_reference,
        security_deposit,
        witness_fees,
        deliberation_time,
        threshold_amount,
        min_distinct_witnesses,
        min_signaling_span,
    })
}

pub fn validate_announcement(
    doc: &PublishedDocument,
    ledger: &Ledger,
) -> Result<ValidationReport, DocumentError> {
    expect_kind(doc, DocumentKind::Announcement)?;
    let ann = Announcement::decode(&doc.payload)?;
    let mut report = ValidationReport::default();
    report.record(
        Check::SecurityDepositSignature,
        doc.publisher == ann.security_deposit && publisher_signature_ok(doc, ledger),
        "not signed by the named security deposit",
    );
    let wills_at_ref = ledger.documents_by(
        &DocumentFilter::kind(DocumentKind::Wills)
            .with_publisher(ann.security_deposit)
            .in_blocks(ann.wills_reference.0..=ann.wills_reference.0),
    );
    report.record(
        Check::WillsReference,
        !wills_at_ref.is_empty(),
        format!(
            "no Wills by the security deposit at block {}",
            ann.wills_reference
        ),
    );
    report.record(
        Check::ThresholdAmount,
        ann.threshold_amount > 0,
        "threshold amount is zero",
    );
    if ann.deliberation_time == 0 {
        report.flags.push(Flag::ZeroDeliberation);
    }
    Ok(report)
}

/// True iff the donor's signature over the Wills verifies and the revealed
/// key decrypts the Wills to exactly `pw.donor`.
pub fn verify_public_wills(pw: &PublicWills, wills: &Wills, donor_public_key: &PublicKey) -> bool {
    if AccountId::of(donor_public_key) != pw.donor {
        return false;
    }
    if !crypto::verify(
        donor_public_key,
        wills.content_hash().as_bytes(),
        &wills.donor_signature_of_wills_hash,
    ) {
        return false;
    }
    decrypt(
        &pw.revealed_key,
        &wills.encrypted_donor_address,
        DONOR_CONTEXT,
    )
    .is_ok_and(|plain| plain.as_slice() == pw.donor.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::keygen;
    use proptest::prelude::*;

    struct Fixture {
        donor: KeyPair,
        sd: KeyPair,
        key: SharedKey,
        registrars: Vec<AccountId>,
    }

    fn fixture() -> Fixture {
        Fixture {
            donor: keygen(&[1; 32]).unwrap(),
            sd: keygen(&[2; 32]).unwrap(),
            key: SharedKey::from_bytes([3; 32]),
            registrars: (10..13u8)
                .map(|b| AccountId::of(&keygen(&[b; 32]).unwrap().public_key))
                .collect(),
        }
    }

    fn pre(f: &Fixture, list: Option<Vec<AccountId>>) -> PreWills {
        build_pre_wills(
            &f.donor,
            AccountId::of(&f.sd.public_key),
            &f.key,
            2,
            list,
            100,
            b"to my cat",
        )
        .unwrap()
    }

    fn public_wills(f: &Fixture) -> PublicWills {
        PublicWills {
            donor: AccountId::of(&f.donor.public_key),
            original_wills_block: BlockHeight(4),
            revealing_registrars: f.registrars[..2].to_vec(),
            revealed_key: f.key.clone(),
        }
    }

    #[test]
    fn full_pipeline_signature_verifies() {
        let f = fixture();
        let p = pre(&f, Some(f.registrars.clone()));
        let wills = strip_to_wills(&p);
        assert!(verify_public_wills(
            &public_wills(&f),
            &wills,
            &f.donor.public_key
        ));
    }

    #[test]
    fn encrypted_donor_decrypts_to_donor() {
        let f = fixture();
        let p = pre(&f, None);
        let plain = decrypt(&f.key, &p.encrypted_donor_address, DONOR_CONTEXT).unwrap();
        assert_eq!(
            plain,
            AccountId::of(&f.donor.public_key).as_bytes().to_vec()
        );
    }

    #[test]
    fn absent_list_accepts_anyone() {
        let f = fixture();
        let p = pre(&f, None);
        assert!(p.accepts(&AccountId::system("anyone")));
        let listed = pre(&f, Some(vec![f.registrars[0]]));
        assert!(listed.accepts(&f.registrars[0]));
        assert!(!listed.accepts(&f.registrars[1]));
    }

    #[test]
    fn build_rejects_bad_parameters() {
        let f = fixture();
        let sd = AccountId::of(&f.sd.public_key);
        assert_eq!(
            build_pre_wills(&f.donor, sd, &f.key, 0, None, 1, b""),
            Err(DocumentError::ZeroThreshold)
        );
        assert_eq!(
            build_pre_wills(&f.donor, sd, &f.key, 1, Some(vec![]), 1, b""),
            Err(DocumentError::EmptyRegistrarList)
        );
        assert_eq!(
            build_announcement(CivilIdentity::default(), BlockHeight(1), sd, 0, 0, 0, 2, 0),
            Err(DocumentError::ZeroThresholdAmount)
        );
    }

    #[test]
    fn stripped_wills_has_no_list_and_hash_matches_signature() {
        let f = fixture();
        let p = pre(&f, Some(f.registrars.clone()));
        let w = strip_to_wills(&p);
        assert_eq!(w.security_deposit, p.security_deposit);
        assert!(crypto::verify(
            &f.donor.public_key,
            w.content_hash().as_bytes(),
            &p.donor_signature_of_wills_hash
        ));
        let again = strip_to_wills(&PreWills::decode(&p.encode()).unwrap());
        assert_eq!(Wills::decode(&again.encode()).unwrap(), w);
    }

    #[test]
    fn verify_public_wills_rejects_substitution_and_forgery() {
        let f = fixture();
        let w = strip_to_wills(&pre(&f, None));
        let mut pw = public_wills(&f);
        let impostor = keygen(&[77; 32]).unwrap();
        pw.donor = AccountId::of(&impostor.public_key);
        assert!(!verify_public_wills(&pw, &w, &impostor.public_key));

        let mut forged = w.clone();
        forged.donor_signature_of_wills_hash =
            crypto::sign(&impostor.secret_key, forged.content_hash().as_bytes());
        assert!(!verify_public_wills(
            &public_wills(&f),
            &forged,
            &f.donor.public_key
        ));

        let mut wrong_key = public_wills(&f);
        wrong_key.revealed_key = SharedKey::from_bytes([0; 32]);
        assert!(!verify_public_wills(&wrong_key, &w, &f.donor.public_key));
    }

    fn ledger_with_sd(f: &Fixture) -> (Ledger, AccountId) {
        let mut l = Ledger::default();
        let sd = l.create_account(&f.sd.public_key, 500).unwrap();
        (l, sd)
    }

    #[test]
    fn pre_wills_validation() {
        let f = fixture();
        let (mut l, sd) = ledger_with_sd(&f);
        let p = pre(&f, Some(f.registrars.clone()));
        let doc = l
            .publish_document(sd, DocumentKind::PreWills, p.encode(), &f.sd.secret_key)
            .unwrap();
        let report = validate_pre_wills(&doc, &l, 50).unwrap();
        assert!(report.is_valid());
        assert_eq!(
            report.outcome(Check::DonorSignature),
            Some(&CheckOutcome::Uncheckable)
        );

        let mut stripped = doc.clone();
        stripped.signature = Signature::from_bytes([0; 64]);
        let report = validate_pre_wills(&stripped, &l, 50).unwrap();
        assert!(!report.is_valid());

        assert!(!validate_pre_wills(&doc, &l, 101).unwrap().is_valid());

        let mut zero = p.clone();
        zero.threshold_t = 0;
        let doc0 = l
            .publish_document(sd, DocumentKind::PreWills, zero.encode(), &f.sd.secret_key)
            .unwrap();
        assert!(!validate_pre_wills(&doc0, &l, 0).unwrap().is_valid());

        let mut garbled = doc.clone();
        garbled.payload.truncate(10);
        assert!(matches!(
            validate_pre_wills(&garbled, &l, 0),
            Err(DocumentError::Malformed(_))
        ));
    }

    #[test]
    fn announcement_validation() {
        let f = fixture();
        let (mut l, sd) = ledger_with_sd(&f);
        let w = strip_to_wills(&pre(&f, None));
        l.advance_block(2).unwrap();
        let wdoc = l
            .publish_document(sd, DocumentKind::Wills, w.encode(), &f.sd.secret_key)
            .unwrap();
        let civil = CivilIdentity {
            name: "Ada".into(),
            ..Default::default()
        };
        let ann = build_announcement(civil.clone(), wdoc.block, sd, 10, 5, 100, 2, 5).unwrap();
        let adoc = l
            .publish_document(
                sd,
                DocumentKind::Announcement,
                ann.encode(),
                &f.sd.secret_key,
            )
            .unwrap();
        let report = validate_announcement(&adoc, &l).unwrap();
        assert!(report.is_valid());
        assert!(report.flags.is_empty());

        // zero deliberation is valid but flagged
        let ann0 = build_announcement(civil.clone(), wdoc.block, sd, 10, 0, 100, 2, 0).unwrap();
        let adoc0 = l
            .publish_document(
                sd,
                DocumentKind::Announcement,
                ann0.encode(),
                &f.sd.secret_key,
            )
            .unwrap();
        let r0 = validate_announcement(&adoc0, &l).unwrap();
        assert!(r0.is_valid());
        assert_eq!(r0.flags, vec![Flag::ZeroDeliberation]);

        // another account's announcement pointing at this Wills
        let other = keygen(&[9; 32]).unwrap();
        let oid = l.create_account(&other.public_key, 0).unwrap();
        let bad = build_announcement(civil, wdoc.block, oid, 10, 5, 100, 2, 5).unwrap();
        let bdoc = l
            .publish_document(
                oid,
                DocumentKind::Announcement,
                bad.encode(),
                &other.secret_key,
            )
            .unwrap();
        assert_eq!(
            validate_announcement(&bdoc, &l)
                .unwrap()
                .outcome(Check::WillsReference)
                .map(|o| matches!(o, CheckOutcome::Fail(_))),
            Some(true)
        );
    }

    #[test]
    fn decode_any_dispatches_on_tag() {
        let f = fixture();
        let ann = build_announcement(
            CivilIdentity::default(),
            BlockHeight(3),
            AccountId::of(&f.sd.public_key),
            1,
            1,
            1,
            1,
            1,
        )
        .unwrap();
        assert_eq!(
            Document::decode_any(&ann.encode()).unwrap(),
            Document::Announcement(ann)
        );
        assert!(Document::decode_any(&[1, 0x99]).is_err());
    }

    fn arb_list() -> impl Strategy<Value = Option<Vec<AccountId>>> {
        prop::option::of(prop::collection::vec(
            any::<[u8; 32]>().prop_map(AccountId::from_bytes),
            1..5,
        ))
    }

    proptest! {
        #[test]
        fn donor_id_never_in_plaintext(
            donor_seed in any::<[u8; 32]>(),
            key in any::<[u8; 32]>(),
            list in arb_list(),
            fee in any::<u64>(),
            name in "[a-z]{1,12}",
        ) {
            let donor = KeyPair::from_seed(donor_seed);
            let sd = AccountId::system("sd");
            let donor_id = AccountId::of(&donor.public_key);
            let p = build_pre_wills(&donor, sd, &SharedKey::from_bytes(key), 1, list, fee, b"h").unwrap();
            let w = strip_to_wills(&p);
            let a = build_announcement(
                CivilIdentity { name, ..Default::default() }, BlockHeight(1), sd, 1, 1, 1, 1, 1,
            ).unwrap();
            for bytes in [p.encode(), w.encode(), a.encode()] {
                prop_assert!(!bytes.windows(32).any(|win| win == donor_id.as_bytes()));
            }
        }

        #[test]
        fn stripping_removes_exactly_the_list_region(
            key in any::<[u8; 32]>(),
            list in arb_list(),
            fee in any::<u64>(),
            t in 1u32..5,
        ) {
            let donor = KeyPair::from_seed([4; 32]);
            let p = build_pre_wills(&donor, AccountId::system("sd"), &SharedKey::from_bytes(key), t, list, fee, b"x").unwrap();
            let pre_bytes = p.encode();
            let wills_bytes = strip_to_wills(&p).encode();
            let region = p.registrar_list_region();
            let mut expected = pre_bytes[..region.start].to_vec();
            expected.extend_from_slice(&pre_bytes[region.end..]);
            // only the type tag differs outside the list region
            prop_assert_eq!(&expected[2..], &wills_bytes[2..]);
            prop_assert_eq!(expected[0], wills_bytes[0]);
        }

        #[test]
        fn serialization_is_stable(
            key in any::<[u8; 32]>(),
            list in arb_list(),
            extra in prop::collection::vec("[ -~]{0,8}", 0..3),
        ) {
            let donor = KeyPair::from_seed([6; 32]);
            let p = build_pre_wills(&donor, AccountId::system("sd"), &SharedKey::from_bytes(key), 1, list, 5, b"").unwrap();
            let bytes = p.encode();
            prop_assert_eq!(PreWills::decode(&bytes).unwrap().encode(), bytes);
            let a = build_announcement(
                CivilIdentity { name: "n".into(), birth_date: "d".into(), birth_place: "p".into(), extra_ids: extra },
                BlockHeight(9), AccountId::system("sd"), 3, 4, 5, 2, 4,
            ).unwrap();
            let ab = a.encode();
            prop_assert_eq!(Announcement::decode(&ab).unwrap().encode(), ab);
        }
    }
}

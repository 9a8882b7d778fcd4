//! Hashing, signatures, authenticated encryption and threshold sharing.
//!
//! Signatures are Ed25519 and encryption is ChaCha20-Poly1305. Nonces are
//! derived from the key, associated data and plaintext so encryption is a
//! pure function and every simulated run replays bit for bit.

pub mod gf256;
mod sharing;

use std::fmt;

use chacha20poly1305::aead::{Aead, KeyInit, Payload};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce};
use ed25519_dalek::{Signer, SigningKey, Verifier, VerifyingKey};
use rand::Rng;
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::codec::{DecodeError, Reader, Wire, Writer};

pub use sharing::{reconstruct_secret, split_secret, Share};

pub const DIGEST_LEN: usize = 32;
pub const KEY_LEN: usize = 32;
pub const SIGNATURE_LEN: usize = 64;
const NONCE_LEN: usize = 12;
const TAG_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CryptoError {
    #[error("seed must be {KEY_LEN} bytes, got {0}")]
    BadSeedLength(usize),
    #[error("invalid sharing parameters t={t}, m={m}")]
    InvalidThreshold { t: usize, m: usize },
    #[error("need {need} shares, have {have}")]
    InsufficientShares { have: usize, need: usize },
    #[error("duplicate share index {0}")]
    DuplicateShareIndex(u8),
    #[error("malformed shares: {0}")]
    MalformedShares(&'static str),
    #[error("shared key must be {KEY_LEN} bytes, got {0}")]
    BadKeyLength(usize),
    #[error("authentication failed")]
    AuthenticationFailed,
}

/// SHA-256 output.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Digest([u8; DIGEST_LEN]);

impl Digest {
    pub const fn from_bytes(bytes: [u8; DIGEST_LEN]) -> Self {
        Self(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; DIGEST_LEN] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", &self.to_hex()[..12])
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

pub fn hash(data: &[u8]) -> Digest {
    Digest(Sha256::digest(data).into())
}

/// Hash of length-prefixed parts, so part boundaries cannot be shifted.
pub fn hash_parts(parts: &[&[u8]]) -> Digest {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_be_bytes());
        h.update(p);
    }
    Digest(h.finalize().into())
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PublicKey([u8; KEY_LEN]);

impl PublicKey {
    pub fn from_bytes(bytes: [u8; KEY_LEN]) -> Self {
        Self(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; KEY_LEN] {
        &self.0
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", &hex::encode(self.0)[..12])
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct SecretKey([u8; KEY_LEN]);

impl SecretKey {
    pub fn from_bytes(bytes: [u8; KEY_LEN]) -> Self {
        Self(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; KEY_LEN] {
        &self.0
    }

    pub fn public_key(&self) -> PublicKey {
        PublicKey(SigningKey::from_bytes(&self.0).verifying_key().to_bytes())
    }
}

impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SecretKey(..)")
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub struct Signature([u8; SIGNATURE_LEN]);

impl Signature {
    pub fn from_bytes(bytes: [u8; SIGNATURE_LEN]) -> Self {
        Self(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; SIGNATURE_LEN] {
        &self.0
    }
}

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature({}..)", hex::encode(&self.0[..6]))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyPair {
    pub public_key: PublicKey,
    pub secret_key: SecretKey,
}

impl KeyPair {
    pub fn from_seed(seed: [u8; KEY_LEN]) -> Self {
        let secret_key = SecretKey(seed);
        Self {
            public_key: secret_key.public_key(),
            secret_key,
        }
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let mut seed = [0u8; KEY_LEN];
        rng.fill(&mut seed);
        Self::from_seed(seed)
    }
}

/// Deterministic key derivation from a 32-byte seed.
pub fn keygen(seed: &[u8]) -> Result<KeyPair, CryptoError> {
    let seed: [u8; KEY_LEN] = seed
        .try_into()
        .map_err(|_| CryptoError::BadSeedLength(seed.len()))?;
    Ok(KeyPair::from_seed(seed))
}

pub fn sign(secret_key: &SecretKey, message: &[u8]) -> Signature {
    Signature(
        SigningKey::from_bytes(&secret_key.0)
            .sign(message)
            .to_bytes(),
    )
}

pub fn verify(public_key: &PublicKey, message: &[u8], signature: &Signature) -> bool {
    let Ok(vk) = VerifyingKey::from_bytes(&public_key.0) else {
        return false;
    };
    vk.verify(message, &ed25519_dalek::Signature::from_bytes(&signature.0))
        .is_ok()
}

/// Symmetric key protecting the Wills; reconstructed from registrar shares.
#[derive(Clone, PartialEq, Eq)]
pub struct SharedKey([u8; KEY_LEN]);

impl SharedKey {
    pub fn from_bytes(bytes: [u8; KEY_LEN]) -> Self {
        Self(bytes)
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Self, CryptoError> {
        bytes
            .try_into()
            .map(Self)
            .map_err(|_| CryptoError::BadKeyLength(bytes.len()))
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let mut k = [0u8; KEY_LEN];
        rng.fill(&mut k);
        Self(k)
    }

    pub fn as_bytes(&self) -> &[u8; KEY_LEN] {
        &self.0
    }
}

impl fmt::Debug for SharedKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SharedKey(..)")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ciphertext {
    nonce: [u8; NONCE_LEN],
    sealed: Vec<u8>,
}

impl Ciphertext {
    pub fn nonce(&self) -> &[u8] {
        &self.nonce
    }

    /// Encrypted body followed by the 16-byte tag.
    pub fn sealed(&self) -> &[u8] {
        &self.sealed
    }

    /// Raw mutable access, for tamper tests.
    pub fn sealed_mut(&mut self) -> &mut Vec<u8> {
        &mut self.sealed
    }
}

pub fn encrypt(key: &SharedKey, plaintext: &[u8], associated_data: &[u8]) -> Ciphertext {
    let d = hash_parts(&[b"tfcp/aead-nonce", &key.0, associated_data, plaintext]);
    let mut nonce = [0u8; NONCE_LEN];
    nonce.copy_from_slice(&d.0[..NONCE_LEN]);
    let cipher = ChaCha20Poly1305::new(Key::from_slice(&key.0));
    let sealed = cipher
        .encrypt(
            Nonce::from_slice(&nonce),
            Payload {
                msg: plaintext,
                aad: associated_data,
            },
        )
        .expect("chacha20poly1305 encryption is infallible for in-memory buffers");
    Ciphertext { nonce, sealed }
}

pub fn decrypt(
    key: &SharedKey,
    ciphertext: &Ciphertext,
    associated_data: &[u8],
) -> Result<Vec<u8>, CryptoError> {
    let cipher = ChaCha20Poly1305::new(Key::from_slice(&key.0));
    cipher
        .decrypt(
            Nonce::from_slice(&ciphertext.nonce),
            Payload {
                msg: &ciphertext.sealed,
                aad: associated_data,
            },
        )
        .map_err(|_| CryptoError::AuthenticationFailed)
}

impl Wire for PublicKey {
    const TAG: u8 = 0x01;

    fn encode_body(&self, w: &mut Writer) {
        w.put_bytes(&self.0);
    }

    fn decode_body(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let b = r.get_bytes()?;
        b.as_slice()
            .try_into()
            .map(Self)
            .map_err(|_| DecodeError::Invalid("public key length"))
    }
}

impl Wire for Signature {
    const TAG: u8 = 0x03;

    fn encode_body(&self, w: &mut Writer) {
        w.put_bytes(&self.0);
    }

    fn decode_body(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let b = r.get_bytes()?;
        b.as_slice()
            .try_into()
            .map(Self)
            .map_err(|_| DecodeError::Invalid("signature length"))
    }
}

impl Wire for KeyPair {
    const TAG: u8 = 0x02;

    fn encode_body(&self, w: &mut Writer) {
        w.put_bytes(&self.public_key.0);
        w.put_bytes(&self.secret_key.0);
    }

    fn decode_body(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let public: [u8; KEY_LEN] = r
            .get_bytes()?
            .as_slice()
            .try_into()
            .map_err(|_| DecodeError::Invalid("public key length"))?;
        let secret: [u8; KEY_LEN] = r
            .get_bytes()?
            .as_slice()
            .try_into()
            .map_err(|_| DecodeError::Invalid("secret key length"))?;
        let pair = KeyPair::from_seed(secret);
        if pair.public_key.0 != public {
            return Err(DecodeError::Invalid("public key does not match secret key"));
        }
        Ok(pair)
    }
}

impl Wire for SharedKey {
    const TAG: u8 = 0x05;

    fn encode_body(&self, w: &mut Writer) {
        w.put_bytes(&self.0);
    }

    fn decode_body(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let b = r.get_bytes()?;
        b.as_slice()
            .try_into()
            .map(Self)
            .map_err(|_| DecodeError::Invalid("shared key length"))
    }
}

impl Wire for Ciphertext {
    const TAG: u8 = 0x06;

    fn encode_body(&self, w: &mut Writer) {
        w.put_bytes(&self.nonce);
        w.put_bytes(&self.sealed);
    }

    fn decode_body(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let nonce: [u8; NONCE_LEN] = r
            .get_bytes()?
            .as_slice()
            .try_into()
            .map_err(|_| DecodeError::Invalid("nonce length"))?;
        let sealed = r.get_bytes()?;
        if sealed.len() < TAG_LEN {
            return Err(DecodeError::Invalid("ciphertext shorter than tag"));
        }
        Ok(Self { nonce, sealed })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keygen_is_deterministic() {
        let a = keygen(&[0u8; 32]).unwrap();
        let b = keygen(&[0u8; 32]).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.public_key, keygen(&[1u8; 32]).unwrap().public_key);
    }

    #[test]
    fn keygen_rejects_bad_seed_length() {
        assert_eq!(keygen(&[0u8; 31]), Err(CryptoError::BadSeedLength(31)));
    }

    #[test]
    fn public_key_derivable_from_secret() {
        let kp = keygen(&[7u8; 32]).unwrap();
        assert_eq!(kp.secret_key.public_key(), kp.public_key);
    }

    #[test]
    fn sign_verify_round_trip_and_tamper() {
        let kp = keygen(&[3u8; 32]).unwrap();
        let other = keygen(&[4u8; 32]).unwrap();
        let msg = b"pre-wills".to_vec();
        let sig = sign(&kp.secret_key, &msg);
        assert!(verify(&kp.public_key, &msg, &sig));
        let mut flipped = msg.clone();
        flipped[0] ^= 1;
        assert!(!verify(&kp.public_key, &flipped, &sig));
        assert!(!verify(&other.public_key, &msg, &sig));
    }

    #[test]
    fn aead_round_trip_empty() {
        let key = SharedKey::from_bytes([9u8; 32]);
        let ct = encrypt(&key, b"", b"ad");
        assert_eq!(decrypt(&key, &ct, b"ad").unwrap(), Vec::<u8>::new());
    }

    #[test]
    fn aead_detects_tampering() {
        let key = SharedKey::from_bytes([9u8; 32]);
        let mut ct = encrypt(&key, b"donor", b"TFCP-donor");
        assert_eq!(
            decrypt(&key, &ct, b"TFCP-other"),
            Err(CryptoError::AuthenticationFailed)
        );
        assert_eq!(
            decrypt(&SharedKey::from_bytes([8u8; 32]), &ct, b"TFCP-donor"),
            Err(CryptoError::AuthenticationFailed)
        );
        ct.sealed_mut()[0] ^= 0x01;
        assert_eq!(
            decrypt(&key, &ct, b"TFCP-donor"),
            Err(CryptoError::AuthenticationFailed)
        );
    }

    #[test]
    fn shared_key_length_checked() {
        assert_eq!(
            SharedKey::from_slice(&[0u8; 5]),
            Err(CryptoError::BadKeyLength(5))
        );
    }

    #[test]
    fn hash_parts_respects_boundaries() {
        assert_ne!(hash_parts(&[b"ab", b"c"]), hash_parts(&[b"a", b"bc"]));
        assert_eq!(hash(b"x"), hash(b"x"));
    }

    #[test]
    fn key_wire_forms_round_trip() {
        let kp = keygen(&[5u8; 32]).unwrap();
        assert_eq!(KeyPair::decode(&kp.encode()).unwrap(), kp);
        assert_eq!(
            PublicKey::decode(&kp.public_key.encode()).unwrap(),
            kp.public_key
        );
        let ct = encrypt(&SharedKey::from_bytes([1; 32]), b"abc", b"");
        assert_eq!(Ciphertext::decode(&ct.encode()).unwrap(), ct);
        assert_eq!(kp.encode()[0], crate::codec::WIRE_VERSION);
    }
}

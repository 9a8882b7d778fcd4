//! Threshold secret sharing over GF(256), one polynomial per secret byte.

use std::collections::BTreeSet;

use rand::Rng;

use super::gf256;
use super::CryptoError;
use crate::codec::{DecodeError, Reader, Wire, Writer};

/// One evaluation point of a byte-wise sharing.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Share {
    index: u8,
    value: Vec<u8>,
}

impl Share {
    pub fn new(index: u8, value: Vec<u8>) -> Result<Self, CryptoError> {
        if index == 0 {
            return Err(CryptoError::MalformedShares(
                "share index 0 is reserved for the secret",
            ));
        }
        Ok(Self { index, value })
    }

    pub fn index(&self) -> u8 {
        self.index
    }

    pub fn value(&self) -> &[u8] {
        &self.value
    }
}

impl Wire for Share {
    const TAG: u8 = 0x04;

    fn encode_body(&self, w: &mut Writer) {
        w.put_u8(self.index);
        w.put_bytes(&self.value);
    }

    fn decode_body(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let index = r.get_u8()?;
        if index == 0 {
            return Err(DecodeError::Invalid("share index 0"));
        }
        let value = r.get_bytes()?;
        Ok(Self { index, value })
    }
}

/// Splits `secret` into `m` shares, any `t` of which reconstruct it.
///
/// Shares carry indices `1..=m`. Each secret byte is the constant term of an
/// independent polynomial of degree `t - 1` whose other coefficients are drawn
/// from `rng`.
pub fn split_secret<R: Rng + ?Sized>(
    secret: &[u8],
    t: usize,
    m: usize,
    rng: &mut R,
) -> Result<Vec<Share>, CryptoError> {
    if t < 1 || t > m || m > 255 {
        return Err(CryptoError::InvalidThreshold { t, m });
    }
    let mut values = vec![Vec::with_capacity(secret.len()); m];
    let mut coeffs = vec![0u8; t];
    for &byte in secret {
        coeffs[0] = byte;
        rng.fill(&mut coeffs[1..]);
        for (i, value) in values.iter_mut().enumerate() {
            value.push(gf256::eval_poly(&coeffs, (i + 1) as u8));
        }
    }
    Ok(values
        .into_iter()
        .enumerate()
        .map(|(i, value)| Share {
            index: (i + 1) as u8,
            value,
        })
        .collect())
}

/// Lagrange interpolation at zero over the first `t` shares.
///
/// All supplied shares are checked for distinct indices and equal lengths,
/// even those beyond the first `t`.
pub fn reconstruct_secret(shares: &[Share], t: usize) -> Result<Vec<u8>, CryptoError> {
    if t < 1 {
        return Err(CryptoError::InvalidThreshold { t, m: shares.len() });
    }
    if shares.len() < t {
        return Err(CryptoError::InsufficientShares {
            have: shares.len(),
            need: t,
        });
    }
    let mut seen = BTreeSet::new();
    for share in shares {
        if share.index == 0 {
            return Err(CryptoError::MalformedShares(
                "share index 0 is reserved for the secret",
            ));
        }
        if !seen.insert(share.index) {
            return Err(CryptoError::DuplicateShareIndex(share.index));
        }
    }
    let len = shares[0].value.len();
    if shares.iter().any(|s| s.value.len() != len) {
        return Err(CryptoError::MalformedShares(
            "share values differ in length",
        ));
    }

    let used = &shares[..t];
    // basis_j(0) = prod_{k != j} x_k / (x_k - x_j); subtraction is xor
    let basis: Vec<u8> = used
        .iter()
        .enumerate()
        .map(|(j, sj)| {
            used.iter()
                .enumerate()
                .filter(|&(k, _)| k != j)
                .fold(1u8, |acc, (_, sk)| {
                    let term = gf256::div(sk.index, gf256::add(sk.index, sj.index))
                        .expect("indices are distinct");
                    gf256::mul(acc, term)
                })
        })
        .collect();

    Ok((0..len)
        .map(|pos| {
            used.iter().zip(&basis).fold(0u8, |acc, (s, &b)| {
                gf256::add(acc, gf256::mul(s.value[pos], b))
            })
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    // Reference GF(256) multiply, independent of the table implementation.
    fn slow_mul(mut a: u8, mut b: u8) -> u8 {
        let mut p = 0u8;
        while b != 0 {
            if b & 1 != 0 {
                p ^= a;
            }
            let hi = a & 0x80;
            a <<= 1;
            if hi != 0 {
                a ^= 0x1b;
            }
            b >>= 1;
        }
        p
    }

    fn line(c0: u8, c1: u8, x: u8) -> u8 {
        c0 ^ slow_mul(c1, x)
    }

    #[test]
    fn degree_zero_sharing_copies_secret() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let secret = b"tfcp".to_vec();
        let shares = split_secret(&secret, 1, 3, &mut rng).unwrap();
        assert!(shares.iter().all(|s| s.value() == secret.as_slice()));
        assert_eq!(reconstruct_secret(&shares[2..], 1).unwrap(), secret);
    }

    #[test]
    fn full_set_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let secret: Vec<u8> = (0..32).collect();
        let shares = split_secret(&secret, 3, 3, &mut rng).unwrap();
        assert_eq!(reconstruct_secret(&shares, 3).unwrap(), secret);
    }

    #[test]
    fn hand_built_byte_2a_every_pair_reconstructs() {
        // f(x) = 0x2A + 0x53 x, shares computed with the reference multiply.
        let c1 = 0x53;
        let shares: Vec<Share> = (1..=3u8)
            .map(|x| Share::new(x, vec![line(0x2a, c1, x)]).unwrap())
            .collect();
        for i in 0..3 {
            for j in 0..3 {
                if i == j {
                    continue;
                }
                let pair = [shares[i].clone(), shares[j].clone()];
                // brute force: the unique line through both points
                let mut hits = Vec::new();
                for a in 0..=255u8 {
                    for b in 0..=255u8 {
                        if pair.iter().all(|s| line(a, b, s.index()) == s.value()[0]) {
                            hits.push(a);
                        }
                    }
                }
                assert_eq!(hits, vec![0x2a]);
                assert_eq!(reconstruct_secret(&pair, 2).unwrap(), vec![0x2a]);
            }
        }
    }

    #[test]
    fn split_output_matches_brute_force_pair_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let shares = split_secret(&[0x2a], 2, 3, &mut rng).unwrap();
        for i in 0..3 {
            for j in (i + 1)..3 {
                let (a, b) = (&shares[i], &shares[j]);
                let c0: Vec<u8> = (0..=255u8)
                    .flat_map(|c0| (0..=255u8).map(move |c1| (c0, c1)))
                    .filter(|&(c0, c1)| {
                        line(c0, c1, a.index()) == a.value()[0]
                            && line(c0, c1, b.index()) == b.value()[0]
                    })
                    .map(|(c0, _)| c0)
                    .collect();
                assert_eq!(c0, vec![0x2a]);
            }
        }
    }

    #[test]
    fn too_few_shares_is_insufficient() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let shares = split_secret(b"abc", 3, 4, &mut rng).unwrap();
        assert_eq!(
            reconstruct_secret(&shares[..2], 3),
            Err(CryptoError::InsufficientShares { have: 2, need: 3 })
        );
    }

    #[test]
    fn duplicate_index_is_malformed() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let shares = split_secret(b"abc", 2, 3, &mut rng).unwrap();
        let dup = [shares[0].clone(), shares[0].clone()];
        assert_eq!(
            reconstruct_secret(&dup, 2),
            Err(CryptoError::DuplicateShareIndex(1))
        );
    }

    #[test]
    fn bad_parameters_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        assert!(matches!(
            split_secret(b"x", 0, 3, &mut rng),
            Err(CryptoError::InvalidThreshold { .. })
        ));
        assert!(matches!(
            split_secret(b"x", 4, 3, &mut rng),
            Err(CryptoError::InvalidThreshold { .. })
        ));
        assert!(matches!(
            split_secret(b"x", 2, 256, &mut rng),
            Err(CryptoError::InvalidThreshold { .. })
        ));
    }

    #[test]
    fn length_mismatch_rejected() {
        let a = Share::new(1, vec![1, 2]).unwrap();
        let b = Share::new(2, vec![1]).unwrap();
        assert!(matches!(
            reconstruct_secret(&[a, b], 2),
            Err(CryptoError::MalformedShares(_))
        ));
    }

    #[test]
    fn share_wire_round_trip() {
        let s = Share::new(7, vec![9, 8, 7]).unwrap();
        assert_eq!(Share::decode(&s.encode()).unwrap(), s);
        let mut bad = s.encode();
        bad[2] = 0;
        assert!(Share::decode(&bad).is_err());
    }
}

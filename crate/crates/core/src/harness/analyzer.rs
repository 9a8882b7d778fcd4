//! Honest-but-curious linkage analysis over public ledger data.
//!
//! [`PublicView`] wraps nothing but a ledger reference and a height cutoff,
//! so the analyzer has no path to shares, keys or any other off-ledger state.

use std::collections::BTreeSet;

use crate::codec::Wire;
use crate::crypto::{decrypt, hash_parts};
use crate::documents::{PublicWills, Wills, DONOR_CONTEXT};
use crate::incentives::Fraction;
use crate::ledger::{
    AccountId, BlockHeight, DocumentKind, Ledger, LedgerEvent, PublishedDocument, Transfer,
};

/// Blocks either side of a pre-Wills publication searched for correlated
/// activity.
pub const TIMING_WINDOW: u64 = 2;

/// Public ledger state as of a given block.
pub struct PublicView<'a> {
    ledger: &'a Ledger,
    at: BlockHeight,
    services: BTreeSet<AccountId>,
}

impl<'a> PublicView<'a> {
    /// `services` are accounts publicly known to be infrastructure, such as
    /// a faucet.
    pub fn new(ledger: &'a Ledger, at: BlockHeight, services: BTreeSet<AccountId>) -> Self {
        Self {
            ledger,
            at,
            services,
        }
    }

    pub fn at(&self) -> BlockHeight {
        self.at
    }

    pub fn documents(&self) -> impl Iterator<Item = &'a PublishedDocument> + '_ {
        self.ledger
            .documents()
            .iter()
            .filter(move |d| d.block <= self.at)
    }

    pub fn transfers(&self) -> impl Iterator<Item = &'a Transfer> + '_ {
        self.ledger
            .transfers()
            .iter()
            .filter(move |t| t.block <= self.at)
    }

    /// Accounts that existed at the cutoff and have a public key.
    pub fn keyed_accounts(&self) -> Vec<AccountId> {
        self.ledger
            .history()
            .iter()
            .filter_map(|e| match e {
                LedgerEvent::AccountCreated {
                    account,
                    public_key: Some(_),
                    block,
                    ..
                } if *block <= self.at => Some(*account),
                _ => None,
            })
            .collect()
    }

    pub fn is_service(&self, account: &AccountId) -> bool {
        self.services.contains(account)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Basis {
    PublicWills,
    Plaintext,
    TransferGraph,
    Timing,
    Chance,
    NoCandidates,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinkageGuess {
    pub security_deposit: AccountId,
    pub guessed_donor: Option<AccountId>,
    pub confidence: Fraction,
    pub basis: Basis,
}

/// One guess per Security Deposit visible in `view`.
pub fn linkage_analyzer(view: &PublicView<'_>) -> Vec<LinkageGuess> {
    let docs: Vec<&PublishedDocument> = view.documents().collect();
    let transfers: Vec<&Transfer> = view.transfers().collect();

    let mut deposits: Vec<(AccountId, BlockHeight)> = Vec::new();
    for d in docs.iter().filter(|d| d.kind == DocumentKind::PreWills) {
        if !deposits.iter().any(|(sd, _)| *sd == d.publisher) {
            deposits.push((d.publisher, d.block));
        }
    }
    let sd_set: BTreeSet<AccountId> = deposits.iter().map(|(sd, _)| *sd).collect();
    let publishers: BTreeSet<AccountId> = docs.iter().map(|d| d.publisher).collect();
    let signalers: BTreeSet<AccountId> = transfers
        .iter()
        .filter(|t| t.is_signed() && sd_set.contains(&t.to))
        .map(|t| t.from)
        .collect();
    let keyed = view.keyed_accounts();
    let candidates: Vec<AccountId> = keyed
        .iter()
        .copied()
        .filter(|a| !view.is_service(a) && !publishers.contains(a) && !signalers.contains(a))
        .collect();
    let public_wills: Vec<PublicWills> = docs
        .iter()
        .filter(|d| d.kind == DocumentKind::PublicWills)
        .filter_map(|d| PublicWills::decode(&d.payload).ok())
        .collect();

    deposits
        .iter()
        .map(|&(sd, opened)| {
            let own_docs: Vec<&&PublishedDocument> =
                docs.iter().filter(|d| d.publisher == sd).collect();
            let certain = |donor: AccountId, basis| LinkageGuess {
                security_deposit: sd,
                guessed_donor: Some(donor),
                confidence: Fraction::new(1, 1).expect("1/1 is a valid fraction"),
                basis,
            };

            for pw in &public_wills {
                let opens = own_docs.iter().any(|d| {
                    d.kind == DocumentKind::Wills
                        && d.block == pw.original_wills_block
                        && Wills::decode(&d.payload).is_ok_and(|w| {
                            decrypt(&pw.revealed_key, &w.encrypted_donor_address, DONOR_CONTEXT)
                                .is_ok_and(|plain| plain == pw.donor.as_bytes())
                        })
                });
                if opens {
                    return certain(pw.donor, Basis::PublicWills);
                }
            }

            for account in &keyed {
                if sd_set.contains(account) || view.is_service(account) {
                    continue;
                }
                let needle = account.as_bytes();
                if own_docs
                    .iter()
                    .any(|d| d.payload.windows(needle.len()).any(|w| w == needle))
                {
                    return certain(*account, Basis::Plaintext);
                }
            }

            let announced = own_docs
                .iter()
                .find(|d| d.kind == DocumentKind::Announcement)
                .map_or(view.at(), |d| d.block);
            let funder = transfers.iter().find(|t| {
                t.to == sd
                    && t.is_signed()
                    && t.amount > 0
                    && t.block <= announced
                    && !view.is_service(&t.from)
                    && !sd_set.contains(&t.from)
            });
            if let Some(t) = funder {
                return certain(t.from, Basis::TransferGraph);
            }

            if candidates.is_empty() {
                return LinkageGuess {
                    security_deposit: sd,
                    guessed_donor: None,
                    confidence: Fraction::ZERO,
                    basis: Basis::NoCandidates,
                };
            }
            let lo = opened.0.saturating_sub(TIMING_WINDOW);
            let hi = opened.0 + TIMING_WINDOW;
            let active: BTreeSet<AccountId> = transfers
                .iter()
                .filter(|t| t.is_signed() && (lo..=hi).contains(&t.block.0))
                .map(|t| t.from)
                .collect();
            let near: Vec<AccountId> = candidates
                .iter()
                .copied()
                .filter(|c| active.contains(c))
                .collect();
            let (pool, basis) = if !near.is_empty() && near.len() < candidates.len() {
                (near, Basis::Timing)
            } else {
                (candidates.clone(), Basis::Chance)
            };
            let guess = pool
                .iter()
                .min_by_key(|c| hash_parts(&[b"tfcp/linkage", sd.as_bytes(), c.as_bytes()]))
                .copied();
            LinkageGuess {
                security_deposit: sd,
                guessed_donor: guess,
                confidence: Fraction::new(1, pool.len() as u64).expect("1/n with n >= 1"),
                basis,
            }
        })
        .collect()
}

/// `(correct, total)` against the true deposit-to-donor pairs.
pub fn score(guesses: &[LinkageGuess], truth: &[(AccountId, AccountId)]) -> (u64, u64) {
    let correct = truth
        .iter()
        .filter(|(sd, donor)| {
            guesses
                .iter()
                .any(|g| g.security_deposit == *sd && g.guessed_donor == Some(*donor))
        })
        .count();
    (correct as u64, truth.len() as u64)
}

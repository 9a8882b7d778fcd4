//! Replays the checked-in fuzz corpora through the same properties the fuzz
//! targets assert, so they are exercised on stable without libFuzzer.

use std::fs;
use std::path::PathBuf;

use tfcp::codec::Wire;
use tfcp::crypto::{decrypt, sign, verify, Ciphertext, KeyPair, Share, SharedKey};
use tfcp::documents::Document;
use tfcp::harness::parse_scenario;
use tfcp::incentives::PayoutLine;
use tfcp::report::RunReport;
use tfcp::trace::{Trace, TraceRecord};

fn corpus(target: &str) -> Vec<Vec<u8>> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fuzz/corpus")
        .join(target);
    let mut seeds: Vec<Vec<u8>> = fs::read_dir(&dir)
        .unwrap()
        .map(|e| fs::read(e.unwrap().path()).unwrap())
        .collect();
    assert!(!seeds.is_empty(), "empty corpus for {target}");
    // every prefix too, which covers the truncation paths
    let prefixes: Vec<Vec<u8>> = seeds
        .iter()
        .flat_map(|s| (0..s.len().min(96)).map(move |n| s[..n].to_vec()))
        .collect();
    seeds.extend(prefixes);
    seeds
}

#[test]
fn share_decode() {
    let mut ok = 0;
    for data in corpus("share_decode") {
        if let Ok(share) = Share::decode(&data) {
            assert_eq!(share.encode(), data);
            ok += 1;
        }
    }
    assert!(ok >= 2);
}

#[test]
fn ciphertext_decode() {
    let key = SharedKey::from_bytes([7; 32]);
    let mut opened = 0;
    for data in corpus("ciphertext_decode") {
        if let Ok(ct) = Ciphertext::decode(&data) {
            assert_eq!(ct.encode(), data);
            opened += decrypt(&key, &ct, b"fuzz").is_ok() as usize;
        }
    }
    assert_eq!(opened, 1);
}

#[test]
fn keypair_decode() {
    for data in corpus("keypair_decode") {
        if let Ok(keys) = KeyPair::decode(&data) {
            assert!(verify(
                &keys.public_key,
                &data,
                &sign(&keys.secret_key, &data)
            ));
        }
        if let Ok(seed) = <[u8; 32]>::try_from(data.as_slice()) {
            let keys = KeyPair::from_seed(seed);
            assert_eq!(KeyPair::decode(&keys.encode()).unwrap(), keys);
        }
    }
}

#[test]
fn keypair_mismatch_rejected() {
    let mut bytes = KeyPair::from_seed([9; 32]).encode();
    let last = bytes.len() - 1;
    bytes[last] ^= 1;
    assert!(KeyPair::decode(&bytes).is_err());
}

#[test]
fn document_decode() {
    let mut kinds = 0;
    for data in corpus("document_decode") {
        if let Ok(doc) = Document::decode_any(&data) {
            assert_eq!(doc.encode(), data);
            kinds += 1;
        }
    }
    assert_eq!(kinds, 6);
}

#[test]
fn trace_line() {
    let mut full = 0;
    for data in corpus("trace_line") {
        let Ok(text) = std::str::from_utf8(&data) else {
            continue;
        };
        if let Ok(record) = text.parse::<TraceRecord>() {
            let _ = record.scheme_step();
        }
        if let Ok(trace) = Trace::parse(text) {
            if trace.shows_full_scheme() {
                full += 1;
                RunReport::from_trace(&trace).unwrap();
            }
        }
    }
    assert!(full >= 1);
}

#[test]
fn payout_line() {
    let mut ok = 0;
    for data in corpus("payout_line") {
        let Ok(text) = std::str::from_utf8(&data) else {
            continue;
        };
        if let Ok(line) = text.parse::<PayoutLine>() {
            assert_eq!(line.to_string().parse::<PayoutLine>().unwrap(), line);
            ok += 1;
        }
    }
    assert!(ok >= 7);
}

#[test]
fn scenario_parse() {
    let mut ok = 0;
    for data in corpus("scenario_parse") {
        let Ok(text) = std::str::from_utf8(&data) else {
            continue;
        };
        if let Ok(sc) = parse_scenario(text) {
            assert_eq!(parse_scenario(&sc.to_text()).unwrap(), sc);
            ok += 1;
        }
    }
    assert!(ok >= 4);
}

#![no_main]

use libfuzzer_sys::fuzz_target;
use tfcp::codec::Wire;
use tfcp::crypto::{decrypt, Ciphertext, SharedKey};

fuzz_target!(|data: &[u8]| {
    if let Ok(ct) = Ciphertext::decode(data) {
        assert_eq!(ct.encode(), data);
        let _ = decrypt(&SharedKey::from_bytes([7; 32]), &ct, b"fuzz");
    }
});

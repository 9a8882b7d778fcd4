#![no_main]

use libfuzzer_sys::fuzz_target;
use tfcp::codec::Wire;
use tfcp::crypto::{sign, verify, KeyPair, PublicKey};

fuzz_target!(|data: &[u8]| {
    if let Ok(keys) = KeyPair::decode(data) {
        let sig = sign(&keys.secret_key, data);
        assert!(verify(&keys.public_key, data, &sig));
    }
    let _ = PublicKey::decode(data);
    if let Ok(seed) = <[u8; 32]>::try_from(data) {
        let keys = KeyPair::from_seed(seed);
        assert_eq!(KeyPair::decode(&keys.encode()).unwrap(), keys);
    }
});

#![no_main]

use libfuzzer_sys::fuzz_target;
use tfcp::codec::Wire;
use tfcp::crypto::Share;

fuzz_target!(|data: &[u8]| {
    if let Ok(share) = Share::decode(data) {
        assert_eq!(share.encode(), data);
    }
});

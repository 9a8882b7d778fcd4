#![no_main]

use libfuzzer_sys::fuzz_target;
use tfcp::documents::Document;

fuzz_target!(|data: &[u8]| {
    if let Ok(doc) = Document::decode_any(data) {
        assert_eq!(doc.encode(), data);
    }
});

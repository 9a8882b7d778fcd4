#![no_main]

use libfuzzer_sys::fuzz_target;
use tfcp::harness::parse_scenario;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(sc) = parse_scenario(text) {
        assert_eq!(parse_scenario(&sc.to_text()).unwrap(), sc);
    }
});

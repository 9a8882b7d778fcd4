#![no_main]

use libfuzzer_sys::fuzz_target;
use tfcp::incentives::{Fraction, PayoutLine};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(line) = text.parse::<PayoutLine>() {
        assert_eq!(line.to_string().parse::<PayoutLine>().unwrap(), line);
    }
    let _ = text.parse::<Fraction>();
});

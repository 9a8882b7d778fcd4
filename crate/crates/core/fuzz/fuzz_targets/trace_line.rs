#![no_main]

use libfuzzer_sys::fuzz_target;
use tfcp::report::RunReport;
use tfcp::trace::{Trace, TraceRecord};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(record) = text.parse::<TraceRecord>() {
        let _ = record.scheme_step();
        let _ = record.fields();
    }
    if let Ok(trace) = Trace::parse(text) {
        let _ = trace.shows_full_scheme();
        let _ = RunReport::from_trace(&trace);
    }
});

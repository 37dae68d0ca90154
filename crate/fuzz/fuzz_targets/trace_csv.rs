#![no_main]

use libfuzzer_sys::fuzz_target;
use turnon_core::io::{parse_trace_csv, trace_csv};
use turnon_core::trace::COLUMNS;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(trace) = parse_trace_csv(text, Vec::new()) else {
        return;
    };
    assert!(trace.t.windows(2).all(|w| w[1] > w[0]));
    // derived columns can overflow for extreme inputs; those cannot be written back
    let writable = COLUMNS
        .iter()
        .all(|c| trace.column(c).unwrap().iter().all(|x| x.is_finite()));
    if writable {
        let again = parse_trace_csv(&trace_csv(&trace), Vec::new()).expect("written trace parses");
        assert_eq!(again.t, trace.t);
        assert_eq!(again.states, trace.states);
    }
});

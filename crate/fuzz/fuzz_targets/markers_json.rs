#![no_main]

use libfuzzer_sys::fuzz_target;
use turnon_core::io::{markers_json, parse_markers_json};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(m) = parse_markers_json(text) {
        assert_eq!(
            parse_markers_json(&markers_json(&m)).expect("round trip"),
            m
        );
    }
});

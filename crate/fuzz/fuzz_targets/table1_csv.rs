#![no_main]

use libfuzzer_sys::fuzz_target;
use turnon_core::validation::{parse_table1, verify_rows};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(rows) = parse_table1(text) {
        let _ = verify_rows(&rows);
    }
});

#![no_main]

use libfuzzer_sys::fuzz_target;
use turnon_core::io::parse_config;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = parse_config(text) {
        let again = parse_config(&cfg.to_json()).expect("written config parses");
        // NaN never survives JSON, so equality is well defined here
        assert_eq!(again, cfg);
    }
});

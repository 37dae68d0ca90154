#![no_main]

use libfuzzer_sys::fuzz_target;
use turnon_core::io::parse_device_manifest;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(m) = parse_device_manifest(text) {
        let json = serde_json::to_string(&m).expect("manifest serializes");
        assert_eq!(parse_device_manifest(&json).expect("round trip"), m);
    }
});

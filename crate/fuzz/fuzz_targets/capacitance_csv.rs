#![no_main]

use libfuzzer_sys::fuzz_target;
use turnon_core::io::{capacitance_csv, parse_capacitance_csv};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(curve) = parse_capacitance_csv(text) else {
        return;
    };
    let (v, _) = curve.samples();
    let (lo, hi) = (v[0], v[v.len() - 1]);
    let _ = (
        curve.at(0.5 * (lo + hi)),
        curve.charge(hi),
        curve.knee_voltage(),
    );
    let again = parse_capacitance_csv(&capacitance_csv(&curve)).expect("written curve parses");
    assert_eq!(again.samples(), curve.samples());
});

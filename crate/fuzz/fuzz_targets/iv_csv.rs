#![no_main]

use libfuzzer_sys::fuzz_target;
use turnon_core::io::parse_iv_csv;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(grid) = parse_iv_csv(text) else { return };
    for &g in grid.gate_voltages() {
        for v in [-5.0, 0.0, 1.0, 100.0] {
            let _ = grid.current(g, v);
            let _ = grid.current_partials(g + 0.5, v);
        }
    }
});

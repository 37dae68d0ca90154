//! Replays the checked-in fuzz corpus through every parser. The seeds are
//! real files, so each one must parse (except the deliberately truncated
//! I-V excerpt, which only has to fail cleanly).

use std::fs;
use std::path::PathBuf;

use turnon_core::io::{
    parse_capacitance_csv, parse_config, parse_device_manifest, parse_iv_csv, parse_markers_json,
    parse_trace_csv,
};
use turnon_core::validation::parse_table1;

fn seeds(target: &str) -> Vec<(String, String)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target);
    let mut out: Vec<(String, String)> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read_to_string(&p).unwrap(),
            )
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

#[test]
fn every_seed_parses() {
    for (name, text) in seeds("capacitance_csv") {
        parse_capacitance_csv(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
    for (name, text) in seeds("iv_csv") {
        let r = parse_iv_csv(&text);
        if name != "small.csv" {
            r.unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }
    for (name, text) in seeds("device_manifest") {
        parse_device_manifest(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
    for (name, text) in seeds("config_json") {
        parse_config(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
    for (name, text) in seeds("trace_csv") {
        let tr = parse_trace_csv(&text, Vec::new()).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert!(tr.len() >= 2);
    }
    for (name, text) in seeds("table1_csv") {
        assert!(!parse_table1(&text)
            .unwrap_or_else(|e| panic!("{name}: {e}"))
            .is_empty());
    }
    for (name, text) in seeds("markers_json") {
        parse_markers_json(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

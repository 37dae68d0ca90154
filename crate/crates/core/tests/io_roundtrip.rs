mod common;

use turnon_core::energy::energy_report;
use turnon_core::io::{load_config, load_device, read_trace, write_trace};
use turnon_core::phases::{segment, SegmentParams};

#[test]
fn exported_trace_reproduces_timeline_and_energies() {
    let dir = std::env::temp_dir().join(format!("turnon-io-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    for (name, path) in common::scenario_configs() {
        let s = common::run_config_file(&path);
        let file = dir.join(format!("{name}.csv"));
        write_trace(&file, &s.trace, Some("round trip")).unwrap();
        let back = read_trace(&file).unwrap();
        assert_eq!(back.len(), s.trace.len());
        assert_eq!(back.markers, s.trace.markers);
        assert_eq!(
            back.t, s.trace.t,
            "{name}: time column must survive exactly"
        );

        let c = &s.sys.config;
        let tl = segment(
            &back,
            c.scenario,
            &c.dev_s1,
            &c.dev_s2,
            &SegmentParams::default(),
        )
        .unwrap();
        assert_eq!(tl, s.timeline, "{name}");
        let a = energy_report(&s.trace, &s.sys, &s.timeline, None).unwrap();
        let b = energy_report(&back, &s.sys, &tl, None).unwrap();
        assert_eq!(a.e_on_direct, b.e_on_direct, "{name}");
        assert_eq!(a.e_on_charge_ledger, b.e_on_charge_ledger, "{name}");
    }
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn shipped_devices_load_and_the_synthetic_one_tracks_the_builtin() {
    let root = common::repo_root().join("data/devices");
    for d in [
        "sic80-synthetic",
        "c2m0080120d-surrogate",
        "c2m0025120d-surrogate",
    ] {
        let dev = load_device(&format!("{d}/device.json"), &root).unwrap();
        dev.validate().unwrap();
        assert!(dev.q_oss(800.0).unwrap() > 0.0);
    }
    let file = load_device("sic80-synthetic/device.json", &root).unwrap();
    let builtin = load_device("builtin:sic80", &root).unwrap();
    // same parameters, tabulated on a denser voltage grid
    for v in [0.0, 1.0, 10.0, 100.0, 400.0, 800.0] {
        let (a, b) = (file.c_oss(v), builtin.c_oss(v));
        assert!((a - b).abs() <= 5e-3 * b, "c_oss at {v}: {a} vs {b}");
    }
    for v in [10.0, 100.0, 400.0, 800.0] {
        let (a, b) = (file.q_oss(v).unwrap(), builtin.q_oss(v).unwrap());
        assert!((a - b).abs() <= 5e-3 * b, "q_oss at {v}: {a} vs {b}");
    }
    // the CSV carries eight significant digits
    for (g, v) in [(20.0, 1.0), (8.0, 50.0), (-5.0, -4.0)] {
        let (a, b) = (
            file.channel_current(g, v).unwrap(),
            builtin.channel_current(g, v).unwrap(),
        );
        assert!(
            (a - b).abs() <= 1e-7 * b.abs().max(1.0),
            "I({g}, {v}): {a} vs {b}"
        );
    }
}

#[test]
fn shipped_configs_resolve_to_their_scenarios() {
    for (name, path) in common::scenario_configs() {
        let (file, cfg) = load_config(&path).unwrap();
        assert_eq!(cfg.scenario, file.scenario, "{name}");
        assert_eq!(serde_json::to_value(file.scenario).unwrap(), name);
    }
}

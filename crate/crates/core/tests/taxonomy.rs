mod common;

use proptest::prelude::*;
use turnon_core::circuit::Scenario;
use turnon_core::phases::EventKind;
use turnon_core::solver::SolverSettings;

#[test]
fn reference_timelines_match_the_taxonomy() {
    for (name, path) in common::scenario_configs() {
        let s = common::run_config_file(&path);
        let v = common::taxonomy_violations(&s.timeline);
        assert!(v.is_empty(), "{name}: {v:?}");
    }
}

#[test]
fn events_are_ordered_and_inside_the_trace() {
    for (name, path) in common::scenario_configs() {
        let s = common::run_config_file(&path);
        let tl = &s.timeline;
        assert!(tl.events.windows(2).all(|w| w[0].t <= w[1].t), "{name}");
        assert!(
            tl.events
                .iter()
                .all(|e| e.t >= tl.onset && e.t <= s.trace.t_end()),
            "{name}"
        );
        assert_eq!(tl.count(EventKind::Onset), 1, "{name}");
        if tl.scenario != Scenario::Zvs {
            let (vs, ve) = (
                tl.first(EventKind::VfStart).unwrap(),
                tl.first(EventKind::VfEnd).unwrap(),
            );
            assert!(vs < ve, "{name}");
            assert!(
                (1..=4).contains(&tl.miller_subphases()),
                "{name}: {}",
                tl.miller_subphases()
            );
        }
    }
}

#[test]
fn no_sample_is_dropped_when_the_tolerance_tightens() {
    let path = &common::scenario_configs()[3].1;
    let (file, cfg) = turnon_core::io::load_config(path).unwrap();
    let loose = common::run(cfg.clone(), &file.solver, file.t_end_s);
    let tight = common::run(cfg, &file.solver.scaled(0.1), file.t_end_s);
    let kinds = |t: &turnon_core::phases::PhaseTimeline| {
        t.events.iter().map(|e| e.kind).collect::<Vec<_>>()
    };
    assert_eq!(kinds(&loose.timeline), kinds(&tight.timeline));
    for (a, b) in loose.timeline.events.iter().zip(&tight.timeline.events) {
        assert!(
            (a.t - b.t).abs() < 0.05e-9,
            "{}: {} vs {}",
            a.kind,
            a.t,
            b.t
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 6, ..ProptestConfig::default() })]

    #[test]
    fn varied_operating_points_keep_their_signature(seed in 0u64..10_000) {
        for cfg in common::varied_scenarios(seed) {
            let s = common::run(cfg, &SolverSettings::default(), 150e-9);
            let v = common::taxonomy_violations(&s.timeline);
            prop_assert!(v.is_empty(), "seed {}: {:?}", seed, v);
        }
    }
}

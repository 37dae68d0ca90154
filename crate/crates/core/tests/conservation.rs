mod common;

use proptest::prelude::*;
use turnon_core::energy::{charge_bookkeeping, simulation_balance, Window};
use turnon_core::solver::SolverSettings;

#[test]
fn reference_scenarios_conserve_energy_and_charge() {
    for (name, path) in common::scenario_configs() {
        let c = common::conservation(name, &path);
        assert!(
            c.balance_rel < 5e-3,
            "{name}: energy residual {:e}",
            c.balance_rel
        );
        assert!(
            c.worst_charge.1 < 1e-3,
            "{name}: {} charge residual {:e}",
            c.worst_charge.0,
            c.worst_charge.1
        );
    }
}

#[test]
fn balance_holds_over_the_whole_trace_too() {
    for (name, path) in common::scenario_configs() {
        let s = common::run_config_file(&path);
        let w = Window::new(s.trace.t_start(), s.trace.t_end()).unwrap();
        let b = simulation_balance(&s.trace, &s.sys, &w).unwrap();
        assert!(b.residual.rel.abs() < 5e-3, "{name}: {:?}", b.residual);
        // some gate capacitors barely move over a full trace, so compare
        // against the largest charge moved anywhere in the network
        let checks = charge_bookkeeping(&s.trace, &s.sys, &w).unwrap();
        let scale = checks.iter().map(|c| c.delta_q.abs()).fold(0.0, f64::max);
        for c in &checks {
            assert!(
                c.residual.abs.abs() < 1e-3 * scale,
                "{name} {}: {:?}",
                c.name,
                c.residual
            );
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 6, ..ProptestConfig::default() })]

    #[test]
    fn varied_operating_points_conserve(seed in 0u64..10_000) {
        for cfg in common::varied_scenarios(seed) {
            let scenario = cfg.scenario;
            let s = common::run(cfg, &SolverSettings::default(), 150e-9);
            let r = common::report(&s);
            prop_assert!(r.balance.residual.rel.abs() < 5e-3, "{:?}: {:?}", scenario, r.balance.residual);
            for c in &r.charges {
                prop_assert!(c.residual.rel.abs() < 1e-3, "{:?} {}: {:?}", scenario, c.name, c.residual);
            }
        }
    }
}

mod common;

use turnon_core::solver::SolverSettings;

#[test]
fn output_charge_and_energy_match_dense_trapezoid() {
    for seed in 0..common::ORACLE_CURVES {
        let (eq, ee) = common::oracle_errors(seed);
        assert!(eq < 1e-6 && ee < 1e-6, "seed {seed}: q {eq:e}, e {ee:e}");
    }
}

#[test]
fn fixed_step_error_is_second_order() {
    let r = common::convergence_ratio();
    assert!((3.0..=5.0).contains(&r), "ratio {r}");
}

#[test]
fn rc_surrogate_matches_exponential() {
    for rel_tol in [1e-5, 1e-7] {
        let s = SolverSettings {
            rel_tol,
            ..Default::default()
        };
        let (terminal, along) = common::rc_surrogate_error(&s);
        assert!(terminal < rel_tol, "rel_tol {rel_tol}: {terminal:e}");
        assert!(along < 10.0 * rel_tol, "rel_tol {rel_tol}: {along:e}");
    }
}

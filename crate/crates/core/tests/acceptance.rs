//! Acceptance report: one PASS/FAIL line per criterion.
//!
//! This target reports and never fails the build. The criteria that are
//! attainable are enforced separately by the gate tests in this folder.

mod common;

use common::Outcome;

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 7] = [
        ("table arithmetic", common::criterion_1),
        ("summary ranges", common::criterion_2),
        ("pipeline equivalence", common::criterion_3),
        ("conservation", common::criterion_4),
        ("phase taxonomy", common::criterion_5),
        ("numerical oracles", common::criterion_6),
        ("curve-based prediction report", common::criterion_7),
    ];
    println!();
    let mut passed = 0;
    for (k, (name, eval)) in criteria.iter().enumerate() {
        let o = eval();
        passed += o.pass as usize;
        println!(
            "criterion {} [{}] {name} ({:.2} s): {}",
            k + 1,
            if o.pass { "PASS" } else { "FAIL" },
            o.elapsed.as_secs_f64(),
            o.detail
        );
    }
    println!("acceptance: {passed}/{} criteria pass", criteria.len());
    println!();
}

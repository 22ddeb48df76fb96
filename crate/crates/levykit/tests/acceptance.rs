//! Runs all fourteen acceptance criteria at their stated tolerances and
//! prints one pass/fail line per criterion.

use levykit::verify::{run, Suite, VerifyOptions};

#[test]
fn acceptance_suite() {
    let opts = VerifyOptions {
        suite: Suite::All,
        ..VerifyOptions::default()
    };
    let report = run(&opts).expect("suite runs");
    println!();
    for check in &report.checks {
        println!("{}", check.line());
    }
    let failed: Vec<String> = report.failures().iter().map(|c| format!("{} {}", c.id, c.name)).collect();
    assert!(failed.is_empty(), "failing criteria: {}", failed.join(", "));
}

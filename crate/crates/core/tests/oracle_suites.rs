use flipper_core::check::{run_all, run_suite, CheckOptions};

#[test]
fn every_oracle_suite_passes() {
    let outcomes = run_all(&CheckOptions::default());
    for o in &outcomes {
        println!("{:<18} {} {:.1}s  {}", o.name, if o.passed { "PASS" } else { "FAIL" }, o.seconds, o.detail);
    }
    assert!(outcomes.iter().all(|o| o.passed));
    let total: f64 = outcomes.iter().map(|o| o.seconds).sum();
    assert!(total < 300.0, "suites took {total:.0} s");
}

#[test]
fn corrupted_barrier_is_caught() {
    let o = run_suite("barrier", &CheckOptions { corrupt_barrier: true }).unwrap();
    assert!(!o.passed);
    assert!(o.detail.contains("slope"), "{}", o.detail);
}

//! One PASS/FAIL line per acceptance criterion; tolerances live in
//! `opfree::repro`.

use opfree::repro::{run_all, CRITERIA};

#[test]
fn acceptance() {
    let outcomes = run_all(0);
    for o in &outcomes {
        println!("{}", o.line());
    }
    assert_eq!(outcomes.len(), CRITERIA);
    let failed: Vec<usize> = outcomes.iter().filter(|o| !o.pass).map(|o| o.id).collect();
    assert!(failed.is_empty(), "failing criteria: {failed:?}");
}

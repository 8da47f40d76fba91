use std::io::Write;

use bdrelax::acceptance;

#[test]
fn acceptance_criteria() {
    let results = acceptance::run_all(0);
    let mut out = std::io::stdout().lock();
    for r in &results {
        writeln!(out, "{r}").unwrap();
    }
    let failed: Vec<u8> = results.iter().filter(|r| !r.passed).map(|r| r.id).collect();
    assert_eq!(results.len(), acceptance::COUNT as usize);
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

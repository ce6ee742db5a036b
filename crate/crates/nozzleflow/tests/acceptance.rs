use nozzleflow::acceptance::{run_all, CRITERIA};

#[test]
fn acceptance_criteria() {
    let report = run_all();
    for c in &report.criteria {
        println!("{}", c.line());
    }
    println!("{}/{} criteria pass", report.passed, report.total);
    assert_eq!(report.total, CRITERIA);
    let failed: Vec<String> = report.criteria.iter().filter(|c| !c.pass).map(|c| c.line()).collect();
    assert!(failed.is_empty(), "failing criteria:\n{}", failed.join("\n"));
}

use std::collections::BTreeSet;
use std::path::PathBuf;

use testbed::harness::coverage::{asserted_elements, element_coverage_check, page_inventory};
use testbed::harness::registry::{Category, Registry, Suite};
use testbed::harness::transport::InProcess;
use testbed::process_model::{load_paths, ProcessModel};

fn suite() -> Suite {
    let data = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data");
    let registry = Registry::load(&data.join("registry.toml")).unwrap();
    let model = ProcessModel::load(&data.join("model/uis.toml")).unwrap();
    let paths = load_paths(&data.join("paths/valid.toml")).unwrap();
    Suite::build(&registry, &model, &paths).unwrap()
}

#[test]
fn shipped_atomic_suite_covers_every_active_element() {
    let transport = InProcess::shipped("baseline-small").unwrap();
    let inventory = page_inventory(&transport).unwrap();
    let report = element_coverage_check(&suite().tests, &inventory).unwrap();
    assert!(
        report.uncovered_active.is_empty(),
        "{:?}",
        report.uncovered_active
    );
    assert!(
        report.uncovered_passive.is_empty(),
        "{:?}",
        report.uncovered_passive
    );
}

#[test]
fn deleting_one_atomic_test_reports_exactly_its_unique_elements() {
    let transport = InProcess::shipped("baseline-small").unwrap();
    let inventory = page_inventory(&transport).unwrap();
    let mut tests = suite().tests;
    let victim_at = tests
        .iter()
        .position(|t| t.test_id == "a-small-st01-my-grades")
        .unwrap();
    let victim = tests.remove(victim_at);

    let mut others = BTreeSet::new();
    for t in tests.iter().filter(|t| t.category == Category::Atomic) {
        others.extend(asserted_elements(t).unwrap());
    }
    let unique: BTreeSet<_> = asserted_elements(&victim)
        .unwrap()
        .difference(&others)
        .cloned()
        .collect();
    assert!(!unique.is_empty());

    let report = element_coverage_check(&tests, &inventory).unwrap();
    let mut reported: BTreeSet<_> = report.uncovered_active.into_iter().collect();
    reported.extend(report.uncovered_passive);
    assert_eq!(reported, unique);
}

use std::path::PathBuf;

use testbed::harness::registry::{Category, Registry, Suite};
use testbed::harness::runner::{run_suite, Verdict};
use testbed::harness::transport::InProcess;
use testbed::process_model::{load_paths, ProcessModel};

fn data() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data")
}

fn suite() -> Suite {
    let registry = Registry::load(&data().join("registry.toml")).unwrap();
    let model = ProcessModel::load(&data().join("model/uis.toml")).unwrap();
    let paths = load_paths(&data().join("paths/valid.toml")).unwrap();
    Suite::build(&registry, &model, &paths).unwrap()
}

#[test]
fn suite_has_expected_shape() {
    let s = suite();
    let count = |c: Category| s.tests.iter().filter(|t| t.category == c).count();
    assert_eq!(count(Category::Atomic), 112);
    assert_eq!(count(Category::Process), 10 + 11);
    assert_eq!(count(Category::Negative), 23);
    assert!(s.warnings.is_empty());
    assert_eq!(s.tests[0].test_id, "a-small-anon-home");
    assert_eq!(s.tests.last().unwrap().test_id, "n23");
}

#[test]
fn whole_suite_passes_on_the_reference_application() {
    let s = suite();
    let transport = InProcess::shipped("baseline-small").unwrap();
    let results = run_suite(&transport, &s, "r0");
    let bad: Vec<String> = results
        .iter()
        .filter(|r| r.verdict != Verdict::Pass)
        .map(|r| {
            let detail: Vec<String> = r
                .failed_asserts()
                .take(4)
                .map(|a| {
                    format!(
                        "{}/{} {:?}: {:?} vs {:?}",
                        a.block, a.check, a.target, a.expected, a.actual
                    )
                })
                .collect();
            format!("{} {:?} {:?} {detail:?}", r.test_id, r.verdict, r.error)
        })
        .collect();
    assert!(bad.is_empty(), "{}", bad.join("\n"));
    assert_eq!(results[0].run_id, "r0-001");
}

#[test]
fn a_path_entering_mid_model_is_flagged_and_still_runs() {
    let registry = Registry::load(&data().join("registry.toml")).unwrap();
    let model = ProcessModel::load(&data().join("model/uis.toml")).unwrap();
    let paths = testbed::process_model::parse_paths(
        r#"
        [[path]]
        id = "M01"
        entry_state = "st-home"
        transitions = ["t12", "t23"]
        "#,
    )
    .unwrap();
    let s = Suite::build(&registry, &model, &paths).unwrap();
    assert_eq!(
        s.warnings,
        vec!["path M01 starts mid-model at st-home".to_string()]
    );
    let transport = InProcess::shipped("baseline-small").unwrap();
    let test = s.get("M01").unwrap();
    assert_eq!(test.entry.user.as_deref(), Some("st01"));
    let results = run_suite(
        &transport,
        &Suite {
            tests: vec![test.clone()],
            warnings: vec![],
        },
        "r0",
    );
    assert_eq!(
        results[0].verdict,
        Verdict::Pass,
        "{:?}",
        results[0].asserts
    );
}

use std::collections::BTreeMap;
use std::path::PathBuf;

use chrono::{TimeZone, Utc};
use testbed::defect::activation::ActivationRecord;
use testbed::eval::matrix::{compute_detection_matrix, Cell, MatrixError};
use testbed::eval::metrics::{compute_effectiveness_metrics, MetricsError};
use testbed::eval::pair::{pair_activation_logs, PairedReport};
use testbed::eval::report::{run_suite, RunError, RunLabel, Selection, TestReport};
use testbed::harness::registry::{Category, Registry, Suite};
use testbed::harness::runner::{TestResult, Verdict};
use testbed::harness::transport::{HttpTransport, InProcess};
use testbed::process_model::{load_paths, ProcessModel};

fn entry(test: &str, run: &str, verdict: Verdict) -> TestResult {
    TestResult {
        test_id: test.into(),
        run_id: run.into(),
        category: Category::Atomic,
        fixture_id: "baseline-small".into(),
        verdict,
        asserts: Vec::new(),
        duration_ms: 1,
        error: None,
        request_count: 0,
    }
}

/// `verdicts[i]` is the verdict of test `T{i+1}`; run ids are `<prefix>-<i+1>`.
fn report(target: &str, prefix: &str, verdicts: &[Verdict]) -> TestReport {
    TestReport {
        suite_id: "s".into(),
        target: target.into(),
        manifest_clone_id: target.into(),
        defect_ids: Vec::new(),
        started_at: String::new(),
        environment: BTreeMap::new(),
        warnings: Vec::new(),
        entries: verdicts
            .iter()
            .enumerate()
            .map(|(i, v)| entry(&format!("T{}", i + 1), &format!("{prefix}-{}", i + 1), *v))
            .collect(),
    }
}

fn activation(run: &str, defect: &str) -> ActivationRecord {
    ActivationRecord {
        timestamp: Utc.with_ymd_and_hms(2026, 1, 1, 0, 0, 0).unwrap(),
        run_id: run.into(),
        defect_id: defect.into(),
        site_id: "S1".into(),
        request_path: "/".into(),
    }
}

use Verdict::{Error as E, Fail as F, Pass as P};

#[test]
fn pairing_annotates_entries_and_collects_orphans() {
    let r = report("C1", "r2", &[P, P, P, P]);
    let none = pair_activation_logs(&r, &[]);
    assert!(none.entries.iter().all(|a| a.activations.is_empty()));
    assert!(none.orphans.is_empty());

    let paired = pair_activation_logs(&r, &[activation("r2-3", "D01"), activation("r9-1", "D01")]);
    let sets: Vec<usize> = paired.entries.iter().map(|a| a.activations.len()).collect();
    assert_eq!(sets, vec![0, 0, 1, 0]);
    assert_eq!(paired.orphans.len(), 1);
    assert!(paired.orphans[0].contains("run_id=r9-1"));
}

/// Five tests, four clones. C1 is caught by T1 and T2, C2 by T3, C3 by
/// T5, C4 by nobody: T4 only activates it and T2 errors on it.
fn five_by_four() -> (TestReport, Vec<(TestReport, PairedReport)>) {
    let baseline = report("baseline", "r1", &[P, P, P, P, P]);
    let clones = [
        (
            "C1",
            "r2",
            vec![F, F, P, P, P],
            vec![("r2-1", "D01"), ("r2-2", "D01")],
        ),
        ("C2", "r3", vec![P, P, F, P, P], vec![("r3-3", "D02")]),
        (
            "C3",
            "r4",
            vec![P, P, P, P, F],
            vec![("r4-5", "D03"), ("r4-4", "D03")],
        ),
        ("C4", "r5", vec![P, E, P, P, P], vec![("r5-4", "D04")]),
    ];
    let clones = clones
        .into_iter()
        .map(|(id, prefix, verdicts, acts)| {
            let r = report(id, prefix, &verdicts);
            let a: Vec<_> = acts.iter().map(|(run, d)| activation(run, d)).collect();
            let p = pair_activation_logs(&r, &a);
            (r, p)
        })
        .collect();
    (baseline, clones)
}

#[test]
fn hand_counted_matrix_and_metrics() {
    let (baseline, clones) = five_by_four();
    let pairs: Vec<_> = clones.iter().map(|(r, p)| (r, p)).collect();
    let m = compute_detection_matrix(&baseline, &pairs).unwrap();
    assert_eq!(m.clones, vec!["C1", "C2", "C3", "C4"]);
    assert_eq!(m.cell("T1", "C1"), Some(Cell::Detected));
    assert_eq!(m.cell("T3", "C1"), Some(Cell::NotDetected));
    assert_eq!(m.cell("T4", "C3"), Some(Cell::ActivatedOnly));
    assert_eq!(m.cell("T4", "C4"), Some(Cell::ActivatedOnly));
    assert_eq!(m.cell("T2", "C4"), Some(Cell::TestError));
    assert!(m.warnings.is_empty());

    let metrics = compute_effectiveness_metrics(&m).unwrap();
    assert_eq!(metrics.overall_detection_rate, 0.75);
    assert_eq!(metrics.detected_clones, 3);
    let c1 = &metrics.per_clone_detection["C1"];
    assert_eq!(
        (c1.detected_by, c1.first_detecting_test.as_deref()),
        (2, Some("T1"))
    );
    let c3 = &metrics.per_clone_detection["C3"];
    assert_eq!((c3.detected_by, c3.activated_only), (1, 1));
    let c4 = &metrics.per_clone_detection["C4"];
    assert_eq!(
        (
            c4.detected_by,
            c4.first_detecting_test.as_ref(),
            c4.test_errors
        ),
        (0, None, 1)
    );
    assert_eq!(metrics.per_test_effectiveness["T1"], 0.25);
    assert_eq!(metrics.per_test_effectiveness["T4"], 0.0);
    assert!(metrics
        .per_test_effectiveness
        .values()
        .all(|f| (0.0..=1.0).contains(f)));

    let csv = m.to_csv();
    assert_eq!(csv.lines().next(), Some("test_id;C1;C2;C3;C4"));
    assert_eq!(
        csv.lines().nth(2),
        Some("T2;detected;not_detected;not_detected;test_error")
    );
}

#[test]
fn baseline_failures_exclude_the_row() {
    let baseline = report("baseline", "r1", &[P, F]);
    let clone = report("C1", "r2", &[F, F]);
    let paired = pair_activation_logs(&clone, &[]);
    let m = compute_detection_matrix(&baseline, &[(&clone, &paired)]).unwrap();
    assert_eq!(m.cell("T2", "C1"), Some(Cell::Excluded));
    assert_eq!(m.cell("T1", "C1"), Some(Cell::Detected));
    assert_eq!(m.warnings.len(), 1);
    let metrics = compute_effectiveness_metrics(&m).unwrap();
    assert_eq!(metrics.excluded_tests, vec!["T2"]);
}

#[test]
fn reports_must_select_the_same_tests() {
    let baseline = report("baseline", "r1", &[P, P]);
    let clone = report("C1", "r2", &[P]);
    let paired = pair_activation_logs(&clone, &[]);
    assert_eq!(
        compute_detection_matrix(&baseline, &[(&clone, &paired)]).unwrap_err(),
        MatrixError::SelectionMismatch {
            target: "C1".into()
        }
    );
}

#[test]
fn metric_extremes() {
    let baseline = report("baseline", "r1", &[P, P]);
    let all = report("C1", "r2", &[F, P]);
    let none = report("C2", "r3", &[P, P]);
    let pa = pair_activation_logs(&all, &[]);
    let pn = pair_activation_logs(&none, &[]);
    let m = compute_detection_matrix(&baseline, &[(&all, &pa)]).unwrap();
    assert_eq!(
        compute_effectiveness_metrics(&m)
            .unwrap()
            .overall_detection_rate,
        1.0
    );
    let m = compute_detection_matrix(&baseline, &[(&none, &pn)]).unwrap();
    assert_eq!(
        compute_effectiveness_metrics(&m)
            .unwrap()
            .overall_detection_rate,
        0.0
    );
    let m = compute_detection_matrix(&baseline, &[]).unwrap();
    assert_eq!(
        compute_effectiveness_metrics(&m).unwrap_err(),
        MetricsError::EmptyMatrix
    );
}

fn suite() -> Suite {
    let data = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data");
    let registry = Registry::load(&data.join("registry.toml")).unwrap();
    let model = ProcessModel::load(&data.join("model/uis.toml")).unwrap();
    let paths = load_paths(&data.join("paths/valid.toml")).unwrap();
    Suite::build(&registry, &model, &paths).unwrap()
}

fn label() -> RunLabel {
    RunLabel {
        suite_id: "shipped".into(),
        target: "baseline".into(),
        run_prefix: "r1".into(),
        started_at: "2026-01-01T00:00:00Z".into(),
    }
}

#[test]
fn baseline_run_resets_once_per_test() {
    let transport = InProcess::shipped("baseline-small").unwrap();
    let s = suite();
    let report = run_suite(&transport, &s, &Selection::default(), &label()).unwrap();
    assert_eq!(report.entries.len(), s.tests.len());
    assert!(report.entries.iter().all(|e| e.verdict == Verdict::Pass));
    assert_eq!(report.manifest_clone_id, "baseline");
    let resets = transport
        .app()
        .log()
        .sink()
        .lines()
        .iter()
        .filter(|l| l.contains("event=reset"))
        .count();
    assert_eq!(resets, s.tests.len());
}

#[test]
fn selection_by_category_and_empty_selection() {
    let transport = InProcess::shipped("baseline-small").unwrap();
    let atomic = Selection {
        categories: vec![Category::Negative],
        ids: Vec::new(),
    };
    let report = run_suite(&transport, &suite(), &atomic, &label()).unwrap();
    assert_eq!(report.entries.len(), 23);
    assert!(report
        .entries
        .iter()
        .all(|e| e.category == Category::Negative));
    let nothing = Selection {
        categories: Vec::new(),
        ids: vec!["no-such-test".into()],
    };
    assert_eq!(
        run_suite(&transport, &suite(), &nothing, &label()).unwrap_err(),
        RunError::EmptySelection
    );
}

#[test]
fn unreachable_target_is_reported() {
    let transport = HttpTransport::new("http://127.0.0.1:9");
    let err = run_suite(&transport, &suite(), &Selection::default(), &label()).unwrap_err();
    assert!(matches!(err, RunError::TargetUnreachable(_)));
}

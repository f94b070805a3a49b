//! Acceptance run: one line per criterion, exit status 1 if any fails.
//!
//! Criteria 2 to 5 and 8 need real clone builds and servers, so this target
//! runs two full experiments below `<workspace>/target/acceptance`. The
//! cargo target directory there is reused across invocations.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use testbed::defect::{launch, load_catalog, read_activation_file, LaunchOptions};
use testbed::eval::experiment::{
    run_experiment, ExperimentOptions, ExperimentOutcome, CONTROL_CLONE,
};
use testbed::eval::matrix::Cell;
use testbed::harness::browser::Browser;
use testbed::harness::coverage::{element_coverage_check, page_inventory};
use testbed::harness::oracle::{
    self, expected_error_page, expected_view, Fixture, SHIPPED_FIXTURES,
};
use testbed::harness::registry::{compose_process_test, ComposeError, Registry, Suite};
use testbed::harness::runner::{run_test, Verdict};
use testbed::harness::transport::{HttpTransport, InProcess};
use testbed::process_model::{load_paths, ProcessModel};

const CREATED_AT: &str = "2026-01-01T00:00:00Z";

struct Outcome {
    passed: bool,
    detail: String,
}

fn verdict(problems: Vec<String>, ok_detail: String) -> Outcome {
    if problems.is_empty() {
        Outcome {
            passed: true,
            detail: ok_detail,
        }
    } else {
        let shown: Vec<&String> = problems.iter().take(8).collect();
        let more = problems.len().saturating_sub(shown.len());
        let mut detail = shown
            .iter()
            .map(|s| s.as_str())
            .collect::<Vec<_>>()
            .join("; ");
        if more > 0 {
            detail.push_str(&format!("; and {more} more"));
        }
        Outcome {
            passed: false,
            detail,
        }
    }
}

fn failed(detail: impl Into<String>) -> Outcome {
    Outcome {
        passed: false,
        detail: detail.into(),
    }
}

fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn workspace_root() -> PathBuf {
    crate_dir()
        .join("../..")
        .canonicalize()
        .expect("workspace root")
}

fn data() -> PathBuf {
    crate_dir().join("data")
}

fn secs(d: Duration) -> String {
    format!("{:.1}s", d.as_secs_f64())
}

fn login(browser: &mut Browser<'_>, user: &str) -> Result<(), String> {
    let fields = [
        ("username".to_string(), user.to_string()),
        ("password".to_string(), format!("{user}-secret")),
    ];
    let page = browser.post("/login", &fields).map_err(|e| e.to_string())?;
    if page.view == "home" {
        Ok(())
    } else {
        Err(format!("login as {user} landed on {}", page.view))
    }
}

// 1 ------------------------------------------------------------------------

fn baseline_green(outcome: &ExperimentOutcome, work: &Path) -> Outcome {
    let started = Instant::now();
    let mut problems = Vec::new();
    let dir = outcome.clone_dir(CONTROL_CLONE);
    for fixture in SHIPPED_FIXTURES {
        let mut opts = LaunchOptions::new(work.join("green").join(fixture));
        opts.fixture = fixture.to_string();
        let _ = fs::remove_dir_all(&opts.log_dir);
        let mut deployment = match launch(&dir, &opts) {
            Ok(d) => d,
            Err(e) => {
                problems.push(format!("{fixture}: {e}"));
                continue;
            }
        };
        let transport = HttpTransport::new(&deployment.base_url);
        for (i, test) in outcome.suite.tests.iter().enumerate() {
            let r = run_test(&transport, test, &format!("g-{fixture}-{i:03}"));
            if r.verdict != Verdict::Pass {
                problems.push(format!("{fixture}: {} is {:?}", test.test_id, r.verdict));
            }
        }
        deployment.stop();
        match read_activation_file(&deployment.activation_log) {
            Ok(records) if records.is_empty() => {}
            Ok(records) => {
                problems.push(format!("{fixture}: {} activation records", records.len()))
            }
            Err(e) => problems.push(format!("{fixture}: activation log: {e}")),
        }
    }
    let elapsed = started.elapsed();
    if elapsed > Duration::from_secs(60) {
        problems.push(format!("took {} (limit 60s)", secs(elapsed)));
    }
    verdict(
        problems,
        format!(
            "{} tests x {} fixtures all pass, activation log empty, {}",
            outcome.suite.tests.len(),
            SHIPPED_FIXTURES.len(),
            secs(elapsed)
        ),
    )
}

// 2 ------------------------------------------------------------------------

fn catalog_health(outcome: &ExperimentOutcome) -> Outcome {
    let catalog = match load_catalog(&outcome.def.defects) {
        Ok(c) => c,
        Err(e) => return failed(format!("catalog: {e}")),
    };
    let mut problems = Vec::new();
    let categories: BTreeSet<&str> = catalog.iter().map(|s| s.category.as_str()).collect();
    let multi = catalog.iter().filter(|s| s.is_multi_site()).count();
    if catalog.len() < 20 {
        problems.push(format!("only {} specs", catalog.len()));
    }
    if categories.len() < 8 {
        problems.push(format!("only {} categories", categories.len()));
    }
    if multi < 5 {
        problems.push(format!("only {multi} multi-site specs"));
    }
    let deployed: BTreeSet<&str> = outcome
        .def
        .clones
        .iter()
        .flat_map(|c| c.defects.iter().map(String::as_str))
        .collect();
    for spec in &catalog {
        if !deployed.contains(spec.defect_id.as_str()) {
            problems.push(format!("{} is in no deployed clone", spec.defect_id));
        }
    }
    for run in std::iter::once(&outcome.baseline).chain(&outcome.clones) {
        if run.served_manifest.trim_end() != run.manifest_file.trim_end() {
            problems.push(format!(
                "{} serves a manifest that differs from its file",
                run.clone_id
            ));
        }
    }
    verdict(
        problems,
        format!(
            "{} specs, {} categories, {multi} multi-site; {} clones built and deployed, manifests match",
            catalog.len(),
            categories.len(),
            outcome.clones.len() + 1
        ),
    )
}

// 3 ------------------------------------------------------------------------

fn detection_coverage(outcome: &ExperimentOutcome) -> Outcome {
    let m = &outcome.matrix;
    let mut problems = Vec::new();
    for clone in &m.clones {
        let column = m.column(clone).expect("listed clone");
        if !column.iter().any(|(_, c)| *c == Cell::Detected) {
            let activated = column.iter().any(|(_, c)| *c == Cell::ActivatedOnly);
            problems.push(format!(
                "{clone} undetected{}",
                if activated { " (activated_only)" } else { "" }
            ));
        }
    }
    let rate = outcome.metrics.overall_detection_rate;
    if rate < 0.9 {
        problems.push(format!("detection rate {rate:.3} < 0.9"));
    }
    verdict(
        problems,
        format!(
            "{}/{} clones detected, rate {rate:.3}",
            outcome.metrics.detected_clones, outcome.metrics.clones
        ),
    )
}

// 4 ------------------------------------------------------------------------

fn detection_implies_activation(outcome: &ExperimentOutcome) -> Outcome {
    let mut problems = Vec::new();
    let mut detected = 0;
    for run in &outcome.clones {
        let column = match outcome.matrix.column(&run.clone_id) {
            Some(c) => c,
            None => {
                problems.push(format!("{} missing from the matrix", run.clone_id));
                continue;
            }
        };
        for (test_id, cell) in column {
            if cell != Cell::Detected {
                continue;
            }
            detected += 1;
            let Some(entry) = run.report.entry(test_id) else {
                problems.push(format!("{}/{test_id}: no report entry", run.clone_id));
                continue;
            };
            let matching = run.activations.iter().any(|a| {
                a.run_id == entry.run_id
                    && run
                        .site_keys
                        .contains(&(a.defect_id.clone(), a.site_id.clone()))
            });
            if !matching {
                problems.push(format!(
                    "{}/{test_id} ({}) has no activation",
                    run.clone_id, entry.run_id
                ));
            }
        }
    }
    verdict(
        problems,
        format!("all {detected} detected cells carry an activation record"),
    )
}

// 5 ------------------------------------------------------------------------

/// Written separately from the pipeline's classifier on purpose.
fn brute_cell(baseline: Verdict, clone: Verdict, activated: bool) -> &'static str {
    if baseline != Verdict::Pass {
        return "excluded";
    }
    if clone == Verdict::Error {
        "test_error"
    } else if clone == Verdict::Fail {
        "detected"
    } else if activated {
        "activated_only"
    } else {
        "not_detected"
    }
}

/// Runs every test against one clone, one at a time in reverse order, with
/// run ids of its own. Returns verdict and activation flag per test.
fn brute_column(
    outcome: &ExperimentOutcome,
    clone_id: &str,
    tag: usize,
    work: &Path,
) -> Result<BTreeMap<String, (Verdict, bool)>, String> {
    let mut opts = LaunchOptions::new(work.join("brute").join(clone_id));
    opts.fixture = outcome.def.fixture.clone();
    let _ = fs::remove_dir_all(&opts.log_dir);
    let mut deployment = launch(&outcome.clone_dir(clone_id), &opts).map_err(|e| e.to_string())?;
    let transport = HttpTransport::new(&deployment.base_url);
    let mut verdicts = BTreeMap::new();
    for (i, test) in outcome.suite.tests.iter().rev().enumerate() {
        let run_id = format!("bf{tag}-{i:03}");
        let r = run_test(&transport, test, &run_id);
        verdicts.insert(run_id, (test.test_id.clone(), r.verdict));
    }
    deployment.stop();
    let records = read_activation_file(&deployment.activation_log).map_err(|e| e.to_string())?;
    let active: BTreeSet<&str> = records.iter().map(|r| r.run_id.as_str()).collect();
    Ok(verdicts
        .into_iter()
        .map(|(run_id, (test_id, v))| (test_id, (v, active.contains(run_id.as_str()))))
        .collect())
}

fn matrix_oracle_equivalence(outcome: &ExperimentOutcome, work: &Path) -> Outcome {
    let started = Instant::now();
    let baseline = match brute_column(outcome, CONTROL_CLONE, 0, work) {
        Ok(b) => b,
        Err(e) => return failed(format!("baseline rerun: {e}")),
    };
    let mut problems = Vec::new();
    let mut compared = 0;
    for (k, run) in outcome.clones.iter().enumerate() {
        let column = match brute_column(outcome, &run.clone_id, k + 1, work) {
            Ok(c) => c,
            Err(e) => {
                problems.push(format!("{}: {e}", run.clone_id));
                continue;
            }
        };
        for test_id in &outcome.matrix.tests {
            let expected = match (baseline.get(test_id), column.get(test_id)) {
                (Some((b, _)), Some((c, activated))) => brute_cell(*b, *c, *activated),
                _ => {
                    problems.push(format!("{}/{test_id}: not rerun", run.clone_id));
                    continue;
                }
            };
            let actual = outcome
                .matrix
                .cell(test_id, &run.clone_id)
                .map(Cell::as_str);
            compared += 1;
            if actual != Some(expected) {
                problems.push(format!(
                    "{}/{test_id}: pipeline {:?}, rerun {expected}",
                    run.clone_id, actual
                ));
            }
        }
    }
    let elapsed = started.elapsed();
    if elapsed > Duration::from_secs(600) {
        problems.push(format!("rerun took {} (limit 10 min)", secs(elapsed)));
    }
    verdict(
        problems,
        format!(
            "{compared} cells equal the isolated rerun, {}",
            secs(elapsed)
        ),
    )
}

// 6 ------------------------------------------------------------------------

fn path_composition() -> Outcome {
    let started = Instant::now();
    let (registry, model) = match (
        Registry::load(&data().join("registry.toml")),
        ProcessModel::load(&data().join("model/uis.toml")),
    ) {
        (Ok(r), Ok(m)) => (r, m),
        (r, m) => return failed(format!("inputs: {:?} {:?}", r.err(), m.err())),
    };
    let (valid, invalid) = match (
        load_paths(&data().join("paths/valid.toml")),
        load_paths(&data().join("paths/invalid.toml")),
    ) {
        (Ok(v), Ok(i)) => (v, i),
        (v, i) => return failed(format!("paths: {:?} {:?}", v.err(), i.err())),
    };
    let mut problems = Vec::new();
    if valid.len() != 10 {
        problems.push(format!("{} valid paths shipped", valid.len()));
    }
    if invalid.len() != 5 {
        problems.push(format!("{} invalid paths shipped", invalid.len()));
    }
    for entry in &valid {
        let p = &entry.path;
        match compose_process_test(p, &model, &registry) {
            Ok(test) => {
                if test.blocks.len() != p.transition_ids.len() {
                    problems.push(format!(
                        "{}: {} blocks for {} transitions",
                        p.id,
                        test.blocks.len(),
                        p.transition_ids.len()
                    ));
                }
                let transport = match InProcess::shipped(&test.fixture_id) {
                    Some(t) => t,
                    None => {
                        problems.push(format!("{}: unknown fixture {}", p.id, test.fixture_id));
                        continue;
                    }
                };
                let r = run_test(&transport, &test, &format!("path-{}", p.id));
                if r.verdict != Verdict::Pass {
                    problems.push(format!("{} is {:?} on baseline", p.id, r.verdict));
                }
            }
            Err(e) => problems.push(format!("{}: {e}", p.id)),
        }
    }
    for entry in &invalid {
        let p = &entry.path;
        match compose_process_test(p, &model, &registry) {
            Err(ComposeError::InvalidPath { error, .. }) => {
                if Some(error.kind()) != entry.expect_error.as_deref()
                    || error.index() != entry.expect_index
                {
                    problems.push(format!(
                        "{}: got {} at {:?}, expected {:?} at {:?}",
                        p.id,
                        error.kind(),
                        error.index(),
                        entry.expect_error,
                        entry.expect_index
                    ));
                }
            }
            Err(e) => problems.push(format!("{}: wrong rejection {e}", p.id)),
            Ok(_) => problems.push(format!("{} was accepted", p.id)),
        }
    }
    verdict(
        problems,
        format!(
            "{} valid paths compose and pass, {} invalid paths rejected at the right index, {}",
            valid.len(),
            invalid.len(),
            secs(started.elapsed())
        ),
    )
}

// 7 ------------------------------------------------------------------------

fn element_coverage(suite: &Suite) -> Outcome {
    let transport = InProcess::shipped("baseline-small").expect("shipped fixture");
    let inventory = match page_inventory(&transport) {
        Ok(i) => i,
        Err(e) => return failed(format!("inventory: {e}")),
    };
    match element_coverage_check(&suite.tests, &inventory) {
        Ok(report) => verdict(
            report
                .uncovered_active
                .iter()
                .map(|(view, id)| format!("{view}#{id} uncovered"))
                .collect(),
            format!(
                "{} active elements all covered; passive {}/{}",
                report.active_total,
                report.passive_total - report.uncovered_passive.len(),
                report.passive_total
            ),
        ),
        Err(e) => failed(e.to_string()),
    }
}

// 8 ------------------------------------------------------------------------

fn determinism(first: &Path, second: &Path) -> Outcome {
    let mut problems = Vec::new();
    let files = ["matrix.json", "matrix.csv", "metrics.json"];
    for name in files {
        match (fs::read(first.join(name)), fs::read(second.join(name))) {
            (Ok(a), Ok(b)) if a == b => {}
            (Ok(_), Ok(_)) => problems.push(format!("{name} differs")),
            (a, b) => problems.push(format!("{name}: {:?} {:?}", a.err(), b.err())),
        }
    }
    verdict(
        problems,
        format!("{} identical across two runs", files.join(", ")),
    )
}

// 9 ------------------------------------------------------------------------

/// Compares every (fixture, actor, view) page with the oracle. Views an
/// actor may not see must answer with the login redirect or the forbidden
/// error page, which the oracle predicts as well.
fn oracle_independence() -> Outcome {
    let mut problems = Vec::new();
    let mut pages = 0;
    for fixture_id in SHIPPED_FIXTURES {
        let fx = Fixture::shipped(fixture_id).expect("shipped fixture");
        let transport = InProcess::shipped(fixture_id).expect("shipped fixture");
        let actors = std::iter::once(None).chain(fx.users.iter().map(|u| Some(u.id.as_str())));
        for actor in actors {
            for view in oracle::VIEW_IDS {
                let mut browser = Browser::new(&transport);
                let tag = format!("{fixture_id}/{}/{view}", actor.unwrap_or("anon"));
                if let Err(e) = browser.reset(fixture_id) {
                    problems.push(format!("{tag}: reset {e}"));
                    continue;
                }
                if let Some(user) = actor {
                    if let Err(e) = login(&mut browser, user) {
                        problems.push(format!("{tag}: {e}"));
                        continue;
                    }
                }
                let page = match browser.open(oracle::route(view).expect("routed view")) {
                    Ok(p) => p.clone(),
                    Err(e) => {
                        problems.push(format!("{tag}: {e}"));
                        continue;
                    }
                };
                let role = actor.and_then(|a| fx.user(a)).map(|u| u.role.as_str());
                let expectation = match (oracle::audience(view).expect("known view"), role) {
                    (None, _) => expected_view(&fx, view, actor, None),
                    (Some(_), None) => {
                        expected_view(&fx, "login", None, Some("error:login-required"))
                    }
                    (Some(""), Some(_)) => expected_view(&fx, view, actor, None),
                    (Some(need), Some(have)) if need == have => {
                        expected_view(&fx, view, actor, None)
                    }
                    (Some(_), Some(_)) => expected_error_page(&fx, actor, "forbidden"),
                };
                let expectation = match expectation {
                    Ok(e) => e,
                    Err(e) => {
                        problems.push(format!("{tag}: oracle {e}"));
                        continue;
                    }
                };
                pages += 1;
                if page.view != expectation.view_id {
                    problems.push(format!(
                        "{tag}: rendered {} expected {}",
                        page.view, expectation.view_id
                    ));
                } else if page.pairs() != expectation.elements {
                    problems.push(format!("{tag}: element data differs"));
                }
            }
        }
    }
    verdict(
        problems,
        format!("{pages} (fixture, actor, view) pages equal the oracle"),
    )
}

// 10 -----------------------------------------------------------------------

fn line_coverage() -> Outcome {
    let cargo = std::env::var("CARGO").unwrap_or_else(|_| "cargo".into());
    let output = Command::new(&cargo)
        .args(["llvm-cov", "-p", "uis", "--lib", "--json", "--summary-only"])
        .current_dir(workspace_root())
        .output();
    let output = match output {
        Ok(o) if o.status.success() => o,
        Ok(o) => {
            let err = String::from_utf8_lossy(&o.stderr);
            let last = err
                .lines()
                .rev()
                .find(|l| !l.trim().is_empty())
                .unwrap_or("");
            return failed(format!("cargo llvm-cov failed: {last}"));
        }
        Err(e) => return failed(format!("cannot run cargo llvm-cov: {e}")),
    };
    let doc: serde_json::Value = match serde_json::from_slice(&output.stdout) {
        Ok(v) => v,
        Err(e) => return failed(format!("coverage json: {e}")),
    };
    let (mut covered, mut count, mut files) = (0u64, 0u64, 0);
    for data in doc["data"].as_array().into_iter().flatten() {
        for file in data["files"].as_array().into_iter().flatten() {
            let name = file["filename"]
                .as_str()
                .unwrap_or_default()
                .replace('\\', "/");
            if name.contains("/uis/src/core/") {
                files += 1;
                covered += file["summary"]["lines"]["covered"].as_u64().unwrap_or(0);
                count += file["summary"]["lines"]["count"].as_u64().unwrap_or(0);
            }
        }
    }
    if count == 0 {
        return failed("no domain-logic files in the coverage report");
    }
    let pct = 100.0 * covered as f64 / count as f64;
    let detail = format!("{covered}/{count} lines over {files} domain files = {pct:.1}%");
    if pct >= 85.0 {
        Outcome {
            passed: true,
            detail,
        }
    } else {
        failed(format!("{detail} (< 85%)"))
    }
}

fn main() {
    // `cargo test` passes harness flags; a name filter that excludes this
    // target (or a bare listing) means there is nothing to do.
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        return;
    }
    let work = workspace_root().join("target").join("acceptance");
    fs::create_dir_all(&work).expect("acceptance work dir");
    let catalog = data().join("experiments").join("catalog.toml");
    let options = |name: &str| ExperimentOptions {
        out_dir: work.join(name),
        target_dir: work.join("cargo-target"),
        created_at: Some(CREATED_AT.into()),
    };

    let started = Instant::now();
    let first = run_experiment(&catalog, &options("exp-a"));
    let first_took = started.elapsed();
    let second = run_experiment(&catalog, &options("exp-b"));

    let mut lines: Vec<(usize, &str, Outcome)> = Vec::new();
    match &first {
        Ok(outcome) => {
            eprintln!("experiment finished in {}", secs(first_took));
            lines.push((1, "baseline-green", baseline_green(outcome, &work)));
            lines.push((2, "catalog-health", catalog_health(outcome)));
            lines.push((3, "detection-coverage", detection_coverage(outcome)));
            lines.push((
                4,
                "detection-implies-activation",
                detection_implies_activation(outcome),
            ));
            lines.push((
                5,
                "matrix-oracle-equivalence",
                matrix_oracle_equivalence(outcome, &work),
            ));
        }
        Err(e) => {
            for (n, name) in [
                (1, "baseline-green"),
                (2, "catalog-health"),
                (3, "detection-coverage"),
                (4, "detection-implies-activation"),
                (5, "matrix-oracle-equivalence"),
            ] {
                lines.push((n, name, failed(format!("experiment failed: {e}"))));
            }
        }
    }
    lines.push((6, "path-composition", path_composition()));
    let suite = first
        .as_ref()
        .map(|o| o.suite.clone())
        .map_err(|e| e.to_string());
    lines.push((
        7,
        "element-coverage",
        match &suite {
            Ok(s) => element_coverage(s),
            Err(e) => failed(format!("suite unavailable: {e}")),
        },
    ));
    lines.push((
        8,
        "determinism",
        match (&first, &second) {
            (Ok(a), Ok(b)) => determinism(&a.out_dir, &b.out_dir),
            (a, b) => failed(format!(
                "experiment failed: {:?} {:?}",
                a.as_ref().err().map(ToString::to_string),
                b.as_ref().err().map(ToString::to_string)
            )),
        },
    ));
    lines.push((9, "oracle-independence", oracle_independence()));
    lines.push((10, "line-coverage", line_coverage()));

    let mut all = true;
    for (n, name, outcome) in &lines {
        all &= outcome.passed;
        println!(
            "criterion {n:>2} {name}: {} ({})",
            if outcome.passed { "PASS" } else { "FAIL" },
            outcome.detail
        );
    }
    println!(
        "acceptance: {} in {}",
        if all { "PASS" } else { "FAIL" },
        secs(started.elapsed())
    );
    if !all {
        std::process::exit(1);
    }
}

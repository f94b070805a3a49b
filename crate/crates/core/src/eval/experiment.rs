//! End-to-end experiment: seed, build, deploy, run, pair, evaluate.
//!
//! An experiment document names the baseline tree, the defect catalog,
//! the test inputs and the clones to evaluate. A control clone without
//! defects (`baseline`) is always added; its report is the reference row
//! of the detection matrix. All artifacts go below one output directory.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::matrix::{compute_detection_matrix, Cell, DetectionMatrix, MatrixError};
use super::metrics::{compute_effectiveness_metrics, EffectivenessMetrics, MetricsError};
use super::pair::{pair_activation_logs, PairedReport};
use super::report::{run_suite, RunError, RunLabel, Selection, TestReport};
use super::summary::render_summary;
use super::SelfCheck;
use crate::defect::activation::{read_activation_file, ActivationRecord};
use crate::defect::deploy::{build_clone, launch, BuildOptions, DeployError, LaunchOptions};
use crate::defect::seed::{
    default_created_at, find_lockfile, seed_clone, SeedError, MANIFEST_FILE,
};
use crate::defect::spec::{load_catalog, DefectSpec};
use crate::harness::registry::{Registry, Suite};
use crate::harness::runner::Verdict;
use crate::harness::transport::HttpTransport;
use crate::process_model::{load_paths, ProcessModel};

pub const CONTROL_CLONE: &str = "baseline";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CloneDef {
    pub id: String,
    pub defects: Vec<String>,
}

fn default_workers() -> usize {
    4
}

fn default_fixture() -> String {
    "baseline-small".into()
}

/// Experiment document. Paths are relative to the document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentDef {
    pub id: String,
    pub baseline: PathBuf,
    pub defects: PathBuf,
    pub registry: PathBuf,
    pub model: PathBuf,
    #[serde(default)]
    pub paths: Vec<PathBuf>,
    /// Tuple file per template id, replacing the registry's default.
    #[serde(default)]
    pub tuples: BTreeMap<String, PathBuf>,
    #[serde(default)]
    pub selection: Selection,
    #[serde(default = "default_workers")]
    pub workers: usize,
    /// Fixture the servers start with.
    #[serde(default = "default_fixture")]
    pub fixture: String,
    #[serde(rename = "clone")]
    pub clones: Vec<CloneDef>,
}

impl ExperimentDef {
    pub fn load(path: &Path) -> Result<ExperimentDef, ExperimentError> {
        let text = fs::read_to_string(path).map_err(|e| io(path, e))?;
        let mut def: ExperimentDef =
            toml::from_str(&text).map_err(|e| ExperimentError::Definition(e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let abs = |p: &PathBuf| base.join(p);
        def.baseline = abs(&def.baseline);
        def.defects = abs(&def.defects);
        def.registry = abs(&def.registry);
        def.model = abs(&def.model);
        def.paths = def.paths.iter().map(abs).collect();
        def.tuples = def
            .tuples
            .iter()
            .map(|(k, v)| (k.clone(), abs(v)))
            .collect();
        let mut ids = BTreeSet::from([CONTROL_CLONE.to_string()]);
        for c in &def.clones {
            if !ids.insert(c.id.clone()) {
                return Err(ExperimentError::Definition(format!(
                    "clone id {} is used twice",
                    c.id
                )));
            }
        }
        Ok(def)
    }

    /// The shipped suite after tuple overrides, before selection.
    pub fn suite(&self) -> Result<Suite, ExperimentError> {
        let mut registry =
            Registry::load(&self.registry).map_err(|e| ExperimentError::Inputs(e.to_string()))?;
        for (template, file) in &self.tuples {
            let t = registry
                .templates
                .iter_mut()
                .find(|t| t.id == *template)
                .ok_or_else(|| ExperimentError::Inputs(format!("unknown template {template}")))?;
            t.tuples = file.clone();
        }
        let model =
            ProcessModel::load(&self.model).map_err(|e| ExperimentError::Inputs(e.to_string()))?;
        let mut paths = Vec::new();
        for p in &self.paths {
            paths.extend(load_paths(p).map_err(|e| ExperimentError::Inputs(e.to_string()))?);
        }
        Suite::build(&registry, &model, &paths).map_err(|e| ExperimentError::Inputs(e.to_string()))
    }
}

#[derive(Debug, Clone, Error)]
pub enum ExperimentError {
    #[error("experiment definition: {0}")]
    Definition(String),
    #[error("test inputs: {0}")]
    Inputs(String),
    #[error("defect catalog: {0}")]
    Catalog(String),
    #[error("clone {clone} lists unknown defect {defect}")]
    UnknownDefect { clone: String, defect: String },
    #[error("seeding {clone}: {error}")]
    Seed { clone: String, error: SeedError },
    #[error(transparent)]
    Deploy(#[from] DeployError),
    #[error("running {clone}: {error}")]
    Run { clone: String, error: RunError },
    #[error("activation log of {clone}: {message}")]
    Logs { clone: String, message: String },
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{0}")]
    Io(String),
}

fn io(path: &Path, e: std::io::Error) -> ExperimentError {
    ExperimentError::Io(format!("{}: {e}", path.display()))
}

#[derive(Debug, Clone)]
pub struct ExperimentOptions {
    pub out_dir: PathBuf,
    /// Shared cargo target directory for clone builds.
    pub target_dir: PathBuf,
    /// Manifest timestamp; fixing it keeps clone trees byte-stable.
    pub created_at: Option<String>,
}

impl ExperimentOptions {
    pub fn new(out_dir: impl Into<PathBuf>) -> ExperimentOptions {
        let out_dir = out_dir.into();
        ExperimentOptions {
            target_dir: out_dir.join("cargo-target"),
            out_dir,
            created_at: None,
        }
    }
}

/// What one clone produced.
#[derive(Debug, Clone)]
pub struct CloneRun {
    pub clone_id: String,
    pub run_prefix: String,
    pub report: TestReport,
    pub activations: Vec<ActivationRecord>,
    pub paired: PairedReport,
    /// Non-empty run ids seen in the activity log.
    pub activity_run_ids: BTreeSet<String>,
    pub served_manifest: String,
    pub manifest_file: String,
    pub site_keys: BTreeSet<(String, String)>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub def: ExperimentDef,
    pub suite: Suite,
    pub baseline: CloneRun,
    pub clones: Vec<CloneRun>,
    pub matrix: DetectionMatrix,
    pub metrics: EffectivenessMetrics,
    pub self_checks: Vec<SelfCheck>,
    pub out_dir: PathBuf,
}

impl ExperimentOutcome {
    pub fn self_checks_pass(&self) -> bool {
        self.self_checks.iter().all(|c| c.passed)
    }

    pub fn clone_dir(&self, clone_id: &str) -> PathBuf {
        crate::defect::seed::clone_dir(&self.out_dir, clone_id)
    }
}

fn resolve_specs<'c>(
    catalog: &'c [DefectSpec],
    clone: &CloneDef,
) -> Result<Vec<&'c DefectSpec>, ExperimentError> {
    clone
        .defects
        .iter()
        .map(|d| {
            catalog.iter().find(|s| s.defect_id == *d).ok_or_else(|| {
                ExperimentError::UnknownDefect {
                    clone: clone.id.clone(),
                    defect: d.clone(),
                }
            })
        })
        .collect()
}

/// Seeds the control clone and every experiment clone below `out`.
pub fn seed_all(
    def: &ExperimentDef,
    out: &Path,
    created_at: &str,
) -> Result<Vec<CloneDef>, ExperimentError> {
    let catalog =
        load_catalog(&def.defects).map_err(|e| ExperimentError::Catalog(e.to_string()))?;
    let lockfile = find_lockfile(&def.baseline);
    let mut all = vec![CloneDef {
        id: CONTROL_CLONE.into(),
        defects: Vec::new(),
    }];
    all.extend(def.clones.iter().cloned());
    for clone in &all {
        let specs = resolve_specs(&catalog, clone)?;
        seed_clone(
            &def.baseline,
            &specs,
            out,
            &clone.id,
            created_at,
            lockfile.as_deref(),
        )
        .map_err(|error| ExperimentError::Seed {
            clone: clone.id.clone(),
            error,
        })?;
    }
    Ok(all)
}

fn run_one(
    def: &ExperimentDef,
    suite: &Suite,
    out: &Path,
    clone_id: &str,
    run_prefix: &str,
    started_at: &str,
) -> Result<CloneRun, ExperimentError> {
    let dir = crate::defect::seed::clone_dir(out, clone_id);
    let mut opts = LaunchOptions::new(out.join("logs").join(clone_id));
    opts.fixture = def.fixture.clone();
    let mut deployment = launch(&dir, &opts)?;
    let transport = HttpTransport::new(&deployment.base_url);
    let label = RunLabel {
        suite_id: def.id.clone(),
        target: clone_id.to_string(),
        run_prefix: run_prefix.to_string(),
        started_at: started_at.to_string(),
    };
    let report = run_suite(&transport, suite, &def.selection, &label);
    deployment.stop();
    let report = report.map_err(|error| ExperimentError::Run {
        clone: clone_id.to_string(),
        error,
    })?;
    let logs = |message: String| ExperimentError::Logs {
        clone: clone_id.to_string(),
        message,
    };
    let activations =
        read_activation_file(&deployment.activation_log).map_err(|e| logs(e.to_string()))?;
    let activity = fs::read_to_string(&deployment.activity_log).map_err(|e| logs(e.to_string()))?;
    let mut activity_run_ids = BTreeSet::new();
    for line in activity.lines().filter(|l| !l.trim().is_empty()) {
        let record = uis::activity::ActivityLogRecord::parse_line(line).map_err(logs)?;
        activity_run_ids.extend(record.run_id);
    }
    let manifest_file = fs::read_to_string(dir.join(MANIFEST_FILE)).map_err(|e| io(&dir, e))?;
    Ok(CloneRun {
        clone_id: clone_id.to_string(),
        run_prefix: run_prefix.to_string(),
        paired: pair_activation_logs(&report, &activations),
        site_keys: deployment.manifest.site_keys(),
        report,
        activations,
        activity_run_ids,
        served_manifest: deployment.served_manifest.clone(),
        manifest_file,
    })
}

/// Runs every clone's suite, at most `workers` at a time. Results come
/// back in input order.
fn run_all(
    def: &ExperimentDef,
    suite: &Suite,
    out: &Path,
    clones: &[CloneDef],
    started_at: &str,
) -> Result<Vec<CloneRun>, ExperimentError> {
    let queue: Mutex<VecDeque<usize>> = Mutex::new((0..clones.len()).collect());
    let results: Mutex<Vec<Option<Result<CloneRun, ExperimentError>>>> =
        Mutex::new((0..clones.len()).map(|_| None).collect());
    let workers = def.workers.clamp(1, clones.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let Some(i) = queue.lock().expect("queue lock").pop_front() else {
                    break;
                };
                let prefix = format!("r{}", i + 1);
                let r = run_one(def, suite, out, &clones[i].id, &prefix, started_at);
                results.lock().expect("results lock")[i] = Some(r);
            });
        }
    });
    results
        .into_inner()
        .expect("results lock")
        .into_iter()
        .map(|r| r.expect("every clone ran"))
        .collect()
}

/// Testbed invariants over a finished experiment.
pub fn self_checks(
    baseline: &CloneRun,
    clones: &[CloneRun],
    matrix: &DetectionMatrix,
    metrics: &EffectivenessMetrics,
) -> Vec<SelfCheck> {
    let mut checks = Vec::new();
    checks.push(SelfCheck::new(
        "baseline-green",
        baseline
            .report
            .entries
            .iter()
            .filter(|e| e.verdict != Verdict::Pass)
            .map(|e| format!("{} is {:?}", e.test_id, e.verdict))
            .collect(),
    ));
    checks.push(SelfCheck::new(
        "baseline-activation-log-empty",
        baseline.activations.iter().map(|a| a.to_line()).collect(),
    ));
    let mut missing = Vec::new();
    for run in clones {
        for (test, cell) in matrix.column(&run.clone_id).unwrap_or_default() {
            let activated = run
                .paired
                .activations_of(test)
                .is_some_and(|a| !a.is_empty());
            if cell == Cell::Detected && !activated {
                missing.push(format!(
                    "{test} detects {} without activation",
                    run.clone_id
                ));
            }
        }
    }
    checks.push(SelfCheck::new("detection-implies-activation", missing));
    let mut foreign = Vec::new();
    for run in clones {
        for a in &run.activations {
            if !run
                .site_keys
                .contains(&(a.defect_id.clone(), a.site_id.clone()))
            {
                foreign.push(format!(
                    "{} logged {}/{}",
                    run.clone_id, a.defect_id, a.site_id
                ));
            }
        }
    }
    checks.push(SelfCheck::new("activations-match-manifest", foreign));
    let mut unreported = Vec::new();
    let mut seen_runs = BTreeMap::new();
    for run in std::iter::once(baseline).chain(clones) {
        let ids: BTreeSet<&str> = run
            .report
            .entries
            .iter()
            .map(|e| e.run_id.as_str())
            .collect();
        for r in &ids {
            if let Some(other) = seen_runs.insert(r.to_string(), run.clone_id.clone()) {
                unreported.push(format!(
                    "run id {r} appears for {other} and {}",
                    run.clone_id
                ));
            }
        }
        let orphan_ids: BTreeSet<String> = run
            .paired
            .orphans
            .iter()
            .filter_map(|l| ActivationRecord::parse_line(l).ok().map(|a| a.run_id))
            .collect();
        for r in &run.activity_run_ids {
            if !ids.contains(r.as_str()) && !orphan_ids.contains(r) {
                unreported.push(format!("{} logged unreported run id {r}", run.clone_id));
            }
        }
    }
    checks.push(SelfCheck::new("report-completeness", unreported));
    checks.push(SelfCheck::new(
        "served-manifest-matches",
        std::iter::once(baseline)
            .chain(clones)
            .filter(|r| r.served_manifest != r.manifest_file)
            .map(|r| format!("{} serves a different manifest", r.clone_id))
            .collect(),
    ));
    let detected_columns = (0..matrix.clones.len())
        .filter(|c| matrix.cells.iter().any(|row| row[*c] == Cell::Detected))
        .count();
    let refold = detected_columns as f64 / matrix.clones.len().max(1) as f64;
    checks.push(SelfCheck::new(
        "metrics-consistent",
        if (refold - metrics.overall_detection_rate).abs() < 1e-12 {
            Vec::new()
        } else {
            vec![format!(
                "matrix gives {refold}, metrics say {}",
                metrics.overall_detection_rate
            )]
        },
    ));
    checks
}

fn write(path: &Path, content: &str) -> Result<(), ExperimentError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| io(parent, e))?;
    }
    fs::write(path, content).map_err(|e| io(path, e))
}

/// `eval run`: the whole experiment in one call.
pub fn run_experiment(
    def_path: &Path,
    opts: &ExperimentOptions,
) -> Result<ExperimentOutcome, ExperimentError> {
    let def = ExperimentDef::load(def_path)?;
    let suite = def.suite()?;
    if def.selection.apply(&suite).tests.is_empty() {
        return Err(ExperimentError::Run {
            clone: CONTROL_CLONE.into(),
            error: RunError::EmptySelection,
        });
    }
    let out = &opts.out_dir;
    fs::create_dir_all(out).map_err(|e| io(out, e))?;
    let created_at = opts.created_at.clone().unwrap_or_else(default_created_at);
    let all = seed_all(&def, out, &created_at)?;
    let build = BuildOptions::new(&opts.target_dir);
    for clone in &all {
        build_clone(&crate::defect::seed::clone_dir(out, &clone.id), &build)?;
    }
    let started_at = chrono::Utc::now().format("%Y-%m-%dT%H:%M:%SZ").to_string();
    let mut runs = run_all(&def, &suite, out, &all, &started_at)?;
    let baseline = runs.remove(0);

    for run in std::iter::once(&baseline).chain(&runs) {
        write(
            &out.join("reports").join(format!("{}.json", run.clone_id)),
            &run.report.to_json(),
        )?;
        let paired = serde_json::to_string_pretty(&run.paired).expect("paired report serialises");
        write(
            &out.join("paired").join(format!("{}.json", run.clone_id)),
            &(paired + "\n"),
        )?;
    }
    let pairs: Vec<(&TestReport, &PairedReport)> =
        runs.iter().map(|r| (&r.report, &r.paired)).collect();
    let matrix = compute_detection_matrix(&baseline.report, &pairs)?;
    let metrics = compute_effectiveness_metrics(&matrix)?;
    let checks = self_checks(&baseline, &runs, &matrix, &metrics);
    write(&out.join("matrix.csv"), &matrix.to_csv())?;
    write(&out.join("matrix.json"), &matrix.to_json())?;
    write(&out.join("metrics.json"), &metrics.to_json())?;
    write(
        &out.join("self-check.json"),
        &(serde_json::to_string_pretty(&checks).expect("checks serialise") + "\n"),
    )?;
    write(
        &out.join("summary.html"),
        &render_summary(&def.id, &matrix, &metrics, &checks),
    )?;
    Ok(ExperimentOutcome {
        def,
        suite,
        baseline,
        clones: runs,
        matrix,
        metrics,
        self_checks: checks,
        out_dir: out.clone(),
    })
}

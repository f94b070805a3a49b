//! Running a selection of the suite against one server and recording it.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::defect::seed::CloneManifest;
use crate::harness::browser::Browser;
use crate::harness::registry::{Category, Suite};
use crate::harness::runner::{run_id, run_test, TestResult, Verdict};
use crate::harness::transport::Transport;

/// Which tests to run. Empty lists select everything.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Selection {
    #[serde(default)]
    pub categories: Vec<Category>,
    #[serde(default)]
    pub ids: Vec<String>,
}

impl Selection {
    pub fn apply(&self, suite: &Suite) -> Suite {
        Suite {
            tests: suite
                .tests
                .iter()
                .filter(|t| self.categories.is_empty() || self.categories.contains(&t.category))
                .filter(|t| self.ids.is_empty() || self.ids.contains(&t.test_id))
                .cloned()
                .collect(),
            warnings: suite.warnings.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestReport {
    pub suite_id: String,
    /// Clone id of the target, `baseline` for the control clone.
    pub target: String,
    /// Clone id announced by the server's `/testbed/defects`.
    pub manifest_clone_id: String,
    pub defect_ids: Vec<String>,
    pub started_at: String,
    #[serde(default)]
    pub environment: BTreeMap<String, String>,
    /// Suite build notes, such as paths that start mid-model.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    pub entries: Vec<TestResult>,
}

impl TestReport {
    pub fn test_ids(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.test_id.as_str()).collect()
    }

    pub fn entry(&self, test_id: &str) -> Option<&TestResult> {
        self.entries.iter().find(|e| e.test_id == test_id)
    }

    pub fn verdict_counts(&self) -> BTreeMap<Verdict, usize> {
        let mut counts = BTreeMap::new();
        for e in &self.entries {
            *counts.entry(e.verdict).or_default() += 1;
        }
        counts
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises") + "\n"
    }

    pub fn load(path: &Path) -> Result<TestReport, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RunError {
    #[error("target unreachable: {0}")]
    TargetUnreachable(String),
    #[error("the selection matches no test")]
    EmptySelection,
}

/// Identity of a suite run.
#[derive(Debug, Clone)]
pub struct RunLabel {
    pub suite_id: String,
    pub target: String,
    /// Run ids are `<prefix>-<ordinal>`.
    pub run_prefix: String,
    pub started_at: String,
}

/// Runs the selected tests in suite order, one fixture reset per test.
pub fn run_suite(
    transport: &dyn Transport,
    suite: &Suite,
    selection: &Selection,
    label: &RunLabel,
) -> Result<TestReport, RunError> {
    let selected = selection.apply(suite);
    if selected.tests.is_empty() {
        return Err(RunError::EmptySelection);
    }
    let manifest: CloneManifest = Browser::new(transport)
        .defects()
        .map_err(|e| RunError::TargetUnreachable(e.to_string()))?;
    let entries = selected
        .tests
        .iter()
        .enumerate()
        .map(|(i, t)| run_test(transport, t, &run_id(&label.run_prefix, i + 1)))
        .collect();
    Ok(TestReport {
        suite_id: label.suite_id.clone(),
        target: label.target.clone(),
        manifest_clone_id: manifest.clone_id,
        defect_ids: manifest.defect_ids,
        started_at: label.started_at.clone(),
        environment: BTreeMap::from([
            ("transport".to_string(), transport.describe()),
            (
                "testbed_version".to_string(),
                env!("CARGO_PKG_VERSION").to_string(),
            ),
        ]),
        warnings: selected.warnings,
        entries,
    })
}

//! The detection matrix: one row per test, one column per clone.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::pair::PairedReport;
use super::report::TestReport;
use crate::harness::runner::Verdict;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cell {
    /// Passed on the baseline, failed on the clone.
    Detected,
    NotDetected,
    /// Passed on the clone although a defect site ran under the test.
    ActivatedOnly,
    /// The test errored on the clone.
    TestError,
    /// The test does not pass on the baseline; the whole row is void.
    Excluded,
}

impl Cell {
    pub fn as_str(self) -> &'static str {
        match self {
            Cell::Detected => "detected",
            Cell::NotDetected => "not_detected",
            Cell::ActivatedOnly => "activated_only",
            Cell::TestError => "test_error",
            Cell::Excluded => "excluded",
        }
    }

    /// Classifies one (test, clone) pair.
    pub fn classify(baseline: Verdict, clone: Verdict, activated: bool) -> Cell {
        match (baseline, clone) {
            (Verdict::Fail | Verdict::Error, _) => Cell::Excluded,
            (Verdict::Pass, Verdict::Error) => Cell::TestError,
            (Verdict::Pass, Verdict::Fail) => Cell::Detected,
            (Verdict::Pass, Verdict::Pass) if activated => Cell::ActivatedOnly,
            (Verdict::Pass, Verdict::Pass) => Cell::NotDetected,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionMatrix {
    pub tests: Vec<String>,
    pub clones: Vec<String>,
    /// `cells[test][clone]`.
    pub cells: Vec<Vec<Cell>>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MatrixError {
    #[error("report for {target} selects different tests than the baseline")]
    SelectionMismatch { target: String },
    #[error("no paired activations for {0}")]
    MissingPairing(String),
}

impl DetectionMatrix {
    pub fn cell(&self, test_id: &str, clone_id: &str) -> Option<Cell> {
        let r = self.tests.iter().position(|t| t == test_id)?;
        let c = self.clones.iter().position(|t| t == clone_id)?;
        Some(self.cells[r][c])
    }

    pub fn column(&self, clone_id: &str) -> Option<Vec<(&str, Cell)>> {
        let c = self.clones.iter().position(|t| t == clone_id)?;
        Some(
            self.tests
                .iter()
                .zip(&self.cells)
                .map(|(t, row)| (t.as_str(), row[c]))
                .collect(),
        )
    }

    /// `;`-separated table with a header row.
    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new()
            .delimiter(b';')
            .from_writer(Vec::new());
        let mut header = vec!["test_id".to_string()];
        header.extend(self.clones.iter().cloned());
        w.write_record(&header).expect("in-memory write");
        for (t, row) in self.tests.iter().zip(&self.cells) {
            let mut rec = vec![t.as_str()];
            rec.extend(row.iter().map(|c| c.as_str()));
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 table")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("matrix serialises") + "\n"
    }
}

pub fn compute_detection_matrix(
    baseline: &TestReport,
    clones: &[(&TestReport, &PairedReport)],
) -> Result<DetectionMatrix, MatrixError> {
    let tests: Vec<String> = baseline.entries.iter().map(|e| e.test_id.clone()).collect();
    let wanted: BTreeSet<&str> = tests.iter().map(String::as_str).collect();
    for (report, paired) in clones {
        let ids = report.test_ids();
        let unique: BTreeSet<&str> = ids.iter().copied().collect();
        if unique != wanted || ids.len() != tests.len() {
            return Err(MatrixError::SelectionMismatch {
                target: report.target.clone(),
            });
        }
        if paired.target != report.target {
            return Err(MatrixError::MissingPairing(report.target.clone()));
        }
    }
    let mut warnings = Vec::new();
    let mut cells = Vec::with_capacity(tests.len());
    for entry in &baseline.entries {
        if entry.verdict != Verdict::Pass {
            warnings.push(format!(
                "test {} is {:?} on the baseline; row excluded",
                entry.test_id, entry.verdict
            ));
        }
        let row = clones
            .iter()
            .map(|(report, paired)| {
                let clone_entry = report.entry(&entry.test_id).expect("selection checked");
                let activated = paired
                    .activations_of(&entry.test_id)
                    .is_some_and(|a| !a.is_empty());
                Cell::classify(entry.verdict, clone_entry.verdict, activated)
            })
            .collect();
        cells.push(row);
    }
    Ok(DetectionMatrix {
        tests,
        clones: clones.iter().map(|(r, _)| r.target.clone()).collect(),
        cells,
        warnings,
    })
}

//! Effectiveness metrics folded from a detection matrix.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::matrix::{Cell, DetectionMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloneMetrics {
    pub detected_by: usize,
    /// First detecting test in suite order.
    pub first_detecting_test: Option<String>,
    pub activated_only: usize,
    pub test_errors: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectivenessMetrics {
    pub per_clone_detection: BTreeMap<String, CloneMetrics>,
    /// Fraction of clones each (non-excluded) test detects.
    pub per_test_effectiveness: BTreeMap<String, f64>,
    pub excluded_tests: Vec<String>,
    pub clones: usize,
    pub detected_clones: usize,
    pub overall_detection_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("the matrix has no tests or no clones")]
    EmptyMatrix,
}

impl EffectivenessMetrics {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialise") + "\n"
    }
}

pub fn compute_effectiveness_metrics(
    matrix: &DetectionMatrix,
) -> Result<EffectivenessMetrics, MetricsError> {
    if matrix.tests.is_empty() || matrix.clones.is_empty() {
        return Err(MetricsError::EmptyMatrix);
    }
    let mut per_clone = BTreeMap::new();
    for (c, clone) in matrix.clones.iter().enumerate() {
        let column = || matrix.cells.iter().map(move |row| row[c]);
        let count = |kind: Cell| column().filter(|x| *x == kind).count();
        let first = matrix
            .tests
            .iter()
            .zip(column())
            .find(|(_, cell)| *cell == Cell::Detected)
            .map(|(t, _)| t.clone());
        per_clone.insert(
            clone.clone(),
            CloneMetrics {
                detected_by: count(Cell::Detected),
                first_detecting_test: first,
                activated_only: count(Cell::ActivatedOnly),
                test_errors: count(Cell::TestError),
            },
        );
    }
    let mut per_test = BTreeMap::new();
    let mut excluded = Vec::new();
    for (t, row) in matrix.tests.iter().zip(&matrix.cells) {
        if row.iter().all(|c| *c == Cell::Excluded) {
            excluded.push(t.clone());
            continue;
        }
        let hits = row.iter().filter(|c| **c == Cell::Detected).count();
        per_test.insert(t.clone(), hits as f64 / row.len() as f64);
    }
    let detected_clones = per_clone.values().filter(|m| m.detected_by > 0).count();
    Ok(EffectivenessMetrics {
        overall_detection_rate: detected_clones as f64 / matrix.clones.len() as f64,
        clones: matrix.clones.len(),
        detected_clones,
        per_clone_detection: per_clone,
        per_test_effectiveness: per_test,
        excluded_tests: excluded,
    })
}

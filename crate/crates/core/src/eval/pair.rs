//! Pairing a test report with the activation log of the same run window.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::report::TestReport;
use crate::defect::activation::ActivationRecord;

/// `(defect_id, site_id)`.
pub type SiteKey = (String, String);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub test_id: String,
    pub run_id: String,
    pub activations: BTreeSet<SiteKey>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairedReport {
    pub target: String,
    pub entries: Vec<Annotation>,
    /// Activation log lines whose run id belongs to no entry.
    pub orphans: Vec<String>,
}

impl PairedReport {
    pub fn activations_of(&self, test_id: &str) -> Option<&BTreeSet<SiteKey>> {
        self.entries
            .iter()
            .find(|a| a.test_id == test_id)
            .map(|a| &a.activations)
    }
}

pub fn pair_activation_logs(report: &TestReport, activations: &[ActivationRecord]) -> PairedReport {
    let mut by_run: BTreeMap<&str, BTreeSet<SiteKey>> = report
        .entries
        .iter()
        .map(|e| (e.run_id.as_str(), BTreeSet::new()))
        .collect();
    let mut orphans = Vec::new();
    for a in activations {
        match by_run.get_mut(a.run_id.as_str()) {
            Some(set) => {
                set.insert((a.defect_id.clone(), a.site_id.clone()));
            }
            None => orphans.push(a.to_line()),
        }
    }
    PairedReport {
        target: report.target.clone(),
        entries: report
            .entries
            .iter()
            .map(|e| Annotation {
                test_id: e.test_id.clone(),
                run_id: e.run_id.clone(),
                activations: by_run.remove(e.run_id.as_str()).unwrap_or_default(),
            })
            .collect(),
        orphans,
    }
}

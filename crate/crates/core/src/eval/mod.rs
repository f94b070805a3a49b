//! Experiment driver and evaluation: reports, pairing with activation
//! logs, the detection matrix and effectiveness metrics.

pub mod experiment;
pub mod matrix;
pub mod metrics;
pub mod pair;
pub mod report;
pub mod summary;

use serde::{Deserialize, Serialize};

/// One invariant of the testbed itself, checked after every experiment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelfCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl SelfCheck {
    pub fn new(name: &str, problems: Vec<String>) -> SelfCheck {
        SelfCheck {
            name: name.to_string(),
            passed: problems.is_empty(),
            detail: if problems.is_empty() {
                "ok".to_string()
            } else {
                problems.join("; ")
            },
        }
    }
}

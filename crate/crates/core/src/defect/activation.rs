//! Reading activation logs written by seeded hooks.

use std::path::Path;

use thiserror::Error;
pub use uis::activation::ActivationRecord;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ActivationLogError {
    /// 1-based line number of the first line that does not parse.
    #[error("corrupt activation log line {line}: {reason}")]
    CorruptLine { line: usize, reason: String },
    #[error("activation log unreadable: {0}")]
    Io(String),
}

/// Parses records in file order. Blank lines are skipped.
pub fn read_activation_log(text: &str) -> Result<Vec<ActivationRecord>, ActivationLogError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            ActivationRecord::parse_line(l).map_err(|reason| ActivationLogError::CorruptLine {
                line: i + 1,
                reason,
            })
        })
        .collect()
}

/// A missing file reads as an empty log: no hook has fired yet.
pub fn read_activation_file(path: &Path) -> Result<Vec<ActivationRecord>, ActivationLogError> {
    match std::fs::read_to_string(path) {
        Ok(text) => read_activation_log(&text),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Vec::new()),
        Err(e) => Err(ActivationLogError::Io(format!("{}: {e}", path.display()))),
    }
}

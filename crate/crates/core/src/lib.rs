//! Defect-injection testbed around the `uis` reference application.
//!
//! * [`process_model`] holds the labeled transition system of user flows.
//! * [`defect`] seeds defect clones, builds and launches them.
//! * [`harness`] runs atomic, process and negative tests against a server.
//! * [`eval`] turns suite reports and activation logs into a detection
//!   matrix and effectiveness metrics.

pub mod defect;
pub mod eval;
pub mod harness;
pub mod process_model;

//! Test harness: transports, page objects, the reference model and the runner.

pub mod browser;
pub mod coverage;
pub mod oracle;
pub mod page;
pub mod registry;
pub mod runner;
pub mod transport;
pub mod world;

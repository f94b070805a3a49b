//! Activation evidence for seeded defects.
//!
//! The defect seeder inserts a call to [`record_activation`] in front of
//! every patched region of a clone. The baseline never calls it.
//!
//! Line format mirrors the activity log:
//!
//! ```text
//! ts=2026-10-17T10:00:00.123Z run_id=r3-7 defect_id=D01 site_id=S1 path=/subjects
//! ```

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::sync::{Arc, RwLock};

use chrono::{DateTime, Utc};

use crate::activity::{format_timestamp, parse_timestamp, Sink, SinkUnavailable};
use crate::logfmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActivationRecord {
    pub timestamp: DateTime<Utc>,
    pub run_id: String,
    pub defect_id: String,
    pub site_id: String,
    pub request_path: String,
}

impl ActivationRecord {
    pub fn to_line(&self) -> String {
        let ts = format_timestamp(&self.timestamp);
        logfmt::encode([
            ("ts", ts.as_str()),
            ("run_id", &self.run_id),
            ("defect_id", &self.defect_id),
            ("site_id", &self.site_id),
            ("path", &self.request_path),
        ])
    }

    pub fn parse_line(line: &str) -> Result<Self, String> {
        let mut map: BTreeMap<String, String> = logfmt::parse(line)
            .map_err(|e| e.to_string())?
            .into_iter()
            .collect();
        let mut take = |k: &str| map.remove(k).ok_or_else(|| format!("missing field {k}"));
        let timestamp = parse_timestamp(&take("ts")?)?;
        let record = ActivationRecord {
            timestamp,
            run_id: take("run_id")?,
            defect_id: take("defect_id")?,
            site_id: take("site_id")?,
            request_path: take("path")?,
        };
        if record.defect_id.is_empty() || record.site_id.is_empty() {
            return Err("empty defect_id or site_id".into());
        }
        Ok(record)
    }
}

/// Correlation data of the request being handled on this thread.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RequestContext {
    pub run_id: Option<String>,
    pub path: String,
}

thread_local! {
    static CURRENT: RefCell<Option<RequestContext>> = const { RefCell::new(None) };
}

static SINK: RwLock<Option<Arc<Sink>>> = RwLock::new(None);

/// Restores the previous context when dropped.
pub struct ContextGuard {
    previous: Option<RequestContext>,
}

impl Drop for ContextGuard {
    fn drop(&mut self) {
        let previous = self.previous.take();
        CURRENT.with(|c| *c.borrow_mut() = previous);
    }
}

pub fn enter(ctx: RequestContext) -> ContextGuard {
    let previous = CURRENT.with(|c| c.borrow_mut().replace(ctx));
    ContextGuard { previous }
}

pub fn current() -> Option<RequestContext> {
    CURRENT.with(|c| c.borrow().clone())
}

/// Installs the process-wide activation sink, replacing any previous one.
pub fn install(sink: Sink) -> Arc<Sink> {
    let sink = Arc::new(sink);
    *SINK.write().unwrap_or_else(|p| p.into_inner()) = Some(sink.clone());
    sink
}

pub fn uninstall() {
    *SINK.write().unwrap_or_else(|p| p.into_inner()) = None;
}

pub fn try_record_activation(defect_id: &str, site_id: &str) -> Result<(), SinkUnavailable> {
    let sink = SINK
        .read()
        .unwrap_or_else(|p| p.into_inner())
        .clone()
        .ok_or_else(|| {
            SinkUnavailable(std::io::Error::new(
                std::io::ErrorKind::NotConnected,
                "no activation sink installed",
            ))
        })?;
    let ctx = current().unwrap_or_default();
    let record = ActivationRecord {
        timestamp: Utc::now(),
        run_id: ctx.run_id.unwrap_or_default(),
        defect_id: defect_id.to_string(),
        site_id: site_id.to_string(),
        request_path: ctx.path,
    };
    sink.append_line(&record.to_line())
}

/// Hook entry point. Failures are reported on stderr and never disturb
/// the code path being observed.
pub fn record_activation(defect_id: &str, site_id: &str) {
    if let Err(e) = try_record_activation(defect_id, site_id) {
        eprintln!("activation {defect_id}/{site_id} not recorded: {e}");
    }
}

//! Structured application activity log.
//!
//! One record per line:
//!
//! ```text
//! ts=2026-10-17T10:00:00.123Z level=info run_id=r1-3 path=/student/enroll actor=st01 event=enroll detail.subject=s1
//! ```
//!
//! `run_id` is empty for traffic that carries no `X-Run-Id` header. Each
//! line is written with a single `write_all` under a lock, so concurrent
//! appends never interleave.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Mutex;

use chrono::{DateTime, SecondsFormat, Utc};
use thiserror::Error;

use crate::logfmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Level {
    Debug,
    Info,
    Warn,
    Error,
}

impl Level {
    pub fn as_str(self) -> &'static str {
        match self {
            Level::Debug => "debug",
            Level::Info => "info",
            Level::Warn => "warn",
            Level::Error => "error",
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Level {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "debug" => Ok(Level::Debug),
            "info" => Ok(Level::Info),
            "warn" => Ok(Level::Warn),
            "error" => Ok(Level::Error),
            other => Err(format!("unknown log level {other}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActivityLogRecord {
    pub timestamp: DateTime<Utc>,
    pub level: Level,
    pub run_id: Option<String>,
    pub request_path: String,
    pub actor: String,
    pub event: String,
    pub detail: BTreeMap<String, String>,
}

impl ActivityLogRecord {
    pub fn new(level: Level, request_path: &str, actor: &str, event: &str) -> Self {
        ActivityLogRecord {
            timestamp: Utc::now(),
            level,
            run_id: None,
            request_path: request_path.to_string(),
            actor: actor.to_string(),
            event: event.to_string(),
            detail: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl Into<String>) -> Self {
        self.detail.insert(key.to_string(), value.into());
        self
    }

    pub fn to_line(&self) -> String {
        let ts = format_timestamp(&self.timestamp);
        let detail_keys: Vec<String> = self.detail.keys().map(|k| format!("detail.{k}")).collect();
        let mut pairs: Vec<(&str, &str)> = vec![
            ("ts", &ts),
            ("level", self.level.as_str()),
            ("run_id", self.run_id.as_deref().unwrap_or("")),
            ("path", &self.request_path),
            ("actor", &self.actor),
            ("event", &self.event),
        ];
        for (key, value) in detail_keys.iter().zip(self.detail.values()) {
            pairs.push((key, value));
        }
        logfmt::encode(pairs)
    }

    pub fn parse_line(line: &str) -> Result<Self, String> {
        let pairs = logfmt::parse(line).map_err(|e| e.to_string())?;
        let mut map: BTreeMap<String, String> = BTreeMap::new();
        let mut detail = BTreeMap::new();
        for (k, v) in pairs {
            match k.strip_prefix("detail.") {
                Some(rest) => {
                    detail.insert(rest.to_string(), v);
                }
                None => {
                    map.insert(k, v);
                }
            }
        }
        let mut take = |k: &str| map.remove(k).ok_or_else(|| format!("missing field {k}"));
        let timestamp = parse_timestamp(&take("ts")?)?;
        let level = take("level")?.parse()?;
        let run_id = Some(take("run_id")?).filter(|r| !r.is_empty());
        Ok(ActivityLogRecord {
            timestamp,
            level,
            run_id,
            request_path: take("path")?,
            actor: take("actor")?,
            event: take("event")?,
            detail,
        })
    }
}

pub fn format_timestamp(ts: &DateTime<Utc>) -> String {
    ts.to_rfc3339_opts(SecondsFormat::Millis, true)
}

pub fn parse_timestamp(s: &str) -> Result<DateTime<Utc>, String> {
    DateTime::parse_from_rfc3339(s)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| format!("bad timestamp {s}: {e}"))
}

#[derive(Debug, Error)]
#[error("log sink unavailable: {0}")]
pub struct SinkUnavailable(#[from] pub io::Error);

#[derive(Debug)]
pub enum Sink {
    Stdout,
    Stderr,
    File(PathBuf, Mutex<File>),
    /// Keeps lines in memory; used by tests and embedded runs.
    Memory(Mutex<Vec<String>>),
    Discard,
}

impl Sink {
    pub fn file(path: &Path) -> Result<Sink, SinkUnavailable> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Sink::File(path.to_path_buf(), Mutex::new(file)))
    }

    pub fn memory() -> Sink {
        Sink::Memory(Mutex::new(Vec::new()))
    }

    /// Appends `line` plus a newline as one write.
    pub fn append_line(&self, line: &str) -> Result<(), SinkUnavailable> {
        let mut buf = String::with_capacity(line.len() + 1);
        buf.push_str(line);
        buf.push('\n');
        match self {
            Sink::Stdout => {
                let mut out = io::stdout().lock();
                out.write_all(buf.as_bytes())?;
                out.flush()?;
            }
            Sink::Stderr => io::stderr().lock().write_all(buf.as_bytes())?,
            Sink::File(_, file) => {
                let mut file = file.lock().unwrap_or_else(|p| p.into_inner());
                file.write_all(buf.as_bytes())?;
            }
            Sink::Memory(lines) => lines
                .lock()
                .unwrap_or_else(|p| p.into_inner())
                .push(line.to_string()),
            Sink::Discard => {}
        }
        Ok(())
    }

    pub fn lines(&self) -> Vec<String> {
        match self {
            Sink::Memory(lines) => lines.lock().unwrap_or_else(|p| p.into_inner()).clone(),
            Sink::File(path, _) => std::fs::read_to_string(path)
                .map(|t| t.lines().map(str::to_string).collect())
                .unwrap_or_default(),
            _ => Vec::new(),
        }
    }
}

#[derive(Debug)]
pub struct ActivityLog {
    sink: Sink,
    threshold: Level,
}

impl ActivityLog {
    pub fn new(sink: Sink, threshold: Level) -> Self {
        ActivityLog { sink, threshold }
    }

    pub fn threshold(&self) -> Level {
        self.threshold
    }

    pub fn sink(&self) -> &Sink {
        &self.sink
    }

    /// Records below the threshold are dropped silently.
    pub fn append(&self, record: &ActivityLogRecord) -> Result<(), SinkUnavailable> {
        if record.level < self.threshold {
            return Ok(());
        }
        self.sink.append_line(&record.to_line())
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;

    fn record() -> ActivityLogRecord {
        let mut r = ActivityLogRecord::new(Level::Info, "/student/enroll", "st01", "enroll")
            .with("subject", "s1")
            .with("note", "two words");
        r.run_id = Some("r42".into());
        r
    }

    #[test]
    fn line_has_run_id_and_round_trips() {
        let r = record();
        let line = r.to_line();
        assert!(line.contains("run_id=r42"));
        assert!(!line.contains('\n'));
        let back = ActivityLogRecord::parse_line(&line).unwrap();
        assert_eq!(back.run_id.as_deref(), Some("r42"));
        assert_eq!(back.detail, r.detail);
        assert_eq!(
            format_timestamp(&back.timestamp),
            format_timestamp(&r.timestamp)
        );
    }

    #[test]
    fn absent_run_id_is_empty() {
        let r = ActivityLogRecord::new(Level::Warn, "/", "", "request");
        let line = r.to_line();
        assert!(line.contains("run_id=\"\""));
        assert_eq!(ActivityLogRecord::parse_line(&line).unwrap().run_id, None);
        assert!(ActivityLogRecord::parse_line("ts=x level=info").is_err());
    }

    #[test]
    fn below_threshold_is_dropped() {
        let log = ActivityLog::new(Sink::memory(), Level::Warn);
        log.append(&record()).unwrap();
        assert!(log.sink().lines().is_empty());
        let mut err = record();
        err.level = Level::Error;
        log.append(&err).unwrap();
        assert_eq!(log.sink().lines().len(), 1);
        assert_eq!(log.threshold(), Level::Warn);
    }

    #[test]
    fn concurrent_appends_do_not_interleave() {
        let dir = std::env::temp_dir().join(format!("uis-activity-{}", std::process::id()));
        let path = dir.join("activity.log");
        let _ = std::fs::remove_file(&path);
        let log = Arc::new(ActivityLog::new(Sink::file(&path).unwrap(), Level::Debug));
        let handles: Vec<_> = (0..8)
            .map(|t| {
                let log = log.clone();
                std::thread::spawn(move || {
                    for i in 0..50 {
                        let r = record()
                            .with("thread", t.to_string())
                            .with("i", i.to_string());
                        log.append(&r).unwrap();
                    }
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        let lines = log.sink().lines();
        assert_eq!(lines.len(), 400);
        for line in lines {
            ActivityLogRecord::parse_line(&line).unwrap();
        }
    }

    #[test]
    fn unavailable_sink() {
        assert!(Sink::file(Path::new("/proc/definitely/not/writable.log")).is_err());
    }

    #[test]
    fn levels_parse() {
        assert_eq!("INFO".parse::<Level>(), Ok(Level::Info));
        assert!("loud".parse::<Level>().is_err());
        assert!(Level::Debug < Level::Error);
        assert_eq!(Level::Warn.to_string(), "warn");
    }
}

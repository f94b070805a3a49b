//! Building a seeded clone with cargo and launching its server.

use std::fs::{self, File};
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use thiserror::Error;

use super::seed::{CloneManifest, MANIFEST_FILE};

pub const SERVER_BIN: &str = "uis-server";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DeployError {
    #[error("build of {clone_id} failed (defects {defect_ids:?})\n{output}")]
    BuildError {
        clone_id: String,
        /// Defects whose patched lines the compiler complained about; every
        /// defect of the clone when no location could be attributed.
        defect_ids: Vec<String>,
        output: String,
    },
    #[error("launch of {clone_id} failed: {reason}")]
    LaunchError { clone_id: String, reason: String },
    #[error("port {0} is in use")]
    PortInUse(u16),
    #[error("{clone_id} serves a manifest that differs from its tree")]
    ManifestMismatch { clone_id: String },
    #[error("clone manifest unreadable: {0}")]
    Manifest(String),
}

#[derive(Debug, Clone)]
pub struct BuildOptions {
    /// Shared cargo target directory; clones are built one after another.
    pub target_dir: PathBuf,
    /// Try `--offline` first and fall back to the network on resolution
    /// failures.
    pub prefer_offline: bool,
}

impl BuildOptions {
    pub fn new(target_dir: impl Into<PathBuf>) -> BuildOptions {
        BuildOptions {
            target_dir: target_dir.into(),
            prefer_offline: true,
        }
    }
}

pub fn read_manifest(clone_dir: &Path) -> Result<CloneManifest, DeployError> {
    let text = fs::read_to_string(clone_dir.join(MANIFEST_FILE))
        .map_err(|e| DeployError::Manifest(e.to_string()))?;
    CloneManifest::from_json(&text).map_err(|e| DeployError::Manifest(e.to_string()))
}

/// Extracts `(file, line)` from rustc's `--> file:line:col` markers.
pub fn error_locations(output: &str) -> Vec<(String, usize)> {
    output
        .lines()
        .filter_map(|l| l.trim_start().strip_prefix("--> "))
        .filter_map(|loc| {
            let mut parts = loc.rsplitn(3, ':');
            let _col = parts.next()?;
            let line = parts.next()?.parse().ok()?;
            Some((parts.next()?.replace('\\', "/"), line))
        })
        .collect()
}

/// Defects a compiler output blames, by matching error locations against
/// the rewritten line ranges of the manifest.
pub fn attribute_build_failure(manifest: &CloneManifest, output: &str) -> Vec<String> {
    let mut blamed: Vec<String> = Vec::new();
    for (file, line) in error_locations(output) {
        for site in &manifest.sites {
            if site.contains_clone_line(&file, line) && !blamed.contains(&site.defect_id) {
                blamed.push(site.defect_id.clone());
            }
        }
    }
    if blamed.is_empty() {
        blamed = manifest.defect_ids.clone();
    }
    blamed.sort();
    blamed
}

fn cargo_build(
    clone_dir: &Path,
    opts: &BuildOptions,
    offline: bool,
) -> std::io::Result<(bool, String)> {
    let mut cmd = Command::new(std::env::var("CARGO").unwrap_or_else(|_| "cargo".into()));
    cmd.arg("build")
        .arg("--quiet")
        .arg("--bin")
        .arg(SERVER_BIN)
        .arg("--manifest-path")
        .arg(clone_dir.join("Cargo.toml"))
        .env("CARGO_TARGET_DIR", &opts.target_dir)
        .env("CARGO_PROFILE_DEV_DEBUG", "0")
        .env("CARGO_INCREMENTAL", "0")
        .env_remove("RUSTFLAGS")
        .env_remove("CARGO_ENCODED_RUSTFLAGS")
        .env_remove("CARGO_BUILD_RUSTFLAGS")
        .env_remove("LLVM_PROFILE_FILE")
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());
    if offline {
        cmd.arg("--offline");
    }
    let out = cmd.output()?;
    let mut text = String::from_utf8_lossy(&out.stderr).into_owned();
    text.push_str(&String::from_utf8_lossy(&out.stdout));
    Ok((out.status.success(), text))
}

const LAST_BUILD_FILE: &str = ".testbed-last-build";

fn touch_tree(dir: &Path, now: std::time::SystemTime) -> std::io::Result<()> {
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        let path = entry.path();
        let name = entry.file_name();
        if entry.file_type()?.is_dir() {
            if name != "bin" && name != "target" {
                touch_tree(&path, now)?;
            }
        } else {
            File::options().write(true).open(&path)?.set_modified(now)?;
        }
    }
    Ok(())
}

/// Cargo identifies path packages relative to their workspace root, so
/// every clone maps onto the same build units in a shared target
/// directory and freshness is decided by file times alone. A clone seeded
/// before another clone was built would look up to date. Whenever the
/// target directory last built a different clone, the sources are touched
/// so cargo recompiles them.
fn invalidate_if_foreign(clone_dir: &Path, target_dir: &Path) -> std::io::Result<()> {
    let marker = target_dir.join(LAST_BUILD_FILE);
    let me = clone_dir.canonicalize()?.display().to_string();
    if fs::read_to_string(&marker).ok().as_deref() != Some(me.as_str()) {
        touch_tree(clone_dir, std::time::SystemTime::now())?;
    }
    Ok(())
}

fn is_compile_error(output: &str) -> bool {
    output.contains("error[") || output.contains("could not compile")
}

/// Compiles a clone and copies its server binary to `<clone>/bin/`.
///
/// Clones share one target directory, so builds take an exclusive file
/// lock on it; the binary is copied out before the lock is released.
pub fn build_clone(clone_dir: &Path, opts: &BuildOptions) -> Result<PathBuf, DeployError> {
    let manifest = read_manifest(clone_dir)?;
    let launch_error = |reason: String| DeployError::LaunchError {
        clone_id: manifest.clone_id.clone(),
        reason,
    };
    fs::create_dir_all(&opts.target_dir).map_err(|e| launch_error(e.to_string()))?;
    let lock = File::create(opts.target_dir.join(".testbed-build.lock"))
        .map_err(|e| launch_error(e.to_string()))?;
    lock.lock().map_err(|e| launch_error(e.to_string()))?;

    invalidate_if_foreign(clone_dir, &opts.target_dir)
        .map_err(|e| launch_error(format!("touch sources: {e}")))?;
    let (mut ok, mut output) = cargo_build(clone_dir, opts, opts.prefer_offline)
        .map_err(|e| launch_error(format!("cargo: {e}")))?;
    if !ok && opts.prefer_offline && !is_compile_error(&output) {
        (ok, output) =
            cargo_build(clone_dir, opts, false).map_err(|e| launch_error(format!("cargo: {e}")))?;
    }
    let marker = opts.target_dir.join(LAST_BUILD_FILE);
    let me = clone_dir
        .canonicalize()
        .map_err(|e| launch_error(e.to_string()))?;
    fs::write(
        &marker,
        if ok {
            me.display().to_string()
        } else {
            String::new()
        },
    )
    .map_err(|e| launch_error(e.to_string()))?;
    if !ok {
        return Err(DeployError::BuildError {
            clone_id: manifest.clone_id.clone(),
            defect_ids: attribute_build_failure(&manifest, &output),
            output,
        });
    }
    let built = opts
        .target_dir
        .join("debug")
        .join(format!("{SERVER_BIN}{}", std::env::consts::EXE_SUFFIX));
    let bin_dir = clone_dir.join("bin");
    fs::create_dir_all(&bin_dir).map_err(|e| launch_error(e.to_string()))?;
    let binary = bin_dir.join(format!("{SERVER_BIN}{}", std::env::consts::EXE_SUFFIX));
    // copy through a temporary name so a running server is never clobbered
    let staging = bin_dir.join(".uis-server.new");
    fs::copy(&built, &staging).map_err(|e| launch_error(format!("copy binary: {e}")))?;
    fs::rename(&staging, &binary).map_err(|e| launch_error(format!("install binary: {e}")))?;
    drop(lock);
    Ok(binary)
}

#[derive(Debug, Clone)]
pub struct LaunchOptions {
    pub host: String,
    /// 0 lets the server pick a free port.
    pub port: u16,
    pub fixture: String,
    /// Receives `activity.log`, `activation.log` and `server.stderr`.
    pub log_dir: PathBuf,
    pub ready_timeout: Duration,
}

impl LaunchOptions {
    pub fn new(log_dir: impl Into<PathBuf>) -> LaunchOptions {
        LaunchOptions {
            host: "127.0.0.1".into(),
            port: 0,
            fixture: "baseline-small".into(),
            log_dir: log_dir.into(),
            ready_timeout: Duration::from_secs(20),
        }
    }
}

/// A running clone. The server is stopped when this is dropped.
#[derive(Debug)]
pub struct Deployment {
    pub clone_id: String,
    pub base_url: String,
    /// Manifest as served by `/testbed/defects`.
    pub manifest: CloneManifest,
    /// Exact bytes served by `/testbed/defects`.
    pub served_manifest: String,
    pub activity_log: PathBuf,
    pub activation_log: PathBuf,
    child: Option<Child>,
}

impl Deployment {
    pub fn stop(&mut self) {
        if let Some(mut child) = self.child.take() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }

    pub fn is_running(&mut self) -> bool {
        match &mut self.child {
            Some(child) => matches!(child.try_wait(), Ok(None)),
            None => false,
        }
    }
}

impl Drop for Deployment {
    fn drop(&mut self) {
        self.stop();
    }
}

fn fetch(url: &str) -> Result<String, String> {
    let agent = ureq::AgentBuilder::new()
        .timeout(Duration::from_secs(5))
        .redirects(0)
        .build();
    match agent.get(url).call() {
        Ok(resp) => resp.into_string().map_err(|e| e.to_string()),
        Err(e) => Err(e.to_string()),
    }
}

/// Starts a built server, waits until it answers, and checks that the
/// manifest it serves is the one in its tree.
pub fn launch(clone_dir: &Path, opts: &LaunchOptions) -> Result<Deployment, DeployError> {
    let manifest = read_manifest(clone_dir)?;
    let clone_id = manifest.clone_id.clone();
    let launch_error = |reason: String| DeployError::LaunchError {
        clone_id: clone_id.clone(),
        reason,
    };
    let binary = clone_dir
        .join("bin")
        .join(format!("{SERVER_BIN}{}", std::env::consts::EXE_SUFFIX));
    if !binary.is_file() {
        return Err(launch_error(format!("{} is not built", binary.display())));
    }
    fs::create_dir_all(&opts.log_dir).map_err(|e| launch_error(e.to_string()))?;
    let activity_log = opts.log_dir.join("activity.log");
    let activation_log = opts.log_dir.join("activation.log");
    let stderr_path = opts.log_dir.join("server.stderr");
    for stale in [&activity_log, &activation_log] {
        if stale.exists() {
            fs::remove_file(stale).map_err(|e| launch_error(e.to_string()))?;
        }
    }
    let stderr = File::create(&stderr_path).map_err(|e| launch_error(e.to_string()))?;
    let mut child = Command::new(&binary)
        .arg("--host")
        .arg(&opts.host)
        .arg("--port")
        .arg(opts.port.to_string())
        .arg("--fixture")
        .arg(&opts.fixture)
        .arg("--log-file")
        .arg(&activity_log)
        .arg("--activation-log")
        .arg(&activation_log)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::from(stderr))
        .spawn()
        .map_err(|e| launch_error(e.to_string()))?;

    let stdout = child.stdout.take().expect("stdout is piped");
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for line in BufReader::new(stdout).lines() {
            let Ok(line) = line else { break };
            if let Some(addr) = line.strip_prefix("listening on ") {
                let _ = tx.send(addr.trim().to_string());
            }
        }
    });
    let addr = match rx.recv_timeout(opts.ready_timeout) {
        Ok(addr) => addr,
        Err(_) => {
            let _ = child.kill();
            let _ = child.wait();
            let stderr = fs::read_to_string(&stderr_path).unwrap_or_default();
            if stderr.contains("in use") {
                return Err(DeployError::PortInUse(opts.port));
            }
            return Err(launch_error(format!(
                "server did not start: {}",
                stderr.trim()
            )));
        }
    };
    let mut deployment = Deployment {
        clone_id: clone_id.clone(),
        base_url: format!("http://{addr}"),
        manifest: manifest.clone(),
        served_manifest: String::new(),
        activity_log,
        activation_log,
        child: Some(child),
    };
    let deadline = Instant::now() + opts.ready_timeout;
    let served = loop {
        match fetch(&format!("{}/testbed/defects", deployment.base_url)) {
            Ok(body) => break body,
            Err(e) if Instant::now() >= deadline => {
                return Err(launch_error(format!("readiness probe failed: {e}")))
            }
            Err(_) => thread::sleep(Duration::from_millis(50)),
        }
    };
    let parsed =
        CloneManifest::from_json(&served).map_err(|e| DeployError::Manifest(e.to_string()))?;
    if parsed != manifest {
        return Err(DeployError::ManifestMismatch { clone_id });
    }
    deployment.manifest = parsed;
    deployment.served_manifest = served;
    Ok(deployment)
}

pub fn build_and_deploy_clone(
    clone_dir: &Path,
    build: &BuildOptions,
    launch_opts: &LaunchOptions,
) -> Result<Deployment, DeployError> {
    build_clone(clone_dir, build)?;
    launch(clone_dir, launch_opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::defect::seed::SiteRecord;
    use crate::defect::spec::SiteKind;

    fn manifest() -> CloneManifest {
        let site = |d: &str, start: usize, len: usize| SiteRecord {
            defect_id: d.into(),
            site_id: "S1".into(),
            file: "src/core/views.rs".into(),
            kind: SiteKind::ReplaceBlock,
            original_start: start,
            original_text: String::new(),
            new_start: start,
            new_len: len,
        };
        CloneManifest {
            clone_id: "C".into(),
            defect_ids: vec!["D01".into(), "D02".into()],
            baseline_version: String::new(),
            created_at: String::new(),
            patched_files: vec!["src/core/views.rs".into()],
            sites: vec![site("D01", 10, 2), site("D02", 40, 3)],
        }
    }

    #[test]
    fn parses_error_locations() {
        let out = "error[E0425]: cannot find value `x`\n  --> src/core/views.rs:41:13\n   |\nwarning: x\n --> src/lib.rs:1:1\n";
        assert_eq!(
            error_locations(out),
            vec![
                ("src/core/views.rs".to_string(), 41),
                ("src/lib.rs".to_string(), 1)
            ]
        );
    }

    #[test]
    fn blames_the_defect_owning_the_line() {
        let m = manifest();
        assert_eq!(
            attribute_build_failure(&m, "  --> src/core/views.rs:41:13\n"),
            vec!["D02"]
        );
        assert_eq!(
            attribute_build_failure(&m, "  --> src/core/views.rs:11:1\n"),
            vec!["D01"]
        );
        // nothing attributable: every defect of the clone is named
        assert_eq!(
            attribute_build_failure(&m, "linker failed"),
            vec!["D01", "D02"]
        );
    }

    #[test]
    fn launching_unbuilt_clone_fails() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(MANIFEST_FILE), manifest().to_json()).unwrap();
        let err = launch(dir.path(), &LaunchOptions::new(dir.path().join("logs"))).unwrap_err();
        assert!(matches!(err, DeployError::LaunchError { .. }));
    }
}

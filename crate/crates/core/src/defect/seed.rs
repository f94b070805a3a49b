//! The seeder: resolves anchors, splices payloads and activation hooks
//! into a copy of the baseline tree, and records what it changed.
//!
//! Every site is resolved against the unmodified baseline, all regions
//! are checked for overlaps, and only then are the edits applied from the
//! bottom of each file upwards so earlier line numbers stay valid.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::spec::{Anchor, DefectSpec, PatchSite, SiteKind};

/// Manifest location inside a clone; served by `/testbed/defects`.
pub const MANIFEST_FILE: &str = "testbed-manifest.json";
/// Call injected in front of every patched region.
pub const HOOK_PATH: &str = "crate::activation::record_activation";
/// Top-level entries that are build products, never part of a tree.
const IGNORED_TOP_LEVEL: &[&str] = &["target", "bin", "Cargo.lock"];

/// In-memory source tree: relative `/`-separated path to file content.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SourceTree {
    pub files: BTreeMap<String, String>,
}

impl SourceTree {
    pub fn load(root: &Path) -> io::Result<SourceTree> {
        let mut files = BTreeMap::new();
        walk(root, root, &mut files)?;
        Ok(SourceTree { files })
    }

    pub fn get(&self, path: &str) -> Option<&str> {
        self.files.get(path).map(String::as_str)
    }

    /// SHA-256 over the sorted (path, content) pairs.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for (path, content) in &self.files {
            hasher.update((path.len() as u64).to_le_bytes());
            hasher.update(path.as_bytes());
            hasher.update((content.len() as u64).to_le_bytes());
            hasher.update(content.as_bytes());
        }
        hex(&hasher.finalize())
    }

    /// Writes the tree below `root`. Files whose content is unchanged are
    /// left alone so incremental builds stay incremental; stale source
    /// files that are not part of the tree are removed.
    pub fn write_to(&self, root: &Path) -> io::Result<()> {
        fs::create_dir_all(root)?;
        let existing = SourceTree::load(root)?;
        for path in existing.files.keys() {
            if !self.files.contains_key(path) {
                fs::remove_file(root.join(path))?;
            }
        }
        for (path, content) in &self.files {
            if existing.get(path) == Some(content.as_str()) {
                continue;
            }
            let target = root.join(path);
            if let Some(parent) = target.parent() {
                fs::create_dir_all(parent)?;
            }
            fs::write(target, content)?;
        }
        Ok(())
    }
}

fn walk(root: &Path, dir: &Path, files: &mut BTreeMap<String, String>) -> io::Result<()> {
    let mut entries: Vec<_> = fs::read_dir(dir)?.collect::<Result<_, _>>()?;
    entries.sort_by_key(|e| e.file_name());
    for entry in entries {
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.starts_with('.') || (dir == root && IGNORED_TOP_LEVEL.contains(&name.as_str())) {
            continue;
        }
        let path = entry.path();
        if entry.file_type()?.is_dir() {
            walk(root, &path, files)?;
        } else {
            let rel = path
                .strip_prefix(root)
                .expect("walk stays below root")
                .components()
                .map(|c| c.as_os_str().to_string_lossy())
                .collect::<Vec<_>>()
                .join("/");
            let content = fs::read_to_string(&path)
                .map_err(|e| io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
            files.insert(rel, content);
        }
    }
    Ok(())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Lines `start..end` (zero-based, end exclusive) of one file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Region {
    pub start: usize,
    pub end: usize,
}

impl Region {
    fn overlaps(&self, other: &Region) -> bool {
        if self.start == self.end || other.start == other.end {
            return self.start == other.start
                || (self.start > other.start && self.start < other.end)
                || (other.start > self.start && other.start < self.end);
        }
        self.start < other.end && other.start < self.end
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnchorError {
    #[error("anchor not found")]
    NotFound,
    #[error("anchor matches {0} locations")]
    Ambiguous(usize),
}

fn split_lines(content: &str) -> Vec<&str> {
    content.split_inclusive('\n').collect()
}

/// Finds the region an anchor designates in `content`.
///
/// A named anchor `// @anchor: x` covers the lines up to `// @end: x`
/// when that marker follows, otherwise only the next line. A literal
/// anchor covers every line its fragment touches.
pub fn resolve_anchor(content: &str, anchor: &Anchor) -> Result<Region, AnchorError> {
    let lines = split_lines(content);
    match anchor {
        Anchor::Named { name } => {
            let marker = format!("// @anchor: {name}");
            let hits: Vec<usize> = lines
                .iter()
                .enumerate()
                .filter(|(_, l)| l.trim() == marker)
                .map(|(i, _)| i)
                .collect();
            let at = match hits.as_slice() {
                [] => return Err(AnchorError::NotFound),
                [one] => *one,
                many => return Err(AnchorError::Ambiguous(many.len())),
            };
            let end_marker = format!("// @end: {name}");
            let end = lines[at + 1..]
                .iter()
                .position(|l| l.trim() == end_marker)
                .map(|offset| at + 1 + offset);
            match end {
                Some(end) => Ok(Region { start: at + 1, end }),
                None if at + 1 < lines.len() => Ok(Region {
                    start: at + 1,
                    end: at + 2,
                }),
                None => Err(AnchorError::NotFound),
            }
        }
        Anchor::Literal {
            literal,
            occurrence,
        } => {
            let matches: Vec<usize> = content
                .match_indices(literal.as_str())
                .map(|(i, _)| i)
                .collect();
            let offset = match (occurrence, matches.len()) {
                (_, 0) => return Err(AnchorError::NotFound),
                (None, 1) => matches[0],
                (None, n) => return Err(AnchorError::Ambiguous(n)),
                (Some(i), n) if *i < n => matches[*i],
                (Some(_), _) => return Err(AnchorError::NotFound),
            };
            let line_of = |byte: usize| content[..byte].matches('\n').count();
            Ok(Region {
                start: line_of(offset),
                end: line_of(offset + literal.len() - 1) + 1,
            })
        }
    }
}

/// Record of one applied site, enough to attribute compiler errors and to
/// restore the baseline text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiteRecord {
    pub defect_id: String,
    pub site_id: String,
    pub file: String,
    pub kind: SiteKind,
    /// First line of the region in the baseline file, 1-based.
    pub original_start: usize,
    /// Verbatim baseline text of the region.
    pub original_text: String,
    /// First line of the rewritten region in the clone file, 1-based.
    pub new_start: usize,
    /// Number of lines the rewritten region spans in the clone.
    pub new_len: usize,
}

impl SiteRecord {
    pub fn contains_clone_line(&self, file: &str, line: usize) -> bool {
        self.file == file && line >= self.new_start && line < self.new_start + self.new_len
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CloneManifest {
    pub clone_id: String,
    pub defect_ids: Vec<String>,
    pub baseline_version: String,
    pub created_at: String,
    pub patched_files: Vec<String>,
    pub sites: Vec<SiteRecord>,
}

impl CloneManifest {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<CloneManifest, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// All (defect_id, site_id) pairs of the clone.
    pub fn site_keys(&self) -> BTreeSet<(String, String)> {
        self.sites
            .iter()
            .map(|s| (s.defect_id.clone(), s.site_id.clone()))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SeedError {
    #[error("{defect_id}/{site_id}: anchor {anchor} not found in {file}")]
    AnchorNotFound {
        defect_id: String,
        site_id: String,
        file: String,
        anchor: String,
    },
    #[error("{defect_id}/{site_id}: anchor {anchor} matches {matches} locations in {file}")]
    AmbiguousAnchor {
        defect_id: String,
        site_id: String,
        file: String,
        anchor: String,
        matches: usize,
    },
    #[error("{defect_id}: sites {site_a} and {site_b} overlap in {file}")]
    Overlap {
        defect_id: String,
        site_a: String,
        site_b: String,
        file: String,
    },
    #[error("{defect_a}/{site_a} and {defect_b}/{site_b} touch overlapping regions of {file}")]
    Conflict {
        defect_a: String,
        site_a: String,
        defect_b: String,
        site_b: String,
        file: String,
    },
    #[error("{defect_id}/{site_id}: file {file} is not part of the baseline")]
    MissingFile {
        defect_id: String,
        site_id: String,
        file: String,
    },
    #[error("defect {0} listed twice")]
    DuplicateDefect(String),
    #[error("baseline version mismatch: manifest {manifest}, tree {tree}")]
    BaselineMismatch { manifest: String, tree: String },
    #[error("i/o: {0}")]
    Io(String),
}

impl SeedError {
    /// Defect the error belongs to, when there is exactly one.
    pub fn defect_id(&self) -> Option<&str> {
        match self {
            SeedError::AnchorNotFound { defect_id, .. }
            | SeedError::AmbiguousAnchor { defect_id, .. }
            | SeedError::Overlap { defect_id, .. }
            | SeedError::MissingFile { defect_id, .. }
            | SeedError::DuplicateDefect(defect_id) => Some(defect_id),
            _ => None,
        }
    }
}

impl From<io::Error> for SeedError {
    fn from(e: io::Error) -> Self {
        SeedError::Io(e.to_string())
    }
}

pub fn hook_line(indent: &str, defect_id: &str, site_id: &str) -> String {
    format!("{indent}{HOOK_PATH}(\"{defect_id}\", \"{site_id}\");\n")
}

/// Re-indents a payload to `indent`, keeping its relative indentation.
fn indent_payload(payload: &str, indent: &str) -> Vec<String> {
    let lines: Vec<&str> = payload.lines().collect();
    let first = lines.iter().position(|l| !l.trim().is_empty());
    let last = lines.iter().rposition(|l| !l.trim().is_empty());
    let (Some(first), Some(last)) = (first, last) else {
        return Vec::new();
    };
    let body = &lines[first..=last];
    let common = body
        .iter()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.len() - l.trim_start().len())
        .min()
        .unwrap_or(0);
    body.iter()
        .map(|l| {
            if l.trim().is_empty() {
                "\n".to_string()
            } else {
                format!("{indent}{}\n", &l[common..])
            }
        })
        .collect()
}

struct Planned<'a> {
    defect_id: &'a str,
    site: &'a PatchSite,
    region: Region,
}

fn annotate(defect_id: &str, site: &PatchSite, e: AnchorError) -> SeedError {
    match e {
        AnchorError::NotFound => SeedError::AnchorNotFound {
            defect_id: defect_id.to_string(),
            site_id: site.site_id.clone(),
            file: site.file.clone(),
            anchor: site.anchor.to_string(),
        },
        AnchorError::Ambiguous(matches) => SeedError::AmbiguousAnchor {
            defect_id: defect_id.to_string(),
            site_id: site.site_id.clone(),
            file: site.file.clone(),
            anchor: site.anchor.to_string(),
            matches,
        },
    }
}

fn overlap_error(a: &Planned<'_>, b: &Planned<'_>) -> SeedError {
    if a.defect_id == b.defect_id {
        SeedError::Overlap {
            defect_id: a.defect_id.to_string(),
            site_a: a.site.site_id.clone(),
            site_b: b.site.site_id.clone(),
            file: a.site.file.clone(),
        }
    } else {
        SeedError::Conflict {
            defect_a: a.defect_id.to_string(),
            site_a: a.site.site_id.clone(),
            defect_b: b.defect_id.to_string(),
            site_b: b.site.site_id.clone(),
            file: a.site.file.clone(),
        }
    }
}

/// New lines that take the place of `region`.
fn rewrite(lines: &[&str], planned: &Planned<'_>) -> Vec<String> {
    let Region { start, end } = planned.region;
    let anchor_line = lines.get(start).or(lines.get(start.saturating_sub(1)));
    let indent: String = anchor_line
        .map(|l| l.chars().take_while(|c| *c == ' ' || *c == '\t').collect())
        .unwrap_or_default();
    let hook = hook_line(&indent, planned.defect_id, &planned.site.site_id);
    let payload = indent_payload(&planned.site.payload, &indent);
    let region: Vec<String> = lines[start..end].iter().map(|l| l.to_string()).collect();
    let mut out = Vec::new();
    match planned.site.kind {
        SiteKind::ReplaceBlock => {
            out.push(hook);
            out.extend(payload);
        }
        SiteKind::ReplaceLine => {
            out.push(hook);
            out.extend(payload);
            out.extend(region.into_iter().skip(1));
        }
        SiteKind::InsertAfter => {
            out.extend(region);
            if out.last().is_some_and(|l| !l.ends_with('\n')) {
                out.last_mut().expect("non-empty").push('\n');
            }
            out.push(hook);
            out.extend(payload);
        }
        SiteKind::DeleteBlock => out.push(hook),
    }
    out
}

/// Applies the sites of `specs` to `tree` without writing anything.
///
/// Returns the site records in spec order. Regions overlapping inside one
/// defect are an [`SeedError::Overlap`], across defects a
/// [`SeedError::Conflict`].
pub fn apply_sites(
    tree: &mut SourceTree,
    specs: &[&DefectSpec],
) -> Result<Vec<SiteRecord>, SeedError> {
    let mut seen = BTreeSet::new();
    for spec in specs {
        if !seen.insert(spec.defect_id.as_str()) {
            return Err(SeedError::DuplicateDefect(spec.defect_id.clone()));
        }
    }
    let mut plans: Vec<Planned<'_>> = Vec::new();
    for spec in specs {
        for site in &spec.sites {
            let content = tree.get(&site.file).ok_or_else(|| SeedError::MissingFile {
                defect_id: spec.defect_id.clone(),
                site_id: site.site_id.clone(),
                file: site.file.clone(),
            })?;
            let region = resolve_anchor(content, &site.anchor)
                .map_err(|e| annotate(&spec.defect_id, site, e))?;
            let planned = Planned {
                defect_id: &spec.defect_id,
                site,
                region,
            };
            if let Some(prior) = plans
                .iter()
                .find(|p| p.site.file == site.file && p.region.overlaps(&region))
            {
                return Err(overlap_error(prior, &planned));
            }
            plans.push(planned);
        }
    }

    // per file, bottom-up; record (plan index, replacement length)
    let mut by_file: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, p) in plans.iter().enumerate() {
        by_file.entry(p.site.file.as_str()).or_default().push(i);
    }
    let mut new_len = vec![0usize; plans.len()];
    let mut new_start = vec![0usize; plans.len()];
    let mut original_text = vec![String::new(); plans.len()];
    for (file, mut idx) in by_file {
        let original = tree.files[file].clone();
        let lines = split_lines(&original);
        idx.sort_by_key(|&i| plans[i].region.start);
        let mut out: Vec<String> = Vec::with_capacity(lines.len() + 8);
        let mut cursor = 0;
        for &i in &idx {
            let region = plans[i].region;
            out.extend(lines[cursor..region.start].iter().map(|l| l.to_string()));
            new_start[i] = out.len() + 1;
            original_text[i] = lines[region.start..region.end].concat();
            let replacement = rewrite(&lines, &plans[i]);
            new_len[i] = replacement.len();
            out.extend(replacement);
            cursor = region.end;
        }
        out.extend(lines[cursor..].iter().map(|l| l.to_string()));
        tree.files.insert(file.to_string(), out.concat());
    }

    Ok(plans
        .iter()
        .enumerate()
        .map(|(i, p)| SiteRecord {
            defect_id: p.defect_id.to_string(),
            site_id: p.site.site_id.clone(),
            file: p.site.file.clone(),
            kind: p.site.kind,
            original_start: p.region.start + 1,
            original_text: original_text[i].clone(),
            new_start: new_start[i],
            new_len: new_len[i],
        })
        .collect())
}

/// Seeds `specs` into a copy of `baseline` and embeds the manifest.
///
/// An empty spec list yields the baseline control clone: identical to the
/// baseline except for the manifest.
pub fn assemble_defect_clone(
    baseline: &SourceTree,
    clone_id: &str,
    specs: &[&DefectSpec],
    created_at: &str,
) -> Result<(SourceTree, CloneManifest), SeedError> {
    let mut tree = baseline.clone();
    let sites = apply_sites(&mut tree, specs)?;
    let patched_files: Vec<String> = sites
        .iter()
        .map(|s| s.file.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let manifest = CloneManifest {
        clone_id: clone_id.to_string(),
        defect_ids: specs.iter().map(|s| s.defect_id.clone()).collect(),
        baseline_version: baseline.content_hash(),
        created_at: created_at.to_string(),
        patched_files,
        sites,
    };
    tree.files
        .insert(MANIFEST_FILE.to_string(), manifest.to_json());
    Ok((tree, manifest))
}

/// Undoes every recorded site and drops the manifest. On an untouched
/// clone the result equals the baseline minus its manifest file.
pub fn restore_baseline(clone: &SourceTree, manifest: &CloneManifest) -> SourceTree {
    let mut tree = clone.clone();
    tree.files.remove(MANIFEST_FILE);
    let mut by_file: BTreeMap<&str, Vec<&SiteRecord>> = BTreeMap::new();
    for s in &manifest.sites {
        by_file.entry(s.file.as_str()).or_default().push(s);
    }
    for (file, mut records) in by_file {
        let Some(content) = tree.files.get(file) else {
            continue;
        };
        let lines: Vec<String> = split_lines(content).iter().map(|l| l.to_string()).collect();
        records.sort_by_key(|r| std::cmp::Reverse(r.new_start));
        let mut lines = lines;
        for r in records {
            let start = (r.new_start - 1).min(lines.len());
            let end = (start + r.new_len).min(lines.len());
            let original: Vec<String> = split_lines(&r.original_text)
                .iter()
                .map(|l| l.to_string())
                .collect();
            lines.splice(start..end, original);
        }
        tree.files.insert(file.to_string(), lines.concat());
    }
    tree
}

/// Checks that a clone is the baseline plus exactly the recorded sites.
pub fn reversibility_audit(
    baseline: &SourceTree,
    clone: &SourceTree,
    manifest: &CloneManifest,
) -> Result<(), String> {
    if manifest.baseline_version != baseline.content_hash() {
        return Err(format!(
            "baseline version {} does not match tree {}",
            manifest.baseline_version,
            baseline.content_hash()
        ));
    }
    let restored = restore_baseline(clone, manifest);
    let mut expected = baseline.clone();
    expected.files.remove(MANIFEST_FILE);
    if restored == expected {
        return Ok(());
    }
    let differing: Vec<&String> = restored
        .files
        .keys()
        .chain(expected.files.keys())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .filter(|p| restored.files.get(*p) != expected.files.get(*p))
        .collect();
    Err(format!("restored tree differs in {differing:?}"))
}

/// Timestamp for new manifests: `SOURCE_DATE_EPOCH` when set, else now.
pub fn default_created_at() -> String {
    let from_env = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|v| v.trim().parse::<i64>().ok())
        .and_then(|secs| chrono::DateTime::from_timestamp(secs, 0));
    from_env
        .unwrap_or_else(chrono::Utc::now)
        .format("%Y-%m-%dT%H:%M:%SZ")
        .to_string()
}

#[derive(Debug, Clone)]
pub struct SeededClone {
    pub clone_id: String,
    pub dir: PathBuf,
    pub manifest: CloneManifest,
}

/// Directory of a clone below an output directory.
pub fn clone_dir(out: &Path, clone_id: &str) -> PathBuf {
    out.join("clones").join(clone_id)
}

/// Seeds a clone on disk at `<out>/clones/<clone_id>/`. A lockfile, when
/// given, is copied next to the clone's manifest so builds resolve the
/// same dependency versions as the baseline.
pub fn seed_clone(
    baseline_dir: &Path,
    specs: &[&DefectSpec],
    out: &Path,
    clone_id: &str,
    created_at: &str,
    lockfile: Option<&Path>,
) -> Result<SeededClone, SeedError> {
    let baseline = SourceTree::load(baseline_dir)?;
    let (tree, manifest) = assemble_defect_clone(&baseline, clone_id, specs, created_at)?;
    let dir = clone_dir(out, clone_id);
    tree.write_to(&dir)?;
    if let Some(lock) = lockfile {
        let content = fs::read(lock)?;
        let target = dir.join("Cargo.lock");
        if fs::read(&target).ok().as_deref() != Some(content.as_slice()) {
            fs::write(target, content)?;
        }
    }
    Ok(SeededClone {
        clone_id: clone_id.to_string(),
        dir,
        manifest,
    })
}

/// Looks for the workspace lockfile above a baseline directory.
pub fn find_lockfile(baseline_dir: &Path) -> Option<PathBuf> {
    baseline_dir
        .canonicalize()
        .ok()?
        .ancestors()
        .map(|d| d.join("Cargo.lock"))
        .find(|p| p.is_file())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::defect::spec::{parse_defect_spec, Category};

    const FILE: &str = "fn f(x: u32) -> u32 {\n    // @anchor: check\n    if x > 3 {\n        return 0;\n    }\n    // @end: check\n    let y = x + 1;\n    let z = x + 1;\n    y + z\n}\n";

    fn tree() -> SourceTree {
        SourceTree {
            files: BTreeMap::from([
                ("src/a.rs".to_string(), FILE.to_string()),
                (MANIFEST_FILE.to_string(), "{}\n".to_string()),
            ]),
        }
    }

    fn site(id: &str, kind: SiteKind, anchor: Anchor, payload: &str) -> PatchSite {
        PatchSite {
            site_id: id.into(),
            file: "src/a.rs".into(),
            anchor,
            kind,
            payload: payload.into(),
        }
    }

    fn spec(id: &str, sites: Vec<PatchSite>) -> DefectSpec {
        DefectSpec {
            defect_id: id.into(),
            category: Category::OffByOne,
            title: String::new(),
            description: String::new(),
            expected_symptom: String::new(),
            sites,
        }
    }

    fn named(n: &str) -> Anchor {
        Anchor::Named { name: n.into() }
    }

    fn literal(s: &str, occurrence: Option<usize>) -> Anchor {
        Anchor::Literal {
            literal: s.into(),
            occurrence,
        }
    }

    #[test]
    fn resolves_regions() {
        assert_eq!(
            resolve_anchor(FILE, &named("check")),
            Ok(Region { start: 2, end: 5 })
        );
        assert_eq!(
            resolve_anchor(FILE, &literal("let y", None)),
            Ok(Region { start: 6, end: 7 })
        );
        assert_eq!(
            resolve_anchor(FILE, &literal("x + 1", None)),
            Err(AnchorError::Ambiguous(2))
        );
        assert_eq!(
            resolve_anchor(FILE, &literal("x + 1", Some(1))),
            Ok(Region { start: 7, end: 8 })
        );
        assert_eq!(
            resolve_anchor(FILE, &literal("x + 1", Some(2))),
            Err(AnchorError::NotFound)
        );
        assert_eq!(
            resolve_anchor(FILE, &literal("return 0;\n    }", None)),
            Ok(Region { start: 3, end: 5 })
        );
        assert_eq!(
            resolve_anchor(FILE, &named("nope")),
            Err(AnchorError::NotFound)
        );
    }

    #[test]
    fn literal_replacement_inserts_hook() {
        let d = spec(
            "D01",
            vec![site(
                "S1",
                SiteKind::ReplaceLine,
                literal("let y", None),
                "let y = x;",
            )],
        );
        let (clone, manifest) = assemble_defect_clone(&tree(), "c", &[&d], "t").unwrap();
        let text = clone.get("src/a.rs").unwrap();
        assert!(text.contains(
            "    crate::activation::record_activation(\"D01\", \"S1\");\n    let y = x;\n    let z"
        ));
        assert_eq!(manifest.sites[0].original_text, "    let y = x + 1;\n");
        assert_eq!(manifest.sites[0].new_start, 7);
        assert_eq!(manifest.sites[0].new_len, 2);
        assert_eq!(manifest.patched_files, vec!["src/a.rs"]);
        reversibility_audit(&tree(), &clone, &manifest).unwrap();
    }

    #[test]
    fn every_kind_is_reversible() {
        let d = spec(
            "D02",
            vec![
                site("S1", SiteKind::DeleteBlock, named("check"), ""),
                site(
                    "S2",
                    SiteKind::InsertAfter,
                    literal("let y", None),
                    "let q = 2;\nlet r = q;",
                ),
                site(
                    "S3",
                    SiteKind::ReplaceBlock,
                    literal("y + z", None),
                    "y * z",
                ),
            ],
        );
        let (clone, manifest) = assemble_defect_clone(&tree(), "c", &[&d], "t").unwrap();
        let text = clone.get("src/a.rs").unwrap();
        assert!(!text.contains("return 0"));
        assert!(text.contains("let y = x + 1;\n    crate::activation::record_activation(\"D02\", \"S2\");\n    let q = 2;\n    let r = q;\n"));
        assert_eq!(text.matches("record_activation").count(), 3);
        reversibility_audit(&tree(), &clone, &manifest).unwrap();
        // line numbers in the manifest point into the clone
        let lines: Vec<&str> = text.lines().collect();
        for s in &manifest.sites {
            assert!(
                lines[s.new_start - 1].contains("record_activation")
                    || s.kind == SiteKind::InsertAfter
            );
        }
    }

    #[test]
    fn overlaps_and_conflicts() {
        let a = spec(
            "D01",
            vec![
                site("S1", SiteKind::ReplaceBlock, named("check"), "a();"),
                site(
                    "S2",
                    SiteKind::ReplaceLine,
                    literal("return 0;", None),
                    "b();",
                ),
            ],
        );
        assert!(matches!(
            assemble_defect_clone(&tree(), "c", &[&a], "t"),
            Err(SeedError::Overlap { .. })
        ));
        let b = spec(
            "D02",
            vec![site(
                "S1",
                SiteKind::ReplaceLine,
                literal("let y", None),
                "c();",
            )],
        );
        let c = spec(
            "D03",
            vec![site(
                "S9",
                SiteKind::DeleteBlock,
                literal("y = x", None),
                "",
            )],
        );
        assert_eq!(
            assemble_defect_clone(&tree(), "c", &[&b, &c], "t").unwrap_err(),
            SeedError::Conflict {
                defect_a: "D02".into(),
                site_a: "S1".into(),
                defect_b: "D03".into(),
                site_b: "S9".into(),
                file: "src/a.rs".into()
            }
        );
        assert!(matches!(
            assemble_defect_clone(&tree(), "c", &[&b, &b], "t"),
            Err(SeedError::DuplicateDefect(_))
        ));
    }

    #[test]
    fn empty_spec_list_only_changes_manifest() {
        let (clone, manifest) = assemble_defect_clone(&tree(), "baseline", &[], "t").unwrap();
        assert!(manifest.defect_ids.is_empty());
        assert_eq!(clone.get("src/a.rs"), tree().get("src/a.rs"));
        assert_ne!(clone.get(MANIFEST_FILE), tree().get(MANIFEST_FILE));
        let parsed = CloneManifest::from_json(clone.get(MANIFEST_FILE).unwrap()).unwrap();
        assert_eq!(parsed, manifest);
    }

    #[test]
    fn assembling_is_deterministic() {
        let d = parse_defect_spec(
            "defect_id = \"D05\"\ncategory = \"off-by-one\"\ntitle = \"x\"\n[[site]]\nsite_id = \"S1\"\nfile = \"src/a.rs\"\nkind = \"replace_line\"\nanchor = { literal = \"x > 3\" }\npayload = \"if x >= 3 {\"\n",
        )
        .unwrap();
        let first = assemble_defect_clone(&tree(), "c", &[&d], "t").unwrap();
        let second = assemble_defect_clone(&tree(), "c", &[&d], "t").unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn errors_name_the_site() {
        let d = spec(
            "D07",
            vec![site(
                "S4",
                SiteKind::ReplaceLine,
                literal("missing", None),
                "x();",
            )],
        );
        let err = assemble_defect_clone(&tree(), "c", &[&d], "t").unwrap_err();
        assert_eq!(err.defect_id(), Some("D07"));
        assert!(err.to_string().contains("D07/S4"));
        let mut other = d.clone();
        other.sites[0].file = "src/b.rs".into();
        assert!(matches!(
            assemble_defect_clone(&tree(), "c", &[&other], "t"),
            Err(SeedError::MissingFile { .. })
        ));
    }

    #[test]
    fn payload_keeps_relative_indentation() {
        assert_eq!(
            indent_payload("\nif a {\n    b();\n}\n", "  "),
            vec!["  if a {\n", "      b();\n", "  }\n"]
        );
        assert!(indent_payload("  \n", "  ").is_empty());
    }
}

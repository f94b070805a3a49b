//! Declarative defect specifications, one TOML document per defect.
//!
//! ```toml
//! defect_id = "D01"
//! category = "wrong-data-bound"
//! title = "Subject list shows a lecturer name as subject name"
//! description = "..."
//! expected_symptom = "..."
//!
//! [[site]]
//! site_id = "S1"
//! file = "src/core/views.rs"
//! kind = "replace_block"
//! anchor = { name = "subject-row-name" }
//! payload = '''
//! let name = subject.id.clone();
//! '''
//! ```
//!
//! A literal anchor is written `anchor = { literal = "...", occurrence = 1 }`
//! where `occurrence` is zero-based and may be omitted when the fragment
//! occurs exactly once.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Component, Path};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Name of the function the seeder injects; payloads may not mention it.
pub const HOOK_FUNCTION: &str = "record_activation";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Category {
    WrongDataBound,
    MissingValidation,
    SwappedArguments,
    StateOmission,
    OffByOne,
    WrongNavigation,
    CrossCutting,
    MisleadingError,
}

impl Category {
    pub const ALL: [Category; 8] = [
        Category::WrongDataBound,
        Category::MissingValidation,
        Category::SwappedArguments,
        Category::StateOmission,
        Category::OffByOne,
        Category::WrongNavigation,
        Category::CrossCutting,
        Category::MisleadingError,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::WrongDataBound => "wrong-data-bound",
            Category::MissingValidation => "missing-validation",
            Category::SwappedArguments => "swapped-arguments",
            Category::StateOmission => "state-omission",
            Category::OffByOne => "off-by-one",
            Category::WrongNavigation => "wrong-navigation",
            Category::CrossCutting => "cross-cutting",
            Category::MisleadingError => "misleading-error",
        }
    }

    pub fn parse(s: &str) -> Option<Category> {
        Category::ALL.into_iter().find(|c| c.as_str() == s)
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SiteKind {
    /// The whole anchored region is replaced by the payload.
    ReplaceBlock,
    /// Only the first line of the region is replaced.
    ReplaceLine,
    /// The payload goes after the region, which stays in place.
    InsertAfter,
    /// The region is removed.
    DeleteBlock,
}

impl SiteKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SiteKind::ReplaceBlock => "replace_block",
            SiteKind::ReplaceLine => "replace_line",
            SiteKind::InsertAfter => "insert_after",
            SiteKind::DeleteBlock => "delete_block",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Anchor {
    Named {
        name: String,
    },
    Literal {
        literal: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        occurrence: Option<usize>,
    },
}

impl fmt::Display for Anchor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Anchor::Named { name } => write!(f, "@anchor {name}"),
            Anchor::Literal {
                literal,
                occurrence,
            } => {
                write!(f, "literal {literal:?}")?;
                if let Some(i) = occurrence {
                    write!(f, " #{i}")?;
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchSite {
    pub site_id: String,
    /// Path relative to the root of the baseline tree, `/`-separated.
    pub file: String,
    pub anchor: Anchor,
    pub kind: SiteKind,
    #[serde(default)]
    pub payload: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DefectSpec {
    pub defect_id: String,
    pub category: Category,
    pub title: String,
    pub description: String,
    pub expected_symptom: String,
    pub sites: Vec<PatchSite>,
}

impl DefectSpec {
    pub fn is_multi_site(&self) -> bool {
        self.sites.len() > 1
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecDocument {
    defect_id: String,
    category: String,
    title: String,
    #[serde(default)]
    description: String,
    #[serde(default)]
    expected_symptom: String,
    #[serde(default)]
    site: Vec<PatchSite>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SpecError {
    #[error("defect spec does not parse: {0}")]
    Parse(String),
    #[error("unknown category {0:?}")]
    UnknownCategory(String),
    #[error("defect {0} has no sites")]
    EmptySites(String),
    #[error("defect id {0:?} does not match D<digits>")]
    InvalidDefectId(String),
    #[error("site id {site_id} repeats within {defect_id}")]
    DuplicateSiteId { defect_id: String, site_id: String },
    #[error("site {site_id} of {defect_id}: {reason}")]
    InvalidSite {
        defect_id: String,
        site_id: String,
        reason: String,
    },
}

fn valid_defect_id(id: &str) -> bool {
    let digits = id.strip_prefix('D').unwrap_or("");
    digits.len() >= 2 && digits.bytes().all(|b| b.is_ascii_digit())
}

fn valid_relative_path(file: &str) -> bool {
    let path = Path::new(file);
    !file.is_empty()
        && !file.contains('\\')
        && path.components().all(|c| matches!(c, Component::Normal(_)))
}

pub fn parse_defect_spec(document: &str) -> Result<DefectSpec, SpecError> {
    let doc: SpecDocument =
        toml::from_str(document).map_err(|e| SpecError::Parse(e.to_string()))?;
    if !valid_defect_id(&doc.defect_id) {
        return Err(SpecError::InvalidDefectId(doc.defect_id));
    }
    let category =
        Category::parse(&doc.category).ok_or(SpecError::UnknownCategory(doc.category))?;
    if doc.site.is_empty() {
        return Err(SpecError::EmptySites(doc.defect_id));
    }
    let mut seen = BTreeSet::new();
    for site in &doc.site {
        if !seen.insert(site.site_id.as_str()) {
            return Err(SpecError::DuplicateSiteId {
                defect_id: doc.defect_id.clone(),
                site_id: site.site_id.clone(),
            });
        }
        let invalid = |reason: &str| SpecError::InvalidSite {
            defect_id: doc.defect_id.clone(),
            site_id: site.site_id.clone(),
            reason: reason.to_string(),
        };
        if site.site_id.is_empty() || site.site_id.contains(char::is_whitespace) {
            return Err(invalid("site id must be a non-empty token"));
        }
        if !valid_relative_path(&site.file) {
            return Err(invalid("file must be a relative path inside the tree"));
        }
        match &site.anchor {
            Anchor::Named { name } if name.trim().is_empty() => {
                return Err(invalid("empty anchor name"))
            }
            Anchor::Literal { literal, .. } if literal.is_empty() => {
                return Err(invalid("empty literal anchor"))
            }
            _ => {}
        }
        let has_payload = !site.payload.trim().is_empty();
        match site.kind {
            SiteKind::DeleteBlock if has_payload => {
                return Err(invalid("delete_block takes no payload"))
            }
            SiteKind::InsertAfter if !has_payload => {
                return Err(invalid("insert_after needs a payload"))
            }
            _ => {}
        }
        // Hooks are the seeder's business; payloads must not forge them.
        if site.payload.contains(HOOK_FUNCTION) {
            return Err(invalid("payload calls the activation hook"));
        }
    }
    Ok(DefectSpec {
        defect_id: doc.defect_id,
        category,
        title: doc.title,
        description: doc.description,
        expected_symptom: doc.expected_symptom,
        sites: doc.site,
    })
}

pub fn load_defect_spec(path: &Path) -> Result<DefectSpec, SpecError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| SpecError::Parse(format!("{}: {e}", path.display())))?;
    parse_defect_spec(&text)
}

/// Loads every `*.toml` file of a directory, sorted by defect id.
pub fn load_catalog(dir: &Path) -> Result<Vec<DefectSpec>, SpecError> {
    let entries =
        std::fs::read_dir(dir).map_err(|e| SpecError::Parse(format!("{}: {e}", dir.display())))?;
    let mut paths: Vec<_> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    paths.sort();
    let mut specs = paths
        .iter()
        .map(|p| load_defect_spec(p))
        .collect::<Result<Vec<_>, _>>()?;
    specs.sort_by(|a, b| a.defect_id.cmp(&b.defect_id));
    for pair in specs.windows(2) {
        if pair[0].defect_id == pair[1].defect_id {
            return Err(SpecError::Parse(format!(
                "defect id {} defined twice",
                pair[0].defect_id
            )));
        }
    }
    Ok(specs)
}

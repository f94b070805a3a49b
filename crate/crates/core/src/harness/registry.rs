//! Reusable test blocks and the tests built from them.
//!
//! A registry document declares parameterised blocks, explicit tests,
//! atomic view sweeps and data-driven templates. Process tests are
//! composed from model paths by binding one block per transition.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::oracle::{self, audience, Fixture};
use crate::process_model::{
    validate_path, PathEntry, PathError, PathTestCase, ProcessModel, State,
};

/// One user-level action.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Step {
    Open {
        path: String,
    },
    Click {
        element: String,
    },
    Login {
        user: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        password: Option<String>,
        #[serde(default)]
        raw: bool,
    },
    Logout {
        #[serde(default)]
        raw: bool,
    },
    Enroll {
        subject: String,
        #[serde(default)]
        raw: bool,
    },
    Cancel {
        subject: String,
        #[serde(default)]
        raw: bool,
    },
    Register {
        term: String,
        #[serde(default)]
        raw: bool,
    },
    CreateTerm {
        subject: String,
        starts_at: String,
        capacity: String,
        #[serde(default)]
        raw: bool,
    },
    Grade {
        /// `term/student` or a selector.
        target: String,
        value: String,
        #[serde(default)]
        raw: bool,
    },
    UpdateEmail {
        email: String,
        #[serde(default)]
        raw: bool,
    },
    /// Form post that bypasses page objects entirely.
    Post {
        path: String,
        #[serde(default)]
        fields: BTreeMap<String, String>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Check {
    View,
    Flash,
    Oracle,
    /// Server dataset equals the reference model's.
    State,
    /// Server dataset equals the fixture as it was after reset.
    Unchanged,
}

impl std::str::FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Category, String> {
        match s {
            "atomic" => Ok(Category::Atomic),
            "process" => Ok(Category::Process),
            "negative" => Ok(Category::Negative),
            other => Err(format!("unknown category {other}")),
        }
    }
}

pub const DEFAULT_CHECKS: [Check; 3] = [Check::View, Check::Flash, Check::Oracle];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Category {
    Atomic,
    Process,
    Negative,
}

impl Category {
    pub fn as_str(self) -> &'static str {
        match self {
            Category::Atomic => "atomic",
            Category::Process => "process",
            Category::Negative => "negative",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockDef {
    pub id: String,
    #[serde(default)]
    pub transition: Option<String>,
    /// Explicit precondition state; transition blocks take theirs from the model.
    #[serde(default)]
    pub precondition: Option<String>,
    /// Parameter defaults.
    #[serde(default)]
    pub params: BTreeMap<String, String>,
    pub steps: Vec<Step>,
    #[serde(default)]
    pub checks: Option<Vec<Check>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockRef {
    pub block: String,
    #[serde(default)]
    pub args: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestDef {
    pub id: String,
    pub category: Category,
    pub fixture: String,
    pub blocks: Vec<BlockRef>,
}

/// Sweep of every view each listed actor may open. `anon` is the
/// anonymous visitor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomicDef {
    pub fixture: String,
    pub actors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateDef {
    pub id: String,
    #[serde(default = "process")]
    pub category: Category,
    pub fixture: String,
    /// Column names, referenced from block arguments as `$name`.
    pub columns: Vec<String>,
    /// Tuple file relative to the registry document.
    pub tuples: PathBuf,
    pub blocks: Vec<BlockRef>,
}

fn process() -> Category {
    Category::Process
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegistryDocument {
    #[serde(default)]
    block: Vec<BlockDef>,
    #[serde(default)]
    test: Vec<TestDef>,
    #[serde(default)]
    atomic: Vec<AtomicDef>,
    #[serde(default)]
    template: Vec<TemplateDef>,
}

/// A block with its parameters substituted and its model states attached.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BoundBlock {
    pub block_id: String,
    pub transition: Option<String>,
    pub precondition: Option<State>,
    pub postcondition: Option<State>,
    pub steps: Vec<Step>,
    pub checks: Vec<Check>,
}

/// Where a test starts after the fixture reset.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Entry {
    pub user: Option<String>,
    pub path: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TestCase {
    pub test_id: String,
    pub category: Category,
    pub fixture_id: String,
    pub entry: Entry,
    pub blocks: Vec<BoundBlock>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data_tuple: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("registry does not parse: {0}")]
    Parse(String),
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("duplicate id {0}")]
    Duplicate(String),
    #[error("{owner} uses unknown block {block}")]
    UnknownBlock { owner: String, block: String },
    #[error("block {block} leaves parameter {param} unbound")]
    UnboundParam { block: String, param: String },
    #[error("block {block} has no parameter {param}")]
    UnknownArgument { block: String, param: String },
    #[error("unknown fixture {0}")]
    UnknownFixture(String),
    #[error("unknown actor {actor} in fixture {fixture}")]
    UnknownActor { fixture: String, actor: String },
    #[error(transparent)]
    Compose(#[from] ComposeError),
    #[error(transparent)]
    Tuple(#[from] TupleError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ComposeError {
    #[error("path {path_id} is invalid: {error}")]
    InvalidPath { path_id: String, error: PathError },
    #[error("no block implements transition {0}")]
    MissingBlock(String),
    #[error("transition {0} has more than one block")]
    AmbiguousBlock(String),
    #[error("block for {transition} failed to bind: {message}")]
    Binding { transition: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TupleError {
    #[error("tuple {row} has {found} values, expected {expected}")]
    ArityMismatch {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("tuple file {path}: {message}")]
    Read { path: String, message: String },
}

#[derive(Debug, Clone, Default)]
pub struct Registry {
    pub blocks: BTreeMap<String, BlockDef>,
    pub tests: Vec<TestDef>,
    pub atomic: Vec<AtomicDef>,
    pub templates: Vec<TemplateDef>,
    /// Directory relative paths are resolved against.
    pub base_dir: PathBuf,
}

impl Registry {
    pub fn parse(document: &str, base_dir: &Path) -> Result<Registry, RegistryError> {
        let doc: RegistryDocument =
            toml::from_str(document).map_err(|e| RegistryError::Parse(e.to_string()))?;
        let mut blocks = BTreeMap::new();
        for b in doc.block {
            if blocks.contains_key(&b.id) {
                return Err(RegistryError::Duplicate(b.id));
            }
            blocks.insert(b.id.clone(), b);
        }
        let mut ids = BTreeSet::new();
        for t in &doc.test {
            if !ids.insert(t.id.clone()) {
                return Err(RegistryError::Duplicate(t.id.clone()));
            }
        }
        for t in &doc.template {
            if !ids.insert(t.id.clone()) {
                return Err(RegistryError::Duplicate(t.id.clone()));
            }
        }
        Ok(Registry {
            blocks,
            tests: doc.test,
            atomic: doc.atomic,
            templates: doc.template,
            base_dir: base_dir.to_path_buf(),
        })
    }

    pub fn load(path: &Path) -> Result<Registry, RegistryError> {
        let text = std::fs::read_to_string(path).map_err(|e| RegistryError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Registry::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    fn def(&self, owner: &str, id: &str) -> Result<&BlockDef, RegistryError> {
        self.blocks
            .get(id)
            .ok_or_else(|| RegistryError::UnknownBlock {
                owner: owner.to_string(),
                block: id.to_string(),
            })
    }

    /// Binds a block by reference, outside any model transition.
    pub fn bind_ref(&self, owner: &str, r: &BlockRef) -> Result<BoundBlock, RegistryError> {
        let def = self.def(owner, &r.block)?;
        bind(def, &r.args)
    }

    /// Blocks implementing `transition`.
    pub fn blocks_for(&self, transition: &str) -> Vec<&BlockDef> {
        self.blocks
            .values()
            .filter(|b| b.transition.as_deref() == Some(transition))
            .collect()
    }
}

fn placeholders(text: &str, out: &mut BTreeSet<String>) {
    let mut rest = text;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) => {
                let name = &after[..close];
                if !name.is_empty()
                    && name
                        .chars()
                        .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
                {
                    out.insert(name.to_string());
                }
                rest = &after[close + 1..];
            }
            None => break,
        }
    }
}

fn substitute(value: &mut serde_json::Value, args: &BTreeMap<String, String>) {
    match value {
        serde_json::Value::String(s) => {
            for (k, v) in args {
                *s = s.replace(&format!("{{{k}}}"), v);
            }
        }
        serde_json::Value::Array(items) => items.iter_mut().for_each(|i| substitute(i, args)),
        serde_json::Value::Object(map) => map.values_mut().for_each(|i| substitute(i, args)),
        _ => {}
    }
}

fn collect(value: &serde_json::Value, out: &mut BTreeSet<String>) {
    match value {
        serde_json::Value::String(s) => placeholders(s, out),
        serde_json::Value::Array(items) => items.iter().for_each(|i| collect(i, out)),
        serde_json::Value::Object(map) => map.values().for_each(|i| collect(i, out)),
        _ => {}
    }
}

/// Substitutes `{name}` placeholders in a block's steps with arguments
/// falling back to the block's defaults.
pub fn bind(def: &BlockDef, args: &BTreeMap<String, String>) -> Result<BoundBlock, RegistryError> {
    let mut steps = serde_json::to_value(&def.steps).expect("steps serialise");
    let mut declared = BTreeSet::new();
    collect(&steps, &mut declared);
    declared.extend(def.params.keys().cloned());
    if let Some(unknown) = args.keys().find(|k| !declared.contains(*k)) {
        return Err(RegistryError::UnknownArgument {
            block: def.id.clone(),
            param: unknown.clone(),
        });
    }
    let mut merged = def.params.clone();
    merged.extend(args.iter().map(|(k, v)| (k.clone(), v.clone())));
    substitute(&mut steps, &merged);
    let mut left = BTreeSet::new();
    collect(&steps, &mut left);
    if let Some(param) = left.into_iter().find(|p| declared.contains(p)) {
        return Err(RegistryError::UnboundParam {
            block: def.id.clone(),
            param,
        });
    }
    Ok(BoundBlock {
        block_id: def.id.clone(),
        transition: def.transition.clone(),
        precondition: None,
        postcondition: None,
        steps: serde_json::from_value(steps).expect("substitution keeps step shape"),
        checks: def
            .checks
            .clone()
            .unwrap_or_else(|| DEFAULT_CHECKS.to_vec()),
    })
}

/// Chains the blocks of a path's transitions into one process test.
pub fn compose_process_test(
    path: &PathTestCase,
    model: &ProcessModel,
    registry: &Registry,
) -> Result<TestCase, ComposeError> {
    validate_path(model, path).map_err(|error| ComposeError::InvalidPath {
        path_id: path.id.clone(),
        error,
    })?;
    let entry_id = path.entry_state.as_deref().unwrap_or(&model.start_state);
    let entry_state = model.state(entry_id).expect("validated path entry");
    let mut blocks = Vec::with_capacity(path.transition_ids.len());
    for tid in &path.transition_ids {
        let t = model.transition(tid).expect("validated transition");
        let def = match registry.blocks_for(tid).as_slice() {
            [] => return Err(ComposeError::MissingBlock(tid.clone())),
            [one] => *one,
            _ => return Err(ComposeError::AmbiguousBlock(tid.clone())),
        };
        let mut bound = bind(def, &BTreeMap::new()).map_err(|e| ComposeError::Binding {
            transition: tid.clone(),
            message: e.to_string(),
        })?;
        bound.precondition = model.state(&t.from).cloned();
        bound.postcondition = model.state(&t.to).cloned();
        blocks.push(bound);
    }
    Ok(TestCase {
        test_id: path.id.clone(),
        category: Category::Process,
        fixture_id: path
            .fixture
            .clone()
            .unwrap_or_else(|| "baseline-small".to_string()),
        entry: Entry {
            user: entry_state.entry_user.clone(),
            path: entry_state
                .view
                .as_deref()
                .and_then(oracle::route)
                .map(str::to_string),
        },
        blocks,
        data_tuple: None,
    })
}

/// Reads `;`-separated tuples; `#` starts a comment line.
pub fn load_tuples(path: &Path) -> Result<Vec<Vec<String>>, TupleError> {
    let read_err = |message: String| TupleError::Read {
        path: path.display().to_string(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(b';')
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| read_err(e.to_string()))?;
    reader
        .records()
        .map(|r| {
            r.map(|rec| rec.iter().map(str::to_string).collect())
                .map_err(|e| read_err(e.to_string()))
        })
        .collect()
}

#[derive(Debug, Clone, Default)]
pub struct Parameterized {
    pub tests: Vec<TestCase>,
    pub warnings: Vec<String>,
}

/// One test per tuple. Arguments of the form `$column` take the tuple's
/// value for that column. Instance ids are the template id plus the tuple
/// index.
pub fn parameterize_with_data_tuples(
    registry: &Registry,
    template: &TemplateDef,
    tuples: &[Vec<String>],
) -> Result<Parameterized, RegistryError> {
    let mut out = Parameterized::default();
    if tuples.is_empty() {
        out.warnings
            .push(format!("template {} has no data tuples", template.id));
        return Ok(out);
    }
    for (row, tuple) in tuples.iter().enumerate() {
        if tuple.len() != template.columns.len() {
            return Err(TupleError::ArityMismatch {
                row,
                expected: template.columns.len(),
                found: tuple.len(),
            }
            .into());
        }
        let column = |name: &str| {
            template
                .columns
                .iter()
                .position(|c| c == name)
                .map(|i| tuple[i].clone())
        };
        let mut blocks = Vec::new();
        for r in &template.blocks {
            let mut args = r.args.clone();
            for v in args.values_mut() {
                if let Some(name) = v.strip_prefix('$') {
                    *v = column(name).ok_or_else(|| RegistryError::UnboundParam {
                        block: r.block.clone(),
                        param: v.clone(),
                    })?;
                }
            }
            blocks.push(registry.bind_ref(
                &template.id,
                &BlockRef {
                    block: r.block.clone(),
                    args,
                },
            )?);
        }
        out.tests.push(TestCase {
            test_id: format!("{}-{row}", template.id),
            category: template.category,
            fixture_id: template.fixture.clone(),
            entry: Entry::default(),
            blocks,
            data_tuple: Some(tuple.clone()),
        });
    }
    Ok(out)
}

fn can_see(role: Option<&str>, view: &str) -> bool {
    match audience(view) {
        Some(None) => true,
        Some(Some("")) => role.is_some(),
        Some(Some(r)) => role == Some(r),
        None => false,
    }
}

/// Expands an atomic sweep into one test per (actor, visible view).
pub fn atomic_tests(registry: &Registry, def: &AtomicDef) -> Result<Vec<TestCase>, RegistryError> {
    let fixture = Fixture::shipped(&def.fixture)
        .ok_or_else(|| RegistryError::UnknownFixture(def.fixture.clone()))?;
    let short = def
        .fixture
        .strip_prefix("baseline-")
        .unwrap_or(&def.fixture);
    let mut tests = Vec::new();
    for actor in &def.actors {
        let role = if actor == "anon" {
            None
        } else {
            let user = fixture
                .user(actor)
                .ok_or_else(|| RegistryError::UnknownActor {
                    fixture: def.fixture.clone(),
                    actor: actor.clone(),
                })?;
            Some(user.role.as_str())
        };
        for view in oracle::VIEW_IDS.iter().filter(|v| can_see(role, v)) {
            let path = oracle::route(view).expect("every view is routed");
            let mut args = BTreeMap::from([("path".to_string(), path.to_string())]);
            let block = if role.is_some() {
                args.insert("user".into(), actor.clone());
                "atomic-view"
            } else {
                "atomic-view-anon"
            };
            let test_id = format!("a-{short}-{actor}-{view}");
            let bound = registry.bind_ref(
                &test_id,
                &BlockRef {
                    block: block.into(),
                    args,
                },
            )?;
            tests.push(TestCase {
                test_id,
                category: Category::Atomic,
                fixture_id: def.fixture.clone(),
                entry: Entry::default(),
                blocks: vec![bound],
                data_tuple: None,
            });
        }
    }
    Ok(tests)
}

/// The complete, ordered suite: atomic, then process, then negative.
#[derive(Debug, Clone, Default)]
pub struct Suite {
    pub tests: Vec<TestCase>,
    pub warnings: Vec<String>,
}

impl Suite {
    pub fn build(
        registry: &Registry,
        model: &ProcessModel,
        paths: &[PathEntry],
    ) -> Result<Suite, RegistryError> {
        let mut suite = Suite::default();
        for def in &registry.atomic {
            suite.tests.extend(atomic_tests(registry, def)?);
        }
        for entry in paths.iter().filter(|p| p.expect_error.is_none()) {
            if let Some(state) = entry
                .path
                .entry_state
                .as_deref()
                .filter(|s| *s != model.start_state)
            {
                suite.warnings.push(format!(
                    "path {} starts mid-model at {state}",
                    entry.path.id
                ));
            }
            suite
                .tests
                .push(compose_process_test(&entry.path, model, registry)?);
        }
        for template in &registry.templates {
            let tuples = load_tuples(&registry.base_dir.join(&template.tuples))?;
            let p = parameterize_with_data_tuples(registry, template, &tuples)?;
            suite.tests.extend(p.tests);
            suite.warnings.extend(p.warnings);
        }
        for def in &registry.tests {
            let blocks = def
                .blocks
                .iter()
                .map(|r| registry.bind_ref(&def.id, r))
                .collect::<Result<Vec<_>, _>>()?;
            suite.tests.push(TestCase {
                test_id: def.id.clone(),
                category: def.category,
                fixture_id: def.fixture.clone(),
                entry: Entry::default(),
                blocks,
                data_tuple: None,
            });
        }
        suite.tests.sort_by_key(|t| t.category);
        let mut seen = BTreeSet::new();
        for t in &suite.tests {
            if !seen.insert(t.test_id.as_str()) {
                return Err(RegistryError::Duplicate(t.test_id.clone()));
            }
        }
        Ok(suite)
    }

    pub fn ids(&self) -> Vec<String> {
        self.tests.iter().map(|t| t.test_id.clone()).collect()
    }

    pub fn get(&self, id: &str) -> Option<&TestCase> {
        self.tests.iter().find(|t| t.test_id == id)
    }

    /// Keeps only the named tests, in suite order.
    pub fn select(&self, ids: &[String]) -> Suite {
        Suite {
            tests: self
                .tests
                .iter()
                .filter(|t| ids.contains(&t.test_id))
                .cloned()
                .collect(),
            warnings: self.warnings.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DOC: &str = r#"
[[block]]
id = "login-as"
params = { password = "" }
steps = [{ action = "login", user = "{user}", raw = true }]

[[block]]
id = "enroll"
checks = ["view", "state"]
steps = [{ action = "enroll", subject = "{subject}", raw = true }]

[[template]]
id = "tp"
fixture = "baseline-small"
columns = ["student", "subject"]
tuples = "none.csv"
blocks = [
  { block = "login-as", args = { user = "$student" } },
  { block = "enroll", args = { subject = "$subject" } },
]
"#;

    fn registry() -> Registry {
        Registry::parse(DOC, Path::new(".")).unwrap()
    }

    #[test]
    fn binding_substitutes_and_rejects() {
        let r = registry();
        let def = &r.blocks["enroll"];
        let b = bind(def, &BTreeMap::from([("subject".into(), "s1".into())])).unwrap();
        assert_eq!(
            b.steps,
            vec![Step::Enroll {
                subject: "s1".into(),
                raw: true
            }]
        );
        assert_eq!(b.checks, vec![Check::View, Check::State]);
        assert!(matches!(
            bind(def, &BTreeMap::new()),
            Err(RegistryError::UnboundParam { .. })
        ));
        assert!(matches!(
            bind(def, &BTreeMap::from([("nope".into(), "x".into())])),
            Err(RegistryError::UnknownArgument { .. })
        ));
    }

    #[test]
    fn tuples_expand_and_check_arity() {
        let r = registry();
        let t = &r.templates[0];
        let rows = vec![
            vec!["st03".to_string(), "s1".to_string()],
            vec!["st04".to_string(), "s2".to_string()],
        ];
        let p = parameterize_with_data_tuples(&r, t, &rows).unwrap();
        assert_eq!(p.tests.len(), 2);
        assert_eq!(p.tests[1].test_id, "tp-1");
        assert_eq!(p.tests[1].data_tuple.as_ref().unwrap()[0], "st04");
        assert_eq!(
            p.tests[1].blocks[0].steps[0],
            Step::Login {
                user: "st04".into(),
                password: None,
                raw: true
            }
        );
        let bad = vec![rows[0].clone(), vec!["st01".to_string()]];
        assert_eq!(
            parameterize_with_data_tuples(&r, t, &bad).unwrap_err(),
            RegistryError::Tuple(TupleError::ArityMismatch {
                row: 1,
                expected: 2,
                found: 1
            })
        );
        let empty = parameterize_with_data_tuples(&r, t, &[]).unwrap();
        assert!(empty.tests.is_empty());
        assert_eq!(empty.warnings.len(), 1);
    }

    #[test]
    fn visibility_matches_audience() {
        assert!(can_see(None, "home"));
        assert!(!can_see(None, "profile"));
        assert!(can_see(Some("student"), "profile"));
        assert!(!can_see(Some("student"), "lecturer-terms"));
        assert!(can_see(Some("lecturer"), "term-participants"));
    }
}

//! Labeled transition system of the SUT's user-visible flows.
//!
//! Model documents are TOML:
//!
//! ```toml
//! start_state = "anon-home"
//! max_path_length = 64          # optional
//!
//! [[state]]
//! id = "anon-home"
//! label = "Home page, not logged in"
//! view = "home"                 # data-view the page must carry
//! flash = "ok:enrolled"         # optional; "error:*" accepts any error code
//! entry_user = "st01"           # optional; lets paths start here
//!
//! [[transition]]
//! id = "t01"
//! from = "anon-home"
//! to = "anon-subjects"
//! action = "open subject list"
//! ```

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_MAX_PATH_LENGTH: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct State {
    pub id: String,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub view: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entry_user: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub id: String,
    pub from: String,
    pub to: String,
    pub action: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDocument {
    start_state: String,
    #[serde(default)]
    max_path_length: Option<usize>,
    #[serde(default)]
    state: Vec<State>,
    #[serde(default)]
    transition: Vec<Transition>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("model does not parse: {0}")]
    Parse(String),
    #[error("duplicate id {0}")]
    DuplicateId(String),
    #[error("transition {0} references a missing state")]
    DanglingEndpoint(String),
    #[error("start state {0} does not exist")]
    UnknownStartState(String),
    #[error("state {0} is unreachable from the start state")]
    UnreachableState(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProcessModel {
    pub start_state: String,
    pub max_path_length: usize,
    pub states: Vec<State>,
    pub transitions: Vec<Transition>,
    state_index: BTreeMap<String, usize>,
    transition_index: BTreeMap<String, usize>,
}

impl ProcessModel {
    /// Parses and validates a model document.
    pub fn parse(document: &str) -> Result<ProcessModel, ModelError> {
        let doc: ModelDocument =
            toml::from_str(document).map_err(|e| ModelError::Parse(e.to_string()))?;
        ProcessModel::new(
            doc.start_state,
            doc.state,
            doc.transition,
            doc.max_path_length.unwrap_or(DEFAULT_MAX_PATH_LENGTH),
        )
    }

    pub fn load(path: &Path) -> Result<ProcessModel, ModelError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ModelError::Parse(format!("{}: {e}", path.display())))?;
        ProcessModel::parse(&text)
    }

    pub fn new(
        start_state: String,
        states: Vec<State>,
        transitions: Vec<Transition>,
        max_path_length: usize,
    ) -> Result<ProcessModel, ModelError> {
        let mut state_index = BTreeMap::new();
        for (i, s) in states.iter().enumerate() {
            if state_index.insert(s.id.clone(), i).is_some() {
                return Err(ModelError::DuplicateId(s.id.clone()));
            }
        }
        let mut transition_index = BTreeMap::new();
        for (i, t) in transitions.iter().enumerate() {
            if transition_index.insert(t.id.clone(), i).is_some() {
                return Err(ModelError::DuplicateId(t.id.clone()));
            }
            if !state_index.contains_key(&t.from) || !state_index.contains_key(&t.to) {
                return Err(ModelError::DanglingEndpoint(t.id.clone()));
            }
        }
        if !state_index.contains_key(&start_state) {
            return Err(ModelError::UnknownStartState(start_state));
        }
        let model = ProcessModel {
            start_state,
            max_path_length,
            states,
            transitions,
            state_index,
            transition_index,
        };
        let reachable = model.reachable_states();
        if let Some(s) = model.states.iter().find(|s| !reachable.contains(&s.id)) {
            return Err(ModelError::UnreachableState(s.id.clone()));
        }
        Ok(model)
    }

    /// (|states|, |transitions|)
    pub fn counts(&self) -> (usize, usize) {
        (self.states.len(), self.transitions.len())
    }

    pub fn state(&self, id: &str) -> Option<&State> {
        self.state_index.get(id).map(|&i| &self.states[i])
    }

    pub fn transition(&self, id: &str) -> Option<&Transition> {
        self.transition_index.get(id).map(|&i| &self.transitions[i])
    }

    pub fn outgoing<'a>(&'a self, state: &'a str) -> impl Iterator<Item = &'a Transition> + 'a {
        self.transitions.iter().filter(move |t| t.from == state)
    }

    fn reachable_states(&self) -> BTreeSet<String> {
        let mut seen = BTreeSet::from([self.start_state.clone()]);
        let mut queue = VecDeque::from([self.start_state.clone()]);
        while let Some(state) = queue.pop_front() {
            for t in self.outgoing(&state) {
                if seen.insert(t.to.clone()) {
                    queue.push_back(t.to.clone());
                }
            }
        }
        seen
    }

    /// Transitions reachable from the start state within `depth` steps,
    /// found by breadth-first walk; sorted by id.
    pub fn walk(&self, depth: usize) -> Vec<String> {
        let mut states = BTreeSet::from([self.start_state.clone()]);
        let mut frontier = vec![self.start_state.clone()];
        let mut used = BTreeSet::new();
        for _ in 0..depth {
            let mut next = Vec::new();
            for state in &frontier {
                for t in self.outgoing(state) {
                    used.insert(t.id.clone());
                    if states.insert(t.to.clone()) {
                        next.push(t.to.clone());
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            frontier = next;
        }
        used.into_iter().collect()
    }

    /// Graphviz rendering for visualization.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph process_model {\n  rankdir=LR;\n");
        for s in &self.states {
            let shape = if s.id == self.start_state {
                "doublecircle"
            } else {
                "box"
            };
            let _ = writeln!(
                out,
                "  \"{}\" [shape={shape}, label=\"{}\\n{}\"];",
                s.id,
                s.id,
                s.label.replace('"', "'")
            );
        }
        for t in &self.transitions {
            let _ = writeln!(
                out,
                "  \"{}\" -> \"{}\" [label=\"{}: {}\"];",
                t.from,
                t.to,
                t.id,
                t.action.replace('"', "'")
            );
        }
        out.push_str("}\n");
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathTestCase {
    pub id: String,
    #[serde(rename = "transitions")]
    pub transition_ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entry_state: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixture: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "error", content = "index", rename_all = "kebab-case")]
pub enum PathError {
    #[error("path is empty")]
    EmptyPath,
    #[error("unknown transition at index {0}")]
    UnknownTransition(usize),
    #[error("broken chain at index {0}")]
    BrokenChain(usize),
    #[error("path exceeds the maximum length at index {0}")]
    TooLong(usize),
}

impl PathError {
    pub fn index(&self) -> Option<usize> {
        match self {
            PathError::EmptyPath => None,
            PathError::UnknownTransition(i) | PathError::BrokenChain(i) | PathError::TooLong(i) => {
                Some(*i)
            }
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            PathError::EmptyPath => "empty-path",
            PathError::UnknownTransition(_) => "unknown-transition",
            PathError::BrokenChain(_) => "broken-chain",
            PathError::TooLong(_) => "too-long",
        }
    }
}

/// Checks membership and chaining; reports the first offending index.
///
/// The first transition must depart from the path's entry state, which is
/// the model's start state unless the path names another one. An entry
/// state that does not exist counts as a broken chain at index 0.
pub fn validate_path(model: &ProcessModel, path: &PathTestCase) -> Result<(), PathError> {
    if path.transition_ids.is_empty() {
        return Err(PathError::EmptyPath);
    }
    let entry = path.entry_state.as_deref().unwrap_or(&model.start_state);
    let mut at = match model.state(entry) {
        Some(s) => s.id.as_str(),
        None => return Err(PathError::BrokenChain(0)),
    };
    for (i, tid) in path.transition_ids.iter().enumerate() {
        if i >= model.max_path_length {
            return Err(PathError::TooLong(i));
        }
        let t = model
            .transition(tid)
            .ok_or(PathError::UnknownTransition(i))?;
        if t.from != at {
            return Err(PathError::BrokenChain(i));
        }
        at = &t.to;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("path {path_id} is invalid: {error}")]
pub struct InvalidPath {
    pub path_id: String,
    pub error: PathError,
}

/// Model transitions that no path traverses, sorted by id.
pub fn transition_coverage(
    model: &ProcessModel,
    paths: &[PathTestCase],
) -> Result<Vec<String>, InvalidPath> {
    let mut covered = BTreeSet::new();
    for p in paths {
        validate_path(model, p).map_err(|error| InvalidPath {
            path_id: p.id.clone(),
            error,
        })?;
        covered.extend(p.transition_ids.iter().cloned());
    }
    let all: BTreeSet<&String> = model.transitions.iter().map(|t| &t.id).collect();
    Ok(all
        .into_iter()
        .filter(|id| !covered.contains(*id))
        .cloned()
        .collect())
}

/// One path as found in a path file, with optional expected failure.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathEntry {
    #[serde(flatten)]
    pub path: PathTestCase,
    /// For invalid-path fixtures: expected error kind, e.g. "broken-chain".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect_error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect_index: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PathDocument {
    #[serde(default)]
    path: Vec<PathEntry>,
}

pub fn parse_paths(document: &str) -> Result<Vec<PathEntry>, ModelError> {
    let doc: PathDocument =
        toml::from_str(document).map_err(|e| ModelError::Parse(e.to_string()))?;
    let mut ids = BTreeSet::new();
    for p in &doc.path {
        if !ids.insert(p.path.id.clone()) {
            return Err(ModelError::DuplicateId(p.path.id.clone()));
        }
    }
    Ok(doc.path)
}

pub fn load_paths(path: &Path) -> Result<Vec<PathEntry>, ModelError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ModelError::Parse(format!("{}: {e}", path.display())))?;
    parse_paths(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"
start_state = "a"
[[state]]
id = "a"
label = "A"
[[state]]
id = "b"
label = "B"
[[state]]
id = "c"
label = "C"
[[transition]]
id = "t1"
from = "a"
to = "b"
action = "go b"
[[transition]]
id = "t2"
from = "b"
to = "c"
action = "go c"
[[transition]]
id = "t3"
from = "c"
to = "a"
action = "back"
[[transition]]
id = "t4"
from = "b"
to = "b"
action = "stay"
"#;

    fn model() -> ProcessModel {
        ProcessModel::parse(SMALL).unwrap()
    }

    fn path(ids: &[&str]) -> PathTestCase {
        PathTestCase {
            id: "p".into(),
            transition_ids: ids.iter().map(|s| s.to_string()).collect(),
            entry_state: None,
            fixture: None,
        }
    }

    #[test]
    fn loads_and_counts() {
        let m = model();
        assert_eq!(m.counts(), (3, 4));
        assert_eq!(m.max_path_length, DEFAULT_MAX_PATH_LENGTH);
        assert_eq!(m.walk(1), vec!["t1"]);
        assert_eq!(m.walk(10), vec!["t1", "t2", "t3", "t4"]);
        assert!(m.to_dot().contains("\"a\" -> \"b\" [label=\"t1: go b\"]"));
    }

    #[test]
    fn model_errors() {
        let dangling = SMALL.replace("to = \"c\"", "to = \"zz\"");
        assert_eq!(
            ProcessModel::parse(&dangling),
            Err(ModelError::DanglingEndpoint("t2".into()))
        );
        let dup = SMALL.replace("id = \"t2\"", "id = \"t1\"");
        assert_eq!(
            ProcessModel::parse(&dup),
            Err(ModelError::DuplicateId("t1".into()))
        );
        let unreachable = format!("{SMALL}\n[[state]]\nid = \"d\"\nlabel = \"D\"\n");
        assert_eq!(
            ProcessModel::parse(&unreachable),
            Err(ModelError::UnreachableState("d".into()))
        );
        let start = SMALL.replace("start_state = \"a\"", "start_state = \"q\"");
        assert_eq!(
            ProcessModel::parse(&start),
            Err(ModelError::UnknownStartState("q".into()))
        );
        assert!(matches!(
            ProcessModel::parse("start_state = 3"),
            Err(ModelError::Parse(_))
        ));
    }

    #[test]
    fn path_validation() {
        let m = model();
        assert_eq!(validate_path(&m, &path(&["t1"])), Ok(()));
        assert_eq!(
            validate_path(&m, &path(&["t1", "t4", "t4", "t2", "t3", "t1"])),
            Ok(())
        );
        assert_eq!(validate_path(&m, &path(&[])), Err(PathError::EmptyPath));
        assert_eq!(
            validate_path(&m, &path(&["t1", "t2", "t2"])),
            Err(PathError::BrokenChain(2))
        );
        assert_eq!(
            validate_path(&m, &path(&["t1", "nope"])),
            Err(PathError::UnknownTransition(1))
        );
        assert_eq!(
            validate_path(&m, &path(&["t2"])),
            Err(PathError::BrokenChain(0))
        );
        let mut entry = path(&["t2"]);
        entry.entry_state = Some("b".into());
        assert_eq!(validate_path(&m, &entry), Ok(()));
        entry.entry_state = Some("zz".into());
        assert_eq!(validate_path(&m, &entry), Err(PathError::BrokenChain(0)));
    }

    #[test]
    fn max_length_is_enforced() {
        let mut m = model();
        m.max_path_length = 3;
        assert_eq!(
            validate_path(&m, &path(&["t1", "t4", "t4", "t4"])),
            Err(PathError::TooLong(3))
        );
    }

    #[test]
    fn coverage_is_set_difference() {
        let m = model();
        assert_eq!(
            transition_coverage(&m, &[]).unwrap(),
            vec!["t1", "t2", "t3", "t4"]
        );
        assert_eq!(
            transition_coverage(&m, &[path(&["t1", "t2"])]).unwrap(),
            vec!["t3", "t4"]
        );
        assert!(transition_coverage(&m, &[path(&["t1", "t4", "t2", "t3"])])
            .unwrap()
            .is_empty());
        let err = transition_coverage(&m, &[path(&["t2"])]).unwrap_err();
        assert_eq!(err.error, PathError::BrokenChain(0));
    }

    #[test]
    fn path_files_parse() {
        let doc = r#"
[[path]]
id = "P1"
transitions = ["t1", "t2"]

[[path]]
id = "I1"
transitions = ["t1", "t1"]
expect_error = "broken-chain"
expect_index = 1
"#;
        let paths = parse_paths(doc).unwrap();
        assert_eq!(paths.len(), 2);
        assert_eq!(paths[1].expect_error.as_deref(), Some("broken-chain"));
        let err = validate_path(&model(), &paths[1].path).unwrap_err();
        assert_eq!((err.kind(), err.index()), ("broken-chain", Some(1)));
        let dup = doc.replace("\"I1\"", "\"P1\"");
        assert_eq!(parse_paths(&dup), Err(ModelError::DuplicateId("P1".into())));
    }
}

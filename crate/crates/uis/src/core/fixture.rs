//! Fixture documents: parsing, shipped datasets and consistency validation.
//!
//! A fixture is a TOML document with a top-level `fixture_id` and arrays of
//! tables `users`, `subjects`, `exam_terms`, `enrollments` and `grades`
//! whose keys mirror the fields of the corresponding records.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use super::error::{CoreError, CoreResult};
use super::model::{FixtureDataset, Role};

pub const SHIPPED_IDS: &[&str] = &["baseline-small", "baseline-edge"];

const BASELINE_SMALL: &str = include_str!("../../fixtures/baseline-small.toml");
const BASELINE_EDGE: &str = include_str!("../../fixtures/baseline-edge.toml");

pub fn parse(document: &str) -> CoreResult<FixtureDataset> {
    toml::from_str(document).map_err(|e| CoreError::InconsistentFixture(e.to_string()))
}

pub fn shipped(id: &str) -> Option<FixtureDataset> {
    let text = match id {
        "baseline-small" => BASELINE_SMALL,
        "baseline-edge" => BASELINE_EDGE,
        _ => return None,
    };
    Some(parse(text).expect("shipped fixture parses"))
}

/// Resolves `spec` as a shipped fixture id first, then as a file path.
pub fn load(spec: &str) -> CoreResult<FixtureDataset> {
    if let Some(dataset) = shipped(spec) {
        return Ok(dataset);
    }
    let path = Path::new(spec);
    let text = std::fs::read_to_string(path)
        .map_err(|e| CoreError::InconsistentFixture(format!("{spec}: {e}")))?;
    let dataset = parse(&text)?;
    validate(&dataset)?;
    Ok(dataset)
}

fn fail(msg: String) -> CoreResult<()> {
    Err(CoreError::InconsistentFixture(msg))
}

/// Checks referential integrity and every per-record invariant.
pub fn validate(d: &FixtureDataset) -> CoreResult<()> {
    let mut roles = BTreeMap::new();
    let mut usernames = BTreeSet::new();
    for u in &d.users {
        if roles.insert(u.id.as_str(), u.role).is_some() {
            return fail(format!("duplicate user id {}", u.id));
        }
        if !usernames.insert(u.username.as_str()) {
            return fail(format!("duplicate username {}", u.username));
        }
    }

    let mut subjects = BTreeMap::new();
    for s in &d.subjects {
        if subjects.insert(s.id.as_str(), s).is_some() {
            return fail(format!("duplicate subject id {}", s.id));
        }
        if s.credits == 0 || s.capacity == 0 {
            return fail(format!(
                "subject {} needs positive credits and capacity",
                s.id
            ));
        }
        for l in &s.lecturer_ids {
            if roles.get(l.as_str()) != Some(&Role::Lecturer) {
                return fail(format!("subject {} references non-lecturer {l}", s.id));
            }
        }
    }

    let mut enrollments = BTreeSet::new();
    for e in &d.enrollments {
        if roles.get(e.student_id.as_str()) != Some(&Role::Student) {
            return fail(format!(
                "enrollment references non-student {}",
                e.student_id
            ));
        }
        if !subjects.contains_key(e.subject_id.as_str()) {
            return fail(format!(
                "enrollment of {} references missing subject {}",
                e.student_id, e.subject_id
            ));
        }
        if !enrollments.insert((e.student_id.as_str(), e.subject_id.as_str())) {
            return fail(format!(
                "duplicate enrollment {}/{}",
                e.student_id, e.subject_id
            ));
        }
    }
    for s in &d.subjects {
        let count = enrollments.iter().filter(|(_, sub)| *sub == s.id).count();
        if count > s.capacity as usize {
            return fail(format!("subject {} over capacity", s.id));
        }
    }

    let mut terms = BTreeMap::new();
    for t in &d.exam_terms {
        if terms.insert(t.id.as_str(), t).is_some() {
            return fail(format!("duplicate exam term id {}", t.id));
        }
        if !subjects.contains_key(t.subject_id.as_str()) {
            return fail(format!(
                "exam term {} references missing subject {}",
                t.id, t.subject_id
            ));
        }
        if t.max_participants == 0 {
            return fail(format!("exam term {} needs positive capacity", t.id));
        }
        if t.registered_student_ids.len() > t.max_participants as usize {
            return fail(format!("exam term {} over capacity", t.id));
        }
        let mut seen = BTreeSet::new();
        for st in &t.registered_student_ids {
            if !seen.insert(st.as_str()) {
                return fail(format!("exam term {} registers {st} twice", t.id));
            }
            if !enrollments.contains(&(st.as_str(), t.subject_id.as_str())) {
                return fail(format!(
                    "exam term {} registers {st} who is not enrolled in {}",
                    t.id, t.subject_id
                ));
            }
        }
    }

    let mut graded = BTreeSet::new();
    for g in &d.grades {
        let Some(term) = terms.get(g.exam_term_id.as_str()) else {
            return fail(format!("grade references missing term {}", g.exam_term_id));
        };
        if !term.registered_student_ids.contains(&g.student_id) {
            return fail(format!(
                "grade for {} on {} without registration",
                g.student_id, g.exam_term_id
            ));
        }
        if roles.get(g.graded_by.as_str()) != Some(&Role::Lecturer) {
            return fail(format!("grade graded by non-lecturer {}", g.graded_by));
        }
        if !graded.insert((g.student_id.as_str(), g.exam_term_id.as_str())) {
            return fail(format!(
                "duplicate grade {}/{}",
                g.student_id, g.exam_term_id
            ));
        }
    }
    Ok(())
}

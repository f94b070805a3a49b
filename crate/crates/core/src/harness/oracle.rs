//! Independent oracle: what every page must show, computed from fixture
//! data alone.
//!
//! Nothing here touches the view code of the system under test. The
//! fixture records are this module's own serde types, and the page rules
//! are written out again from the documented page contract.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct User {
    pub id: String,
    pub username: String,
    pub password_digest: String,
    pub role: String,
    pub display_name: String,
    pub email: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subject {
    pub id: String,
    pub name: String,
    pub credits: u32,
    pub capacity: u32,
    pub lecturer_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Term {
    pub id: String,
    pub subject_id: String,
    pub starts_at: String,
    pub max_participants: u32,
    pub registered_student_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Enrollment {
    pub student_id: String,
    pub subject_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grade {
    pub student_id: String,
    pub exam_term_id: String,
    pub value: String,
    pub graded_by: String,
}

/// A dataset as the oracle sees it. Also the shape of `/testbed/dump`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fixture {
    pub fixture_id: String,
    #[serde(default)]
    pub users: Vec<User>,
    #[serde(default)]
    pub subjects: Vec<Subject>,
    #[serde(default)]
    pub exam_terms: Vec<Term>,
    #[serde(default)]
    pub enrollments: Vec<Enrollment>,
    #[serde(default)]
    pub grades: Vec<Grade>,
}

const SMALL: &str = include_str!("../../../uis/fixtures/baseline-small.toml");
const EDGE: &str = include_str!("../../../uis/fixtures/baseline-edge.toml");

pub const SHIPPED_FIXTURES: &[&str] = &["baseline-small", "baseline-edge"];

impl Fixture {
    pub fn shipped(id: &str) -> Option<Fixture> {
        let text = match id {
            "baseline-small" => SMALL,
            "baseline-edge" => EDGE,
            _ => return None,
        };
        Some(
            toml::from_str::<Fixture>(text)
                .expect("shipped fixture parses")
                .normalized(),
        )
    }

    /// Canonical order: every collection sorted by its key. Registration
    /// lists keep their order, which is meaningful.
    pub fn normalized(mut self) -> Fixture {
        self.users.sort_by(|a, b| a.id.cmp(&b.id));
        self.subjects.sort_by(|a, b| a.id.cmp(&b.id));
        self.exam_terms.sort_by(|a, b| a.id.cmp(&b.id));
        self.enrollments.sort();
        self.grades.sort_by(|a, b| {
            (&a.student_id, &a.exam_term_id).cmp(&(&b.student_id, &b.exam_term_id))
        });
        self
    }

    pub fn user(&self, id: &str) -> Option<&User> {
        self.users.iter().find(|u| u.id == id)
    }

    pub fn subject(&self, id: &str) -> Option<&Subject> {
        self.subjects.iter().find(|s| s.id == id)
    }

    pub fn term(&self, id: &str) -> Option<&Term> {
        self.exam_terms.iter().find(|t| t.id == id)
    }

    pub fn grade(&self, student: &str, term: &str) -> Option<&Grade> {
        self.grades
            .iter()
            .find(|g| g.student_id == student && g.exam_term_id == term)
    }

    pub fn enrolled(&self, student: &str, subject: &str) -> bool {
        self.enrollments
            .iter()
            .any(|e| e.student_id == student && e.subject_id == subject)
    }

    pub fn enrolled_count(&self, subject: &str) -> usize {
        self.enrollments
            .iter()
            .filter(|e| e.subject_id == subject)
            .count()
    }

    pub fn teaches(&self, lecturer: &str, subject: &str) -> bool {
        self.subject(subject)
            .is_some_and(|s| s.lecturer_ids.iter().any(|l| l == lecturer))
    }

    pub fn check_password(&self, username: &str, password: &str) -> Option<&User> {
        let digest: String = Sha256::digest(format!("{username}:{password}").as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect();
        self.users
            .iter()
            .find(|u| u.username == username && u.password_digest == digest)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("unknown view {0}")]
    UnknownView(String),
    #[error("unknown actor {0}")]
    UnknownActor(String),
    #[error("view {view} is not available to {actor}")]
    Forbidden { view: String, actor: String },
}

/// Who may see a view: `None` anyone, `Some("")` any logged-in user,
/// otherwise the named role only.
pub fn audience(view: &str) -> Option<Option<&'static str>> {
    Some(match view {
        "home" | "login" | "subject-list" | "lecturer-list" => None,
        "profile" => Some(""),
        "my-subjects" | "available-subjects" | "my-terms" | "my-grades" => Some("student"),
        "lecturer-subjects" | "lecturer-terms" | "term-participants" => Some("lecturer"),
        _ => return None,
    })
}

pub const VIEW_IDS: &[&str] = &[
    "home",
    "login",
    "subject-list",
    "lecturer-list",
    "profile",
    "my-subjects",
    "available-subjects",
    "my-terms",
    "my-grades",
    "lecturer-subjects",
    "lecturer-terms",
    "term-participants",
];

pub fn route(view: &str) -> Option<&'static str> {
    Some(match view {
        "home" => "/",
        "login" => "/login",
        "subject-list" => "/subjects",
        "lecturer-list" => "/lecturers",
        "profile" => "/profile",
        "my-subjects" => "/student/subjects",
        "available-subjects" => "/student/available",
        "my-terms" => "/student/terms",
        "my-grades" => "/student/grades",
        "lecturer-subjects" => "/lecturer/subjects",
        "lecturer-terms" => "/lecturer/terms",
        "term-participants" => "/lecturer/participants",
        _ => return None,
    })
}

pub fn view_at(path: &str) -> Option<&'static str> {
    VIEW_IDS.iter().copied().find(|v| route(v) == Some(path))
}

fn title(view: &str) -> &'static str {
    match view {
        "home" => "Home",
        "login" => "Log in",
        "subject-list" => "Subjects",
        "lecturer-list" => "Lecturers",
        "profile" => "Profile",
        "my-subjects" => "My subjects",
        "available-subjects" => "Available subjects",
        "my-terms" => "My exam terms",
        "my-grades" => "My grades",
        "lecturer-subjects" => "Taught subjects",
        "lecturer-terms" => "Exam terms",
        "term-participants" => "Participants",
        _ => "Error",
    }
}

/// Text shown by the error page for each code.
pub fn error_message(code: &str) -> &'static str {
    match code {
        "forbidden" => "This page is not available to you.",
        "not-found" => "No such page.",
        "bad-request" => "Missing or malformed form field.",
        "method-not-allowed" => "Method not allowed.",
        _ => "",
    }
}

/// Expected page content: `(element id, value)` in document order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Expectation {
    pub view_id: String,
    pub actor: Option<String>,
    pub elements: Vec<(String, String)>,
}

impl Expectation {
    pub fn map(&self) -> BTreeMap<&str, &str> {
        self.elements
            .iter()
            .map(|(k, v)| (k.as_str(), v.as_str()))
            .collect()
    }

    pub fn ids(&self) -> BTreeSet<String> {
        self.elements.iter().map(|(k, _)| k.clone()).collect()
    }
}

struct Sheet(Vec<(String, String)>);

impl Sheet {
    fn put(&mut self, id: impl Into<String>, value: impl Into<String>) {
        self.0.push((id.into(), value.into()));
    }
}

fn names_of(fx: &Fixture, ids: &[String]) -> Vec<String> {
    let mut sorted: Vec<&String> = ids.iter().collect();
    sorted.sort();
    sorted
        .into_iter()
        .filter_map(|id| fx.user(id))
        .map(|u| u.display_name.clone())
        .collect()
}

fn chrome(fx: &Fixture, actor: Option<&User>, flash: Option<&str>, view: &str, out: &mut Sheet) {
    out.put("nav-home", "Home");
    out.put("nav-subject-list", "Subjects");
    out.put("nav-lecturer-list", "Lecturers");
    match actor {
        None => out.put("nav-login", "Log in"),
        Some(user) => {
            let links: &[(&str, &str)] = if user.role == "student" {
                &[
                    ("my-subjects", "My subjects"),
                    ("available-subjects", "Available subjects"),
                    ("my-terms", "My exam terms"),
                    ("my-grades", "My grades"),
                ]
            } else {
                &[
                    ("lecturer-subjects", "Taught subjects"),
                    ("lecturer-terms", "Exam terms"),
                    ("term-participants", "Participants"),
                ]
            };
            for (v, text) in links {
                out.put(format!("nav-{v}"), *text);
            }
            out.put("nav-profile", "Profile");
            out.put("nav-user", user.display_name.clone());
            out.put("logout-form", "/logout");
            out.put("logout-button", "Log out");
        }
    }
    let _ = fx;
    if let Some(code) = flash.and_then(|f| f.split_once(':')).map(|(_, c)| c) {
        out.put("flash-message", code);
    }
    out.put(format!("{view}-title"), title(view));
}

/// Flash values that the page will actually show, in `kind:code` form.
pub fn shown_flash(raw: Option<&str>) -> Option<String> {
    let (kind, code) = raw?.split_once(':')?;
    let kind_ok = kind == "ok" || kind == "error";
    let code_ok = !code.is_empty()
        && code
            .bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'-');
    (kind_ok && code_ok).then(|| format!("{kind}:{code}"))
}

fn resolve_actor<'f>(
    fx: &'f Fixture,
    actor: Option<&str>,
) -> Result<Option<&'f User>, OracleError> {
    match actor {
        None => Ok(None),
        Some(id) => fx
            .user(id)
            .map(Some)
            .ok_or_else(|| OracleError::UnknownActor(id.to_string())),
    }
}

/// Expected content of `view` for `actor` (`None` is anonymous), with an
/// optional raw flash parameter as found in the URL.
pub fn expected_view(
    fx: &Fixture,
    view: &str,
    actor: Option<&str>,
    flash: Option<&str>,
) -> Result<Expectation, OracleError> {
    let who = audience(view).ok_or_else(|| OracleError::UnknownView(view.to_string()))?;
    let user = resolve_actor(fx, actor)?;
    let allowed = match (who, user) {
        (None, _) => true,
        (Some(_), None) => false,
        (Some(""), Some(_)) => true,
        (Some(role), Some(u)) => u.role == role,
    };
    if !allowed {
        return Err(OracleError::Forbidden {
            view: view.to_string(),
            actor: actor.unwrap_or("anonymous").to_string(),
        });
    }
    let mut out = Sheet(Vec::new());
    let flash = shown_flash(flash);
    chrome(fx, user, flash.as_deref(), view, &mut out);
    let me = user.map(|u| u.id.as_str()).unwrap_or("");
    match view {
        "home" => out.put(
            "home-welcome",
            match user {
                Some(u) => format!("Welcome, {}.", u.display_name),
                None => "Welcome to the university information system.".to_string(),
            },
        ),
        "login" => {
            out.put("login-form", "/login");
            out.put("login-username", "");
            out.put("login-password", "");
            out.put("login-submit", "Log in");
        }
        "subject-list" => subject_table(fx, &fx.subjects.iter().collect::<Vec<_>>(), &mut out),
        "lecturer-list" => lecturer_table(fx, &mut out),
        "profile" => {
            let u = user.expect("checked above");
            out.put("profile-username", u.username.clone());
            out.put("profile-name", u.display_name.clone());
            out.put("profile-role", u.role.clone());
            out.put("profile-email", u.email.clone());
            out.put("profile-form", "/profile");
            out.put("profile-email-input", u.email.clone());
            out.put("profile-submit", "Save");
        }
        "my-subjects" => my_subjects(fx, me, &mut out),
        "available-subjects" => available(fx, me, &mut out),
        "my-terms" => my_terms(fx, me, &mut out),
        "my-grades" => my_grades(fx, me, &mut out),
        "lecturer-subjects" => taught(fx, me, &mut out),
        "lecturer-terms" => lecturer_terms(fx, me, &mut out),
        "term-participants" => participants(fx, me, &mut out),
        _ => unreachable!("audience() knows every view"),
    }
    Ok(Expectation {
        view_id: view.to_string(),
        actor: actor.map(str::to_string),
        elements: out.0,
    })
}

/// Expected error page with the given code, as seen by `actor`.
pub fn expected_error_page(
    fx: &Fixture,
    actor: Option<&str>,
    code: &str,
) -> Result<Expectation, OracleError> {
    let user = resolve_actor(fx, actor)?;
    let mut out = Sheet(Vec::new());
    chrome(fx, user, None, "error", &mut out);
    out.put("error-code", code);
    out.put("error-message", error_message(code));
    Ok(Expectation {
        view_id: "error".into(),
        actor: actor.map(str::to_string),
        elements: out.0,
    })
}

fn empty(out: &mut Sheet, table: &str) {
    out.put(format!("{table}-empty"), "No records.");
}

fn subject_table(fx: &Fixture, subjects: &[&Subject], out: &mut Sheet) {
    out.put("subject-table", "");
    if subjects.is_empty() {
        empty(out, "subject-table");
    }
    for s in subjects {
        let row = format!("subject-row-{}", s.id);
        out.put(row.clone(), "");
        out.put(format!("{row}-name"), s.name.clone());
        out.put(format!("{row}-credits"), s.credits.to_string());
        out.put(
            format!("{row}-lecturers"),
            names_of(fx, &s.lecturer_ids).join(", "),
        );
        out.put(
            format!("{row}-seats"),
            format!("{}/{}", fx.enrolled_count(&s.id), s.capacity),
        );
    }
}

fn lecturer_table(fx: &Fixture, out: &mut Sheet) {
    out.put("lecturer-table", "");
    let lecturers: Vec<&User> = fx.users.iter().filter(|u| u.role == "lecturer").collect();
    if lecturers.is_empty() {
        empty(out, "lecturer-table");
    }
    for l in lecturers {
        let row = format!("lecturer-row-{}", l.id);
        let taught: Vec<&str> = fx
            .subjects
            .iter()
            .filter(|s| s.lecturer_ids.contains(&l.id))
            .map(|s| s.name.as_str())
            .collect();
        out.put(row.clone(), "");
        out.put(format!("{row}-name"), l.display_name.clone());
        out.put(format!("{row}-email"), l.email.clone());
        out.put(format!("{row}-subjects"), taught.join(", "));
    }
}

fn my_subjects(fx: &Fixture, me: &str, out: &mut Sheet) {
    out.put("enrollment-table", "");
    let mine: Vec<&Subject> = fx
        .subjects
        .iter()
        .filter(|s| fx.enrolled(me, &s.id))
        .collect();
    if mine.is_empty() {
        empty(out, "enrollment-table");
    }
    for s in &mine {
        let row = format!("enrollment-row-{}", s.id);
        out.put(row.clone(), "");
        out.put(format!("{row}-name"), s.name.clone());
        out.put(format!("{row}-credits"), s.credits.to_string());
        out.put(format!("cancel-form-{}", s.id), "/student/cancel");
        out.put(format!("cancel-subject-{}", s.id), s.id.clone());
        out.put(format!("cancel-button-{}", s.id), "Cancel");
    }
    let total: u32 = mine.iter().map(|s| s.credits).sum();
    out.put("my-subjects-total-credits", total.to_string());
}

/// Subjects the student is not enrolled in, by id.
pub fn available_subject_ids(fx: &Fixture, student: &str) -> Vec<String> {
    let taken: BTreeSet<&str> = fx
        .enrollments
        .iter()
        .filter(|e| e.student_id == student)
        .map(|e| e.subject_id.as_str())
        .collect();
    fx.subjects
        .iter()
        .map(|s| s.id.clone())
        .filter(|id| !taken.contains(id.as_str()))
        .collect()
}

fn available(fx: &Fixture, me: &str, out: &mut Sheet) {
    out.put("available-table", "");
    let ids = available_subject_ids(fx, me);
    if ids.is_empty() {
        empty(out, "available-table");
    }
    for id in ids {
        let s = fx.subject(&id).expect("listed from the fixture");
        let row = format!("subject-row-{id}");
        out.put(row.clone(), "");
        out.put(format!("{row}-name"), s.name.clone());
        out.put(format!("{row}-credits"), s.credits.to_string());
        out.put(
            format!("{row}-seats"),
            format!("{}/{}", fx.enrolled_count(&id), s.capacity),
        );
        out.put(format!("enroll-form-{id}"), "/student/enroll");
        out.put(format!("enroll-subject-{id}"), id.clone());
        out.put(format!("enroll-button-{id}"), "Enroll");
    }
}

/// Registration status of a student on a term, as the term table shows it.
pub fn term_status(fx: &Fixture, student: &str, term: &Term) -> &'static str {
    if fx.grade(student, &term.id).is_some() {
        "graded"
    } else if term.registered_student_ids.iter().any(|s| s == student) {
        "registered"
    } else if term.registered_student_ids.len() as u32 >= term.max_participants {
        "full"
    } else {
        "open"
    }
}

fn subject_name(fx: &Fixture, id: &str) -> String {
    fx.subject(id).map(|s| s.name.clone()).unwrap_or_default()
}

fn my_terms(fx: &Fixture, me: &str, out: &mut Sheet) {
    out.put("term-table", "");
    let terms: Vec<&Term> = fx
        .exam_terms
        .iter()
        .filter(|t| fx.enrolled(me, &t.subject_id))
        .collect();
    if terms.is_empty() {
        empty(out, "term-table");
    }
    for t in terms {
        let row = format!("term-row-{}", t.id);
        let status = term_status(fx, me, t);
        out.put(row.clone(), "");
        out.put(format!("{row}-subject"), subject_name(fx, &t.subject_id));
        out.put(format!("{row}-starts"), t.starts_at.clone());
        out.put(
            format!("{row}-seats"),
            format!("{}/{}", t.registered_student_ids.len(), t.max_participants),
        );
        out.put(format!("{row}-status"), status);
        if status == "open" {
            out.put(format!("register-form-{}", t.id), "/student/register");
            out.put(format!("register-term-{}", t.id), t.id.clone());
            out.put(format!("register-button-{}", t.id), "Register");
        }
    }
}

fn my_grades(fx: &Fixture, me: &str, out: &mut Sheet) {
    out.put("grade-table", "");
    let mut mine: Vec<&Grade> = fx.grades.iter().filter(|g| g.student_id == me).collect();
    mine.sort_by(|a, b| a.exam_term_id.cmp(&b.exam_term_id));
    if mine.is_empty() {
        empty(out, "grade-table");
    }
    for g in mine {
        let term = fx.term(&g.exam_term_id);
        let row = format!("grade-row-{}", g.exam_term_id);
        out.put(row.clone(), "");
        out.put(
            format!("{row}-subject"),
            term.map(|t| subject_name(fx, &t.subject_id))
                .unwrap_or_default(),
        );
        out.put(
            format!("{row}-date"),
            term.map(|t| t.starts_at.clone()).unwrap_or_default(),
        );
        out.put(format!("{row}-value"), g.value.clone());
        out.put(
            format!("{row}-lecturer"),
            fx.user(&g.graded_by)
                .map(|u| u.display_name.clone())
                .unwrap_or_default(),
        );
    }
}

fn taught(fx: &Fixture, me: &str, out: &mut Sheet) {
    out.put("taught-table", "");
    let mine: Vec<&Subject> = fx
        .subjects
        .iter()
        .filter(|s| fx.teaches(me, &s.id))
        .collect();
    if mine.is_empty() {
        empty(out, "taught-table");
    }
    for s in mine {
        let row = format!("subject-row-{}", s.id);
        let terms = fx
            .exam_terms
            .iter()
            .filter(|t| t.subject_id == s.id)
            .count();
        out.put(row.clone(), "");
        out.put(format!("{row}-name"), s.name.clone());
        out.put(format!("{row}-credits"), s.credits.to_string());
        out.put(
            format!("{row}-seats"),
            format!("{}/{}", fx.enrolled_count(&s.id), s.capacity),
        );
        out.put(format!("{row}-terms"), terms.to_string());
    }
}

fn lecturer_terms(fx: &Fixture, me: &str, out: &mut Sheet) {
    out.put("term-table", "");
    let terms: Vec<&Term> = fx
        .exam_terms
        .iter()
        .filter(|t| fx.teaches(me, &t.subject_id))
        .collect();
    if terms.is_empty() {
        empty(out, "term-table");
    }
    for t in terms {
        let row = format!("term-row-{}", t.id);
        out.put(row.clone(), "");
        out.put(format!("{row}-subject"), subject_name(fx, &t.subject_id));
        out.put(format!("{row}-starts"), t.starts_at.clone());
        out.put(
            format!("{row}-seats"),
            format!("{}/{}", t.registered_student_ids.len(), t.max_participants),
        );
    }
    let owned: Vec<&Subject> = fx
        .subjects
        .iter()
        .filter(|s| fx.teaches(me, &s.id))
        .collect();
    out.put("create-term-form", "/lecturer/terms");
    out.put(
        "create-term-subject",
        owned.first().map(|s| s.id.clone()).unwrap_or_default(),
    );
    for s in &owned {
        out.put(format!("create-term-subject-{}", s.id), s.name.clone());
    }
    out.put("create-term-starts", "");
    out.put("create-term-capacity", "");
    out.put("create-term-submit", "Create");
}

/// `(term id, student id)` of every participant row, in display order.
pub fn participant_keys(fx: &Fixture, lecturer: &str) -> Vec<(String, String)> {
    let mut keys = Vec::new();
    for t in fx
        .exam_terms
        .iter()
        .filter(|t| fx.teaches(lecturer, &t.subject_id))
    {
        let mut students = t.registered_student_ids.clone();
        students.sort();
        keys.extend(students.into_iter().map(|s| (t.id.clone(), s)));
    }
    keys
}

fn participants(fx: &Fixture, me: &str, out: &mut Sheet) {
    out.put("participant-table", "");
    let keys = participant_keys(fx, me);
    if keys.is_empty() {
        empty(out, "participant-table");
    }
    for (term_id, student) in keys {
        let t = fx.term(&term_id).expect("listed from the fixture");
        let key = format!("{term_id}-{student}");
        let row = format!("participant-row-{key}");
        let grade = fx.grade(&student, &term_id);
        out.put(row.clone(), "");
        out.put(
            format!("{row}-student"),
            fx.user(&student)
                .map(|u| u.display_name.clone())
                .unwrap_or_default(),
        );
        out.put(format!("{row}-subject"), subject_name(fx, &t.subject_id));
        out.put(format!("{row}-starts"), t.starts_at.clone());
        out.put(
            format!("{row}-grade"),
            grade.map(|g| g.value.clone()).unwrap_or_else(|| "-".into()),
        );
        if grade.is_none() {
            out.put(format!("grade-form-{key}"), "/lecturer/grade");
            out.put(format!("grade-term-{key}"), term_id.clone());
            out.put(format!("grade-student-{key}"), student.clone());
            out.put(format!("grade-value-{key}"), "A");
            for v in ["A", "B", "C", "D", "E", "F"] {
                out.put(format!("grade-value-{key}-{v}"), v);
            }
            out.put(format!("grade-button-{key}"), "Save grade");
        }
    }
}

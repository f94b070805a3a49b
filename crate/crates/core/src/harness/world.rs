//! Reference model of the application's observable behaviour.
//!
//! The world tracks the dataset and the logged-in actor while a test runs
//! and predicts, for every request, where the browser ends up. Business
//! rules are re-derived here from the documented behaviour. The oracle then
//! turns a prediction into an expected page.

use chrono::NaiveDateTime;
use thiserror::Error;

use super::oracle::{
    self, audience, expected_error_page, expected_view, participant_keys, term_status, view_at,
    Enrollment, Expectation, Fixture, Grade, OracleError, Term,
};

const DATE_FORMAT: &str = "%Y-%m-%dT%H:%M";
const GRADES: [&str; 6] = ["A", "B", "C", "D", "E", "F"];

/// Where a request ends up after all redirects.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prediction {
    pub status: u16,
    /// `error` for error pages.
    pub view: String,
    /// Shown flash in `kind:code` form.
    pub flash: Option<String>,
    /// Raw flash parameter of the final URL, as the oracle wants it.
    pub flash_param: Option<String>,
    pub error_code: Option<String>,
    /// Final request target.
    pub url: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WorldError {
    #[error("selector {selector} matches nothing for {action}")]
    NoSelectorTarget { action: String, selector: String },
    #[error("link {0} has no known destination")]
    UnknownLink(String),
    #[error("unknown fixture {0}")]
    UnknownFixture(String),
    #[error("no actor is logged in")]
    NoActor,
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

enum Answer {
    Page {
        status: u16,
        view: String,
        error_code: Option<String>,
    },
    Redirect(String),
}

fn error_page(status: u16, code: &str) -> Answer {
    Answer::Page {
        status,
        view: "error".into(),
        error_code: Some(code.into()),
    }
}

fn go(path: &str, kind: &str, code: &str) -> Answer {
    Answer::Redirect(format!("{path}?flash={kind}:{code}"))
}

fn login_required() -> Answer {
    go("/login", "error", "login-required")
}

/// Trimmed, non-empty form value.
fn field(fields: &[(String, String)], name: &str) -> Option<String> {
    fields
        .iter()
        .find(|(k, _)| k == name)
        .map(|(_, v)| v.trim().to_string())
        .filter(|v| !v.is_empty())
}

fn raw_field(fields: &[(String, String)], name: &str) -> Option<String> {
    fields
        .iter()
        .find(|(k, _)| k == name)
        .map(|(_, v)| v.clone())
}

fn email_ok(email: &str) -> bool {
    if email.chars().any(char::is_whitespace) || email.matches('@').count() != 1 {
        return false;
    }
    let (local, domain) = email.split_once('@').expect("one @ present");
    !local.is_empty() && domain.contains('.') && !domain.starts_with('.') && !domain.ends_with('.')
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct World {
    pub fixture: Fixture,
    pub actor: Option<String>,
}

impl World {
    pub fn new(fixture: Fixture) -> World {
        World {
            fixture: fixture.normalized(),
            actor: None,
        }
    }

    pub fn shipped(fixture_id: &str) -> Option<World> {
        Fixture::shipped(fixture_id).map(World::new)
    }

    fn role(&self) -> Option<&str> {
        let id = self.actor.as_deref()?;
        self.fixture.user(id).map(|u| u.role.as_str())
    }

    /// Predicts the final page of `method target` with form `fields`,
    /// applying any state change along the way.
    pub fn request(
        &mut self,
        method: &str,
        target: &str,
        fields: &[(String, String)],
    ) -> Prediction {
        let mut url = target.to_string();
        let mut answer = self.answer(method, target, fields);
        let mut hops = 0;
        while let Answer::Redirect(location) = answer {
            hops += 1;
            assert!(hops < 10, "world redirect loop at {location}");
            url = location.clone();
            answer = self.answer("GET", &location, &[]);
        }
        let Answer::Page {
            status,
            view,
            error_code,
        } = answer
        else {
            unreachable!("loop exits on pages only")
        };
        let flash_param = url
            .split_once('?')
            .and_then(|(_, q)| {
                form_urlencoded::parse(q.as_bytes())
                    .find(|(k, _)| k == "flash")
                    .map(|(_, v)| v.into_owned())
            })
            .filter(|_| error_code.is_none());
        Prediction {
            status,
            flash: oracle::shown_flash(flash_param.as_deref()),
            flash_param,
            view,
            error_code,
            url,
        }
    }

    /// Expected page content for a prediction made on this world.
    pub fn expectation(&self, p: &Prediction) -> Result<Expectation, OracleError> {
        let actor = self.actor.as_deref();
        match &p.error_code {
            Some(code) => expected_error_page(&self.fixture, actor, code),
            None => expected_view(&self.fixture, &p.view, actor, p.flash_param.as_deref()),
        }
    }

    fn answer(&mut self, method: &str, target: &str, fields: &[(String, String)]) -> Answer {
        let path = target.split_once('?').map(|(p, _)| p).unwrap_or(target);
        if method == "GET" {
            if let Some(view) = view_at(path) {
                return self.show(view);
            }
        }
        if method == "POST" {
            match path {
                "/login" => return self.login(fields),
                "/logout" => {
                    self.actor = None;
                    return Answer::Redirect("/".into());
                }
                "/profile" => {
                    if self.actor.is_none() {
                        return login_required();
                    }
                    return self.update_email(fields);
                }
                "/student/enroll" | "/student/cancel" | "/student/register" => {
                    if let Some(denied) = self.require("student") {
                        return denied;
                    }
                    return match path {
                        "/student/enroll" => self.enroll(fields),
                        "/student/cancel" => self.cancel(fields),
                        _ => self.register(fields),
                    };
                }
                "/lecturer/terms" | "/lecturer/grade" => {
                    if let Some(denied) = self.require("lecturer") {
                        return denied;
                    }
                    return if path == "/lecturer/terms" {
                        self.create_term(fields)
                    } else {
                        self.grade(fields)
                    };
                }
                _ => {}
            }
        }
        let known = view_at(path).is_some()
            || [
                "/logout",
                "/student/enroll",
                "/student/cancel",
                "/student/register",
                "/lecturer/grade",
            ]
            .contains(&path);
        if known {
            error_page(405, "method-not-allowed")
        } else {
            error_page(404, "not-found")
        }
    }

    fn require(&self, role: &str) -> Option<Answer> {
        match self.role() {
            None => Some(login_required()),
            Some(r) if r != role => Some(error_page(403, "forbidden")),
            Some(_) => None,
        }
    }

    fn show(&self, view: &str) -> Answer {
        match audience(view).expect("routed views have an audience") {
            None => {}
            Some(_) if self.actor.is_none() => return login_required(),
            Some("") => {}
            Some(role) if self.role() != Some(role) => return error_page(403, "forbidden"),
            Some(_) => {}
        }
        Answer::Page {
            status: 200,
            view: view.to_string(),
            error_code: None,
        }
    }

    fn login(&mut self, fields: &[(String, String)]) -> Answer {
        let username = field(fields, "username").unwrap_or_default();
        let password = raw_field(fields, "password").unwrap_or_default();
        match self.fixture.check_password(&username, &password) {
            Some(user) => {
                self.actor = Some(user.id.clone());
                Answer::Redirect("/".into())
            }
            None => go("/login", "error", "invalid-credentials"),
        }
    }

    fn update_email(&mut self, fields: &[(String, String)]) -> Answer {
        let Some(email) = raw_field(fields, "email") else {
            return error_page(400, "bad-request");
        };
        let email = email.trim();
        if !email_ok(email) {
            return go("/profile", "error", "invalid-email");
        }
        let me = self.actor.clone().expect("checked by caller");
        if let Some(u) = self.fixture.users.iter_mut().find(|u| u.id == me) {
            u.email = email.to_string();
        }
        go("/profile", "ok", "profile-updated")
    }

    fn me(&self) -> String {
        self.actor.clone().unwrap_or_default()
    }

    fn enroll(&mut self, fields: &[(String, String)]) -> Answer {
        let Some(subject_id) = field(fields, "subject_id") else {
            return error_page(400, "bad-request");
        };
        let me = self.me();
        let code = match self.fixture.subject(&subject_id) {
            None => Some("unknown-subject"),
            Some(_) if self.fixture.enrolled(&me, &subject_id) => Some("already-enrolled"),
            Some(s) if self.fixture.enrolled_count(&s.id) as u32 >= s.capacity => {
                Some("capacity-exceeded")
            }
            Some(_) => None,
        };
        if let Some(code) = code {
            return go("/student/available", "error", code);
        }
        self.fixture.enrollments.push(Enrollment {
            student_id: me,
            subject_id,
        });
        self.fixture.enrollments.sort();
        go("/student/subjects", "ok", "enrolled")
    }

    fn cancel(&mut self, fields: &[(String, String)]) -> Answer {
        let Some(subject_id) = field(fields, "subject_id") else {
            return error_page(400, "bad-request");
        };
        let me = self.me();
        if !self.fixture.enrolled(&me, &subject_id) {
            return go("/student/subjects", "error", "not-enrolled");
        }
        let term_ids: Vec<String> = self
            .fixture
            .exam_terms
            .iter()
            .filter(|t| t.subject_id == subject_id)
            .map(|t| t.id.clone())
            .collect();
        if term_ids
            .iter()
            .any(|t| self.fixture.grade(&me, t).is_some())
        {
            return go("/student/subjects", "error", "has-grade");
        }
        self.fixture
            .enrollments
            .retain(|e| !(e.student_id == me && e.subject_id == subject_id));
        for t in self.fixture.exam_terms.iter_mut() {
            if term_ids.contains(&t.id) {
                t.registered_student_ids.retain(|s| *s != me);
            }
        }
        go("/student/subjects", "ok", "enrollment-cancelled")
    }

    fn register(&mut self, fields: &[(String, String)]) -> Answer {
        let Some(term_id) = field(fields, "term_id") else {
            return error_page(400, "bad-request");
        };
        let me = self.me();
        let code = match self.fixture.term(&term_id) {
            None => Some("unknown-term"),
            Some(_) if self.fixture.grade(&me, &term_id).is_some() => Some("already-graded"),
            Some(t) if t.registered_student_ids.contains(&me) => Some("already-registered"),
            Some(t) if !self.fixture.enrolled(&me, &t.subject_id) => {
                Some("not-enrolled-in-subject")
            }
            Some(t) if t.registered_student_ids.len() as u32 >= t.max_participants => {
                Some("term-full")
            }
            Some(_) => None,
        };
        if let Some(code) = code {
            return go("/student/terms", "error", code);
        }
        let term = self
            .fixture
            .exam_terms
            .iter_mut()
            .find(|t| t.id == term_id)
            .expect("checked above");
        term.registered_student_ids.push(me);
        go("/student/terms", "ok", "registered")
    }

    fn create_term(&mut self, fields: &[(String, String)]) -> Answer {
        let Some(subject_id) = field(fields, "subject_id") else {
            return error_page(400, "bad-request");
        };
        let starts_at = field(fields, "starts_at").unwrap_or_default();
        let capacity = field(fields, "max_participants").unwrap_or_default();
        match self.try_create_term(&subject_id, &starts_at, &capacity) {
            Ok(()) => go("/lecturer/terms", "ok", "term-created"),
            Err(code) => go("/lecturer/terms", "error", code),
        }
    }

    fn try_create_term(
        &mut self,
        subject_id: &str,
        starts_at: &str,
        capacity: &str,
    ) -> Result<(), &'static str> {
        let capacity: i64 = capacity.parse().map_err(|_| "invalid-capacity")?;
        let me = self.me();
        if self.fixture.subject(subject_id).is_none() {
            return Err("unknown-subject");
        }
        if !self.fixture.teaches(&me, subject_id) {
            return Err("not-owner");
        }
        if capacity < 1 {
            return Err("invalid-capacity");
        }
        let starts =
            NaiveDateTime::parse_from_str(starts_at, DATE_FORMAT).map_err(|_| "invalid-date")?;
        if starts <= chrono::Utc::now().naive_utc() {
            return Err("past-date");
        }
        let mut n = self.fixture.exam_terms.len() + 1;
        while self.fixture.term(&format!("t{n}")).is_some() {
            n += 1;
        }
        self.fixture.exam_terms.push(Term {
            id: format!("t{n}"),
            subject_id: subject_id.to_string(),
            starts_at: starts.format(DATE_FORMAT).to_string(),
            max_participants: capacity.min(u32::MAX as i64) as u32,
            registered_student_ids: Vec::new(),
        });
        self.fixture.exam_terms.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(())
    }

    fn grade(&mut self, fields: &[(String, String)]) -> Answer {
        let (Some(term_id), Some(student_id), Some(value)) = (
            field(fields, "term_id"),
            field(fields, "student_id"),
            field(fields, "value"),
        ) else {
            return error_page(400, "bad-request");
        };
        if !GRADES.contains(&value.as_str()) {
            return error_page(400, "bad-request");
        }
        let me = self.me();
        let code = match self.fixture.term(&term_id) {
            None => Some("unknown-term"),
            Some(t) if !self.fixture.teaches(&me, &t.subject_id) => Some("not-owner"),
            Some(t) if !t.registered_student_ids.contains(&student_id) => {
                Some("not-registered-on-term")
            }
            Some(_) if self.fixture.grade(&student_id, &term_id).is_some() => {
                Some("already-graded")
            }
            Some(_) => None,
        };
        if let Some(code) = code {
            return go("/lecturer/participants", "error", code);
        }
        self.fixture.grades.push(Grade {
            student_id,
            exam_term_id: term_id,
            value,
            graded_by: me,
        });
        self.fixture.grades.sort_by(|a, b| {
            (&a.student_id, &a.exam_term_id).cmp(&(&b.student_id, &b.exam_term_id))
        });
        go("/lecturer/participants", "ok", "grade-saved")
    }

    fn selector_miss(action: &str, selector: &str) -> WorldError {
        WorldError::NoSelectorTarget {
            action: action.into(),
            selector: selector.into(),
        }
    }

    /// Subject for an enroll step: `first-open`, `first-full` or an id.
    pub fn enroll_target(&self, selector: &str) -> Result<String, WorldError> {
        let me = self.actor.as_deref().ok_or(WorldError::NoActor)?;
        let full = |id: &str| {
            let s = self.fixture.subject(id).expect("fixture subject");
            self.fixture.enrolled_count(id) as u32 >= s.capacity
        };
        let candidates = oracle::available_subject_ids(&self.fixture, me);
        let pick = match selector {
            "first-open" => candidates.into_iter().find(|id| !full(id)),
            "first-full" => candidates.into_iter().find(|id| full(id)),
            literal => return Ok(literal.to_string()),
        };
        pick.ok_or_else(|| Self::selector_miss("enroll", selector))
    }

    /// Subject for a cancel step: `first-cancellable`, `first-graded` or an id.
    pub fn cancel_target(&self, selector: &str) -> Result<String, WorldError> {
        let me = self.actor.as_deref().ok_or(WorldError::NoActor)?;
        let graded = |subject: &str| {
            self.fixture
                .exam_terms
                .iter()
                .any(|t| t.subject_id == subject && self.fixture.grade(me, &t.id).is_some())
        };
        let mine = self
            .fixture
            .subjects
            .iter()
            .map(|s| s.id.clone())
            .filter(|id| self.fixture.enrolled(me, id));
        let pick = match selector {
            "first-cancellable" => mine.into_iter().find(|id| !graded(id)),
            "first-graded" => mine.into_iter().find(|id| graded(id)),
            literal => return Ok(literal.to_string()),
        };
        pick.ok_or_else(|| Self::selector_miss("cancel", selector))
    }

    /// Term for a register step: `first-open`, `first-full` or an id.
    pub fn register_target(&self, selector: &str) -> Result<String, WorldError> {
        let me = self.actor.as_deref().ok_or(WorldError::NoActor)?;
        let wanted = match selector {
            "first-open" => "open",
            "first-full" => "full",
            literal => return Ok(literal.to_string()),
        };
        self.fixture
            .exam_terms
            .iter()
            .filter(|t| self.fixture.enrolled(me, &t.subject_id))
            .find(|t| term_status(&self.fixture, me, t) == wanted)
            .map(|t| t.id.clone())
            .ok_or_else(|| Self::selector_miss("register", selector))
    }

    /// Subject for a create-term step: `first-owned` or an id.
    pub fn owned_subject_target(&self, selector: &str) -> Result<String, WorldError> {
        let me = self.actor.as_deref().ok_or(WorldError::NoActor)?;
        if selector != "first-owned" {
            return Ok(selector.to_string());
        }
        self.fixture
            .subjects
            .iter()
            .find(|s| self.fixture.teaches(me, &s.id))
            .map(|s| s.id.clone())
            .ok_or_else(|| Self::selector_miss("create-term", selector))
    }

    /// `(term, student)` for a grade step: `first-ungraded` or `term/student`.
    pub fn grade_target(&self, selector: &str) -> Result<(String, String), WorldError> {
        let me = self.actor.as_deref().ok_or(WorldError::NoActor)?;
        if selector == "first-ungraded" {
            return participant_keys(&self.fixture, me)
                .into_iter()
                .find(|(t, s)| self.fixture.grade(s, t).is_none())
                .ok_or_else(|| Self::selector_miss("grade", selector));
        }
        selector
            .split_once('/')
            .map(|(t, s)| (t.to_string(), s.to_string()))
            .ok_or_else(|| Self::selector_miss("grade", selector))
    }

    /// Destination of a navigation link, known from the page contract.
    pub fn link_target(&self, element: &str) -> Result<String, WorldError> {
        element
            .strip_prefix("nav-")
            .and_then(oracle::route)
            .map(str::to_string)
            .ok_or_else(|| WorldError::UnknownLink(element.to_string()))
    }
}

//! Server-side rendering of every registered view.
//!
//! Each page is a well-formed XHTML document whose `<body>` carries the
//! view id in `data-view`. Element ids are stable and documented in the
//! README; page objects in the harness rely on them.

use std::collections::BTreeMap;

use thiserror::Error;

use super::html::{ElementKind, HtmlWriter};
use crate::core::model::{GradeValue, Role};
use crate::core::views::{self, TermStatus, ViewData};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Page {
    pub view_id: String,
    pub html: String,
    /// element id -> kind, in id order
    pub element_index: BTreeMap<String, ElementKind>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RenderError {
    #[error("unknown view {0}")]
    UnknownView(String),
    #[error("view {requested} rendered with data for {actual}")]
    ViewMismatch { requested: String, actual: String },
    #[error("duplicate element id {0}")]
    DuplicateElementId(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlashKind {
    Ok,
    Error,
}

impl FlashKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FlashKind::Ok => "ok",
            FlashKind::Error => "error",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Flash {
    pub kind: FlashKind,
    pub code: String,
}

impl Flash {
    /// Parses the `kind:code` form used in the `flash` query parameter.
    pub fn parse(raw: &str) -> Option<Flash> {
        let (kind, code) = raw.split_once(':')?;
        let kind = match kind {
            "ok" => FlashKind::Ok,
            "error" => FlashKind::Error,
            _ => return None,
        };
        let valid = !code.is_empty()
            && code
                .chars()
                .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '-');
        valid.then(|| Flash {
            kind,
            code: code.to_string(),
        })
    }

    pub fn encode(&self) -> String {
        format!("{}:{}", self.kind.as_str(), self.code)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChromeUser {
    pub user_id: String,
    pub display_name: String,
    pub role: Role,
}

/// Everything around the view body: navigation and the flash message.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Chrome {
    pub user: Option<ChromeUser>,
    pub flash: Option<Flash>,
}

pub fn title_of(view_id: &str) -> Option<&'static str> {
    Some(match view_id {
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
        "error" => "Error",
        _ => return None,
    })
}

/// GET route serving each view.
pub fn route_of(view_id: &str) -> Option<&'static str> {
    Some(match view_id {
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

pub fn view_of_route(path: &str) -> Option<&'static str> {
    views::VIEWS
        .iter()
        .map(|(id, _)| *id)
        .find(|id| route_of(id) == Some(path))
}

pub fn render_page(view_id: &str, data: &ViewData, chrome: &Chrome) -> Result<Page, RenderError> {
    if views::audience(view_id).is_none() {
        return Err(RenderError::UnknownView(view_id.to_string()));
    }
    if data.view_id() != view_id {
        return Err(RenderError::ViewMismatch {
            requested: view_id.to_string(),
            actual: data.view_id().to_string(),
        });
    }
    let mut w = HtmlWriter::new();
    begin(&mut w, view_id, chrome);
    body(&mut w, data);
    finish(w, view_id)
}

/// Error page with a machine-readable `error-code` element.
pub fn render_error(code: &str, message: &str, chrome: &Chrome) -> Page {
    let mut w = HtmlWriter::new();
    begin(&mut w, "error", chrome);
    w.leaf("p", Some("error-code"), &[], code);
    w.leaf("p", Some("error-message"), &[], message);
    finish(w, "error").expect("error page ids are unique")
}

fn begin(w: &mut HtmlWriter, view_id: &str, chrome: &Chrome) {
    let title = title_of(view_id).unwrap_or("Page");
    w.raw("<!DOCTYPE html>\n");
    w.open(
        "html",
        None,
        &[("xmlns", "http://www.w3.org/1999/xhtml"), ("lang", "en")],
    );
    w.open("head", None, &[]);
    w.void("meta", None, &[("charset", "utf-8")]);
    w.leaf("title", None, &[], &format!("UIS - {title}"));
    w.close();
    w.newline();
    w.open("body", None, &[("data-view", view_id)]);
    w.newline();
    nav(w, chrome);
    w.newline();
    w.open("main", None, &[]);
    if let Some(flash) = &chrome.flash {
        let class = match flash.kind {
            FlashKind::Ok => "flash-ok",
            FlashKind::Error => "flash-error",
        };
        w.leaf("p", Some("flash-message"), &[("class", class)], &flash.code);
    }
    w.leaf("h1", Some(&format!("{view_id}-title")), &[], title);
    w.newline();
}

fn finish(mut w: HtmlWriter, view_id: &str) -> Result<Page, RenderError> {
    w.newline();
    let (html, element_index) = w.finish().map_err(RenderError::DuplicateElementId)?;
    Ok(Page {
        view_id: view_id.to_string(),
        html,
        element_index,
    })
}

fn nav(w: &mut HtmlWriter, chrome: &Chrome) {
    let link = |w: &mut HtmlWriter, view: &str, text: &str| {
        w.open("li", None, &[]);
        w.leaf(
            "a",
            Some(&format!("nav-{view}")),
            &[("href", route_of(view).unwrap_or("/"))],
            text,
        );
        w.close();
    };
    w.open("nav", None, &[]);
    w.open("ul", None, &[]);
    link(w, "home", "Home");
    link(w, "subject-list", "Subjects");
    link(w, "lecturer-list", "Lecturers");
    match &chrome.user {
        None => link(w, "login", "Log in"),
        Some(user) => {
            match user.role {
                Role::Student => {
                    link(w, "my-subjects", "My subjects");
                    link(w, "available-subjects", "Available subjects");
                    link(w, "my-terms", "My exam terms");
                    link(w, "my-grades", "My grades");
                }
                Role::Lecturer => {
                    link(w, "lecturer-subjects", "Taught subjects");
                    link(w, "lecturer-terms", "Exam terms");
                    link(w, "term-participants", "Participants");
                }
            }
            link(w, "profile", "Profile");
        }
    }
    w.close();
    if let Some(user) = &chrome.user {
        w.leaf("span", Some("nav-user"), &[], &user.display_name);
        w.open(
            "form",
            Some("logout-form"),
            &[("method", "post"), ("action", "/logout")],
        );
        w.leaf(
            "button",
            Some("logout-button"),
            &[("type", "submit")],
            "Log out",
        );
        w.close();
    }
    w.close();
}

fn empty_row(w: &mut HtmlWriter, table: &str, columns: usize) {
    w.open("tr", None, &[]);
    let span = columns.to_string();
    w.leaf(
        "td",
        Some(&format!("{table}-empty")),
        &[("colspan", &span)],
        "No records.",
    );
    w.close();
}

fn table_head(w: &mut HtmlWriter, table: &str, headers: &[&str]) {
    w.open("table", Some(table), &[]);
    w.open("thead", None, &[]);
    w.open("tr", None, &[]);
    for h in headers {
        w.leaf("th", None, &[], h);
    }
    w.close();
    w.close();
    w.open("tbody", None, &[]);
}

fn cell(w: &mut HtmlWriter, id: &str, text: &str) {
    w.leaf("td", Some(id), &[], text);
}

fn hidden(w: &mut HtmlWriter, id: &str, name: &str, value: &str) {
    w.void(
        "input",
        Some(id),
        &[("type", "hidden"), ("name", name), ("value", value)],
    );
}

/// One-button POST form used by enroll, cancel and register actions.
fn action_form(
    w: &mut HtmlWriter,
    prefix: &str,
    key: &str,
    action: &str,
    field: &str,
    label: &str,
) {
    w.open("td", None, &[]);
    w.open(
        "form",
        Some(&format!("{prefix}-form-{key}")),
        &[("method", "post"), ("action", action)],
    );
    let field_id = match prefix {
        "register" => format!("{prefix}-term-{key}"),
        _ => format!("{prefix}-subject-{key}"),
    };
    hidden(w, &field_id, field, key);
    w.leaf(
        "button",
        Some(&format!("{prefix}-button-{key}")),
        &[("type", "submit")],
        label,
    );
    w.close();
    w.close();
}

fn body(w: &mut HtmlWriter, data: &ViewData) {
    match data {
        ViewData::Home { display_name } => {
            let text = match display_name {
                Some(name) => format!("Welcome, {name}."),
                None => "Welcome to the university information system.".to_string(),
            };
            w.leaf("p", Some("home-welcome"), &[], &text);
        }
        ViewData::Login => {
            w.open(
                "form",
                Some("login-form"),
                &[("method", "post"), ("action", "/login")],
            );
            w.leaf("label", None, &[("for", "login-username")], "Username");
            w.void(
                "input",
                Some("login-username"),
                &[("type", "text"), ("name", "username"), ("value", "")],
            );
            w.leaf("label", None, &[("for", "login-password")], "Password");
            w.void(
                "input",
                Some("login-password"),
                &[("type", "password"), ("name", "password"), ("value", "")],
            );
            w.leaf(
                "button",
                Some("login-submit"),
                &[("type", "submit")],
                "Log in",
            );
            w.close();
        }
        ViewData::SubjectList { rows } => {
            table_head(
                w,
                "subject-table",
                &["Subject", "Credits", "Lecturers", "Seats"],
            );
            if rows.is_empty() {
                empty_row(w, "subject-table", 4);
            }
            for row in rows {
                let p = format!("subject-row-{}", row.id);
                w.open("tr", Some(&p), &[]);
                cell(w, &format!("{p}-name"), &row.name);
                cell(w, &format!("{p}-credits"), &row.credits.to_string());
                cell(w, &format!("{p}-lecturers"), &row.lecturer_names.join(", "));
                cell(
                    w,
                    &format!("{p}-seats"),
                    &format!("{}/{}", row.enrolled, row.capacity),
                );
                w.close();
            }
            w.close();
            w.close();
        }
        ViewData::LecturerList { rows } => {
            table_head(w, "lecturer-table", &["Lecturer", "Email", "Subjects"]);
            if rows.is_empty() {
                empty_row(w, "lecturer-table", 3);
            }
            for row in rows {
                let p = format!("lecturer-row-{}", row.id);
                w.open("tr", Some(&p), &[]);
                cell(w, &format!("{p}-name"), &row.name);
                cell(w, &format!("{p}-email"), &row.email);
                cell(w, &format!("{p}-subjects"), &row.subject_names.join(", "));
                w.close();
            }
            w.close();
            w.close();
        }
        ViewData::Profile(p) => {
            w.open("dl", None, &[]);
            for (label, id, value) in [
                ("Username", "profile-username", p.username.as_str()),
                ("Name", "profile-name", p.name.as_str()),
                ("Role", "profile-role", p.role.as_str()),
                ("Email", "profile-email", p.email.as_str()),
            ] {
                w.leaf("dt", None, &[], label);
                w.leaf("dd", Some(id), &[], value);
            }
            w.close();
            w.open(
                "form",
                Some("profile-form"),
                &[("method", "post"), ("action", "/profile")],
            );
            w.leaf(
                "label",
                None,
                &[("for", "profile-email-input")],
                "New email",
            );
            w.void(
                "input",
                Some("profile-email-input"),
                &[("type", "text"), ("name", "email"), ("value", &p.email)],
            );
            w.leaf(
                "button",
                Some("profile-submit"),
                &[("type", "submit")],
                "Save",
            );
            w.close();
        }
        ViewData::MySubjects {
            rows,
            total_credits,
        } => {
            table_head(w, "enrollment-table", &["Subject", "Credits", ""]);
            if rows.is_empty() {
                empty_row(w, "enrollment-table", 3);
            }
            for row in rows {
                let p = format!("enrollment-row-{}", row.subject_id);
                w.open("tr", Some(&p), &[]);
                cell(w, &format!("{p}-name"), &row.name);
                cell(w, &format!("{p}-credits"), &row.credits.to_string());
                action_form(
                    w,
                    "cancel",
                    &row.subject_id,
                    "/student/cancel",
                    "subject_id",
                    "Cancel",
                );
                w.close();
            }
            w.close();
            w.close();
            w.open("p", None, &[]);
            w.text("Total credits: ");
            w.leaf(
                "span",
                Some("my-subjects-total-credits"),
                &[],
                &total_credits.to_string(),
            );
            w.close();
        }
        ViewData::AvailableSubjects { rows } => {
            table_head(w, "available-table", &["Subject", "Credits", "Seats", ""]);
            if rows.is_empty() {
                empty_row(w, "available-table", 4);
            }
            for row in rows {
                let p = format!("subject-row-{}", row.id);
                w.open("tr", Some(&p), &[]);
                cell(w, &format!("{p}-name"), &row.name);
                cell(w, &format!("{p}-credits"), &row.credits.to_string());
                cell(
                    w,
                    &format!("{p}-seats"),
                    &format!("{}/{}", row.enrolled, row.capacity),
                );
                action_form(
                    w,
                    "enroll",
                    &row.id,
                    "/student/enroll",
                    "subject_id",
                    "Enroll",
                );
                w.close();
            }
            w.close();
            w.close();
        }
        ViewData::MyTerms { rows } => {
            table_head(
                w,
                "term-table",
                &["Subject", "Starts", "Seats", "Status", ""],
            );
            if rows.is_empty() {
                empty_row(w, "term-table", 5);
            }
            for row in rows {
                let p = format!("term-row-{}", row.term_id);
                w.open("tr", Some(&p), &[]);
                cell(w, &format!("{p}-subject"), &row.subject_name);
                cell(w, &format!("{p}-starts"), &row.starts_at);
                // @anchor: my-terms-seats
                let seats = format!("{}/{}", row.registered, row.max_participants);
                cell(w, &format!("{p}-seats"), &seats);
                cell(w, &format!("{p}-status"), row.status.as_str());
                if row.status == TermStatus::Open {
                    action_form(
                        w,
                        "register",
                        &row.term_id,
                        "/student/register",
                        "term_id",
                        "Register",
                    );
                } else {
                    w.leaf("td", None, &[], "");
                }
                w.close();
            }
            w.close();
            w.close();
        }
        ViewData::MyGrades { rows } => {
            table_head(w, "grade-table", &["Subject", "Date", "Grade", "Lecturer"]);
            if rows.is_empty() {
                empty_row(w, "grade-table", 4);
            }
            for row in rows {
                let p = format!("grade-row-{}", row.term_id);
                w.open("tr", Some(&p), &[]);
                cell(w, &format!("{p}-subject"), &row.subject_name);
                cell(w, &format!("{p}-date"), &row.starts_at);
                cell(w, &format!("{p}-value"), row.value.as_str());
                cell(w, &format!("{p}-lecturer"), &row.lecturer_name);
                w.close();
            }
            w.close();
            w.close();
        }
        ViewData::LecturerSubjects { rows } => {
            table_head(
                w,
                "taught-table",
                &["Subject", "Credits", "Seats", "Exam terms"],
            );
            if rows.is_empty() {
                empty_row(w, "taught-table", 4);
            }
            for row in rows {
                let p = format!("subject-row-{}", row.id);
                w.open("tr", Some(&p), &[]);
                cell(w, &format!("{p}-name"), &row.name);
                cell(w, &format!("{p}-credits"), &row.credits.to_string());
                cell(
                    w,
                    &format!("{p}-seats"),
                    &format!("{}/{}", row.enrolled, row.capacity),
                );
                cell(w, &format!("{p}-terms"), &row.term_count.to_string());
                w.close();
            }
            w.close();
            w.close();
        }
        ViewData::LecturerTerms { rows, subjects } => {
            table_head(w, "term-table", &["Subject", "Starts", "Seats"]);
            if rows.is_empty() {
                empty_row(w, "term-table", 3);
            }
            for row in rows {
                let p = format!("term-row-{}", row.term_id);
                w.open("tr", Some(&p), &[]);
                cell(w, &format!("{p}-subject"), &row.subject_name);
                cell(w, &format!("{p}-starts"), &row.starts_at);
                cell(
                    w,
                    &format!("{p}-seats"),
                    &format!("{}/{}", row.registered, row.max_participants),
                );
                w.close();
            }
            w.close();
            w.close();
            create_term_form(w, subjects);
        }
        ViewData::TermParticipants { rows } => {
            table_head(
                w,
                "participant-table",
                &["Student", "Subject", "Starts", "Grade", ""],
            );
            if rows.is_empty() {
                empty_row(w, "participant-table", 5);
            }
            for row in rows {
                let key = format!("{}-{}", row.term_id, row.student_id);
                let p = format!("participant-row-{key}");
                w.open("tr", Some(&p), &[]);
                cell(w, &format!("{p}-student"), &row.student_name);
                cell(w, &format!("{p}-subject"), &row.subject_name);
                cell(w, &format!("{p}-starts"), &row.starts_at);
                cell(
                    w,
                    &format!("{p}-grade"),
                    row.grade.map(|g| g.as_str()).unwrap_or("-"),
                );
                if row.grade.is_none() {
                    grade_form(w, &key, &row.term_id, &row.student_id);
                } else {
                    w.leaf("td", None, &[], "");
                }
                w.close();
            }
            w.close();
            w.close();
        }
    }
}

fn create_term_form(w: &mut HtmlWriter, subjects: &[(String, String)]) {
    w.leaf("h2", None, &[], "New exam term");
    w.open(
        "form",
        Some("create-term-form"),
        &[("method", "post"), ("action", "/lecturer/terms")],
    );
    w.leaf("label", None, &[("for", "create-term-subject")], "Subject");
    w.open(
        "select",
        Some("create-term-subject"),
        &[("name", "subject_id")],
    );
    for (id, name) in subjects {
        w.leaf(
            "option",
            Some(&format!("create-term-subject-{id}")),
            &[("value", id)],
            name,
        );
    }
    w.close();
    w.leaf("label", None, &[("for", "create-term-starts")], "Starts");
    w.void(
        "input",
        Some("create-term-starts"),
        &[
            ("type", "text"),
            ("name", "starts_at"),
            ("placeholder", "YYYY-MM-DDTHH:MM"),
            ("value", ""),
        ],
    );
    w.leaf(
        "label",
        None,
        &[("for", "create-term-capacity")],
        "Capacity",
    );
    w.void(
        "input",
        Some("create-term-capacity"),
        &[
            ("type", "number"),
            ("name", "max_participants"),
            ("value", ""),
        ],
    );
    w.leaf(
        "button",
        Some("create-term-submit"),
        &[("type", "submit")],
        "Create",
    );
    w.close();
}

fn grade_form(w: &mut HtmlWriter, key: &str, term_id: &str, student_id: &str) {
    w.open("td", None, &[]);
    w.open(
        "form",
        Some(&format!("grade-form-{key}")),
        &[("method", "post"), ("action", "/lecturer/grade")],
    );
    hidden(w, &format!("grade-term-{key}"), "term_id", term_id);
    hidden(w, &format!("grade-student-{key}"), "student_id", student_id);
    let select = format!("grade-value-{key}");
    w.open("select", Some(&select), &[("name", "value")]);
    for g in GradeValue::ALL {
        w.leaf(
            "option",
            Some(&format!("{select}-{g}")),
            &[("value", g.as_str())],
            g.as_str(),
        );
    }
    w.close();
    w.leaf(
        "button",
        Some(&format!("grade-button-{key}")),
        &[("type", "submit")],
        "Save grade",
    );
    w.close();
    w.close();
}

//! HTTP layer: routing, sessions, flash messages and testbed endpoints.
//!
//! [`App::handle`] is independent of any server library, which lets the
//! harness drive the application in-process. [`server`] adapts it to a
//! real socket.

pub mod html;
pub mod pages;
pub mod server;

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Mutex, RwLock};

use crate::activation::{self, RequestContext};
use crate::activity::{ActivityLog, ActivityLogRecord, Level};
use crate::core::fixture;
use crate::core::model::{FixtureDataset, GradeValue, Role};
use crate::core::views::{self, Audience};
use crate::core::{CoreError, CoreResult, Session, Store};
use pages::{Chrome, ChromeUser, Flash, FlashKind};

pub const SESSION_COOKIE: &str = "uis-session";
pub const RUN_ID_HEADER: &str = "x-run-id";

/// Manifest of the seeded defects in this build. The baseline ships an
/// empty one; the seeder rewrites the file in every clone.
pub const DEFECT_MANIFEST: &str = include_str!("../../testbed-manifest.json");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Request {
    pub method: String,
    pub path: String,
    pub query: Vec<(String, String)>,
    /// Header names are stored lowercase.
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
}

impl Request {
    /// Builds a request from a method and a target such as `/a?b=c`.
    pub fn new(method: &str, target: &str) -> Request {
        let (path, query) = target.split_once('?').unwrap_or((target, ""));
        Request {
            method: method.to_ascii_uppercase(),
            path: path.to_string(),
            query: parse_urlencoded(query.as_bytes()),
            headers: Vec::new(),
            body: Vec::new(),
        }
    }

    pub fn get(target: &str) -> Request {
        Request::new("GET", target)
    }

    pub fn post_form(target: &str, fields: &[(&str, &str)]) -> Request {
        let mut req = Request::new("POST", target);
        req.body = form_urlencoded::Serializer::new(String::new())
            .extend_pairs(fields)
            .finish()
            .into_bytes();
        req.with_header("content-type", "application/x-www-form-urlencoded")
    }

    pub fn with_header(mut self, name: &str, value: &str) -> Request {
        self.headers
            .push((name.to_ascii_lowercase(), value.to_string()));
        self
    }

    pub fn header(&self, name: &str) -> Option<&str> {
        let name = name.to_ascii_lowercase();
        self.headers
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, v)| v.as_str())
    }

    pub fn cookie(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .filter(|(n, _)| n == "cookie")
            .flat_map(|(_, v)| v.split(';'))
            .filter_map(|pair| pair.trim().split_once('='))
            .find(|(k, _)| *k == name)
            .map(|(_, v)| v)
    }

    pub fn query_param(&self, name: &str) -> Option<&str> {
        self.query
            .iter()
            .find(|(k, _)| k == name)
            .map(|(_, v)| v.as_str())
    }

    pub fn form(&self) -> Vec<(String, String)> {
        parse_urlencoded(&self.body)
    }
}

fn parse_urlencoded(input: &[u8]) -> Vec<(String, String)> {
    form_urlencoded::parse(input).into_owned().collect()
}

fn field(form: &[(String, String)], name: &str) -> Option<String> {
    form.iter()
        .find(|(k, _)| k == name)
        .map(|(_, v)| v.trim().to_string())
        .filter(|v| !v.is_empty())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Response {
    pub status: u16,
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
}

impl Response {
    fn new(status: u16, content_type: &str, body: impl Into<Vec<u8>>) -> Response {
        Response {
            status,
            headers: vec![("Content-Type".into(), content_type.into())],
            body: body.into(),
        }
    }

    fn html(status: u16, page: pages::Page) -> Response {
        Response::new(status, "text/html; charset=utf-8", page.html)
    }

    fn json(status: u16, body: String) -> Response {
        Response::new(status, "application/json", body)
    }

    fn see_other(location: &str) -> Response {
        Response {
            status: 303,
            headers: vec![("Location".into(), location.into())],
            body: Vec::new(),
        }
    }

    fn with_header(mut self, name: &str, value: &str) -> Response {
        self.headers.push((name.into(), value.into()));
        self
    }

    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(n, _)| n.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }

    pub fn location(&self) -> Option<&str> {
        self.header("location")
    }

    pub fn text(&self) -> String {
        String::from_utf8_lossy(&self.body).into_owned()
    }
}

fn redirect_with(path: &str, kind: FlashKind, code: &str) -> Response {
    let flash = Flash {
        kind,
        code: code.to_string(),
    };
    Response::see_other(&format!("{path}?flash={}", flash.encode()))
}

/// Outcome of a state-changing action, before it becomes a response.
struct Outcome {
    event: &'static str,
    result: CoreResult<()>,
    detail: Vec<(&'static str, String)>,
    response: Response,
}

pub struct App {
    store: Store,
    initial_fixture: String,
    sessions: Mutex<HashMap<String, Session>>,
    next_session: AtomicU64,
    /// Requests hold it shared; a reset holds it exclusively, so a reset
    /// waits for in-flight requests and blocks new ones until it is done.
    gate: RwLock<()>,
    log: ActivityLog,
}

impl App {
    pub fn new(dataset: &FixtureDataset, log: ActivityLog) -> CoreResult<App> {
        Ok(App {
            store: Store::from_fixture(dataset)?,
            initial_fixture: dataset.fixture_id.clone(),
            sessions: Mutex::new(HashMap::new()),
            next_session: AtomicU64::new(1),
            gate: RwLock::new(()),
            log,
        })
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn log(&self) -> &ActivityLog {
        &self.log
    }

    pub fn handle(&self, req: &Request) -> Response {
        let run_id = req
            .header(RUN_ID_HEADER)
            .map(str::trim)
            .filter(|r| !r.is_empty())
            .map(str::to_string);
        let _ctx = activation::enter(RequestContext {
            run_id: run_id.clone(),
            path: req.path.clone(),
        });
        let (response, actor) = if req.path == "/testbed/reset" {
            let _exclusive = self.gate.write().unwrap_or_else(|p| p.into_inner());
            (self.route(req, &run_id), String::new())
        } else {
            let _shared = self.gate.read().unwrap_or_else(|p| p.into_inner());
            let actor = self.session(req).map(|s| s.user_id).unwrap_or_default();
            (self.route(req, &run_id), actor)
        };
        let record = ActivityLogRecord::new(Level::Info, &req.path, &actor, "request")
            .with("method", req.method.clone())
            .with("status", response.status.to_string());
        self.emit(record, &run_id);
        response
    }

    fn emit(&self, mut record: ActivityLogRecord, run_id: &Option<String>) {
        record.run_id = run_id.clone();
        if let Err(e) = self.log.append(&record) {
            eprintln!("activity log: {e}");
        }
    }

    fn session(&self, req: &Request) -> Option<Session> {
        let token = req.cookie(SESSION_COOKIE)?;
        let session = self.sessions.lock().ok()?.get(token).cloned()?;
        // sessions of users that vanished after a reset are void
        self.store.user(&session.user_id).map(|_| session)
    }

    fn chrome(&self, session: Option<&Session>, flash: Option<Flash>) -> Chrome {
        let user = session.and_then(|s| {
            self.store.user(&s.user_id).map(|u| ChromeUser {
                user_id: u.id,
                display_name: u.display_name,
                role: u.role,
            })
        });
        Chrome { user, flash }
    }

    fn error_page(
        &self,
        status: u16,
        code: &str,
        message: &str,
        session: Option<&Session>,
    ) -> Response {
        Response::html(
            status,
            pages::render_error(code, message, &self.chrome(session, None)),
        )
    }

    fn route(&self, req: &Request, run_id: &Option<String>) -> Response {
        let session = self.session(req);
        let method = req.method.as_str();
        let path = req.path.as_str();
        if path.starts_with("/testbed/") {
            return self.testbed(req, run_id);
        }
        if let Some(view) = pages::view_of_route(path) {
            if method == "GET" {
                return self.view(req, view, session.as_ref());
            }
        }
        let outcome = match (method, path) {
            ("POST", "/login") => return self.login(req, run_id),
            ("POST", "/logout") => return self.logout(req, session.as_ref(), run_id),
            ("POST", "/profile") => match session.as_ref() {
                Some(s) => self.update_profile(req, s),
                None => return login_required(),
            },
            ("POST", "/student/enroll")
            | ("POST", "/student/cancel")
            | ("POST", "/student/register") => {
                match self.require(session.as_ref(), Role::Student) {
                    Err(response) => return response,
                    Ok(s) => match path {
                        "/student/enroll" => self.enroll(req, s),
                        "/student/cancel" => self.cancel(req, s),
                        _ => self.register(req, s),
                    },
                }
            }
            ("POST", "/lecturer/terms") | ("POST", "/lecturer/grade") => {
                match self.require(session.as_ref(), Role::Lecturer) {
                    Err(response) => return response,
                    Ok(s) if path == "/lecturer/terms" => self.create_term(req, s),
                    Ok(s) => self.grade(req, s),
                }
            }
            _ => {
                let known = pages::view_of_route(path).is_some()
                    || matches!(path, "/logout" | "/student/enroll" | "/student/cancel")
                    || matches!(path, "/student/register" | "/lecturer/grade");
                return if known {
                    self.error_page(
                        405,
                        "method-not-allowed",
                        "Method not allowed.",
                        session.as_ref(),
                    )
                } else {
                    self.error_page(404, "not-found", "No such page.", session.as_ref())
                };
            }
        };
        let Some(outcome) = outcome else {
            return self.error_page(
                400,
                "bad-request",
                "Missing or malformed form field.",
                session.as_ref(),
            );
        };
        let actor = session.as_ref().map(|s| s.user_id.as_str()).unwrap_or("");
        let (level, outcome_name) = match &outcome.result {
            Ok(()) => (Level::Info, "ok"),
            Err(_) => (Level::Warn, "rejected"),
        };
        let mut record =
            ActivityLogRecord::new(level, path, actor, outcome.event).with("outcome", outcome_name);
        if let Err(e) = &outcome.result {
            record = record.with("code", e.code());
        }
        for (k, v) in outcome.detail {
            record = record.with(k, v);
        }
        self.emit(record, run_id);
        outcome.response
    }

    fn require<'s>(
        &self,
        session: Option<&'s Session>,
        role: Role,
    ) -> Result<&'s Session, Response> {
        match session {
            None => Err(login_required()),
            Some(s) if s.role != role => Err(self.error_page(
                403,
                "forbidden",
                "This page is not available to you.",
                Some(s),
            )),
            Some(s) => Ok(s),
        }
    }

    fn view(&self, req: &Request, view: &str, session: Option<&Session>) -> Response {
        match views::audience(view) {
            Some(Audience::LoggedIn) | Some(Audience::Only(_)) if session.is_none() => {
                return login_required()
            }
            Some(Audience::Only(role)) if session.map(|s| s.role) != Some(role) => {
                return self.error_page(
                    403,
                    "forbidden",
                    "This page is not available to you.",
                    session,
                )
            }
            _ => {}
        }
        let data = match self.store.query_view(session, view) {
            Ok(data) => data,
            Err(CoreError::Forbidden) => {
                return self.error_page(
                    403,
                    "forbidden",
                    "This page is not available to you.",
                    session,
                )
            }
            Err(e) => return self.error_page(500, e.code(), &e.to_string(), session),
        };
        let flash = req.query_param("flash").and_then(Flash::parse);
        match pages::render_page(view, &data, &self.chrome(session, flash)) {
            Ok(page) => Response::html(200, page),
            Err(e) => self.error_page(500, "render-error", &e.to_string(), session),
        }
    }

    fn new_session(&self, session: Session) -> String {
        let token = format!("sess-{}", self.next_session.fetch_add(1, Ordering::Relaxed));
        self.sessions
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .insert(token.clone(), session);
        token
    }

    fn login(&self, req: &Request, run_id: &Option<String>) -> Response {
        let form = req.form();
        let username = field(&form, "username").unwrap_or_default();
        let password = form
            .iter()
            .find(|(k, _)| k == "password")
            .map(|(_, v)| v.clone())
            .unwrap_or_default();
        let result = self.store.authenticate(&username, &password);
        let record = ActivityLogRecord::new(Level::Info, &req.path, &username, "login");
        match result {
            Ok(session) => {
                self.emit(record.with("outcome", "ok"), run_id);
                // @anchor: login-success-redirect
                let target = "/";
                let token = self.new_session(session);
                Response::see_other(target).with_header(
                    "Set-Cookie",
                    &format!("{SESSION_COOKIE}={token}; Path=/; HttpOnly"),
                )
            }
            Err(e) => {
                let record = record.with("outcome", "rejected").with("code", e.code());
                self.emit(
                    ActivityLogRecord {
                        level: Level::Warn,
                        ..record
                    },
                    run_id,
                );
                redirect_with("/login", FlashKind::Error, e.code())
            }
        }
    }

    fn logout(
        &self,
        req: &Request,
        session: Option<&Session>,
        run_id: &Option<String>,
    ) -> Response {
        if let Some(token) = req.cookie(SESSION_COOKIE) {
            self.sessions
                .lock()
                .unwrap_or_else(|p| p.into_inner())
                .remove(token);
        }
        let actor = session.map(|s| s.user_id.as_str()).unwrap_or("");
        self.emit(
            ActivityLogRecord::new(Level::Info, &req.path, actor, "logout"),
            run_id,
        );
        // @anchor: logout-redirect
        let target = "/";
        Response::see_other(target).with_header(
            "Set-Cookie",
            &format!("{SESSION_COOKIE}=; Path=/; Max-Age=0"),
        )
    }

    fn update_profile(&self, req: &Request, session: &Session) -> Option<Outcome> {
        let email = req
            .form()
            .into_iter()
            .find(|(k, _)| k == "email")
            .map(|(_, v)| v)?;
        let result = self.store.update_email(&session.user_id, &email);
        let response = match &result {
            Ok(()) => redirect_with("/profile", FlashKind::Ok, "profile-updated"),
            Err(e) => redirect_with("/profile", FlashKind::Error, e.code()),
        };
        Some(Outcome {
            event: "update-email",
            result,
            detail: vec![],
            response,
        })
    }

    fn enroll(&self, req: &Request, session: &Session) -> Option<Outcome> {
        let subject_id = field(&req.form(), "subject_id")?;
        // @anchor: enroll-call
        let result = self.store.enroll_subject(&session.user_id, &subject_id);
        let response = match &result {
            Ok(_) => {
                // @anchor: enroll-success-redirect
                let target = "/student/subjects";
                redirect_with(target, FlashKind::Ok, "enrolled")
            }
            Err(e) => redirect_with("/student/available", FlashKind::Error, e.code()),
        };
        Some(Outcome {
            event: "enroll",
            result: result.map(|_| ()),
            detail: vec![("subject", subject_id)],
            response,
        })
    }

    fn cancel(&self, req: &Request, session: &Session) -> Option<Outcome> {
        let subject_id = field(&req.form(), "subject_id")?;
        let result = self.store.cancel_enrollment(&session.user_id, &subject_id);
        let response = match &result {
            Ok(()) => {
                // @anchor: cancel-success-redirect
                let target = "/student/subjects";
                redirect_with(target, FlashKind::Ok, "enrollment-cancelled")
            }
            Err(e) => redirect_with("/student/subjects", FlashKind::Error, e.code()),
        };
        Some(Outcome {
            event: "cancel",
            result,
            detail: vec![("subject", subject_id)],
            response,
        })
    }

    fn register(&self, req: &Request, session: &Session) -> Option<Outcome> {
        let term_id = field(&req.form(), "term_id")?;
        let result = self.store.register_exam_term(&session.user_id, &term_id);
        let response = match &result {
            Ok(()) => {
                let target = "/student/terms";
                redirect_with(target, FlashKind::Ok, "registered")
            }
            Err(e) => redirect_with("/student/terms", FlashKind::Error, e.code()),
        };
        Some(Outcome {
            event: "register",
            result,
            detail: vec![("term", term_id)],
            response,
        })
    }

    fn create_term(&self, req: &Request, session: &Session) -> Option<Outcome> {
        let form = req.form();
        let subject_id = field(&form, "subject_id")?;
        let starts_at = field(&form, "starts_at").unwrap_or_default();
        let capacity = field(&form, "max_participants").unwrap_or_default();
        let result = match capacity.parse::<i64>() {
            Ok(max) => self
                .store
                .create_exam_term(&session.user_id, &subject_id, &starts_at, max),
            Err(_) => Err(CoreError::InvalidCapacity),
        };
        let mut detail = vec![("subject", subject_id)];
        if let Ok(term) = &result {
            detail.push(("term", term.id.clone()));
        }
        let response = match &result {
            Ok(_) => redirect_with("/lecturer/terms", FlashKind::Ok, "term-created"),
            Err(e) => redirect_with("/lecturer/terms", FlashKind::Error, e.code()),
        };
        Some(Outcome {
            event: "create-term",
            result: result.map(|_| ()),
            detail,
            response,
        })
    }

    fn grade(&self, req: &Request, session: &Session) -> Option<Outcome> {
        let form = req.form();
        let term_id = field(&form, "term_id")?;
        let student_id = field(&form, "student_id")?;
        let value: GradeValue = field(&form, "value")?.parse().ok()?;
        // @anchor: grade-call
        let result = self
            .store
            .set_grade(&session.user_id, &term_id, &student_id, value);
        // @end: grade-call
        let response = match &result {
            Ok(_) => redirect_with("/lecturer/participants", FlashKind::Ok, "grade-saved"),
            Err(e) => redirect_with("/lecturer/participants", FlashKind::Error, e.code()),
        };
        Some(Outcome {
            event: "grade",
            result: result.map(|_| ()),
            detail: vec![
                ("term", term_id),
                ("student", student_id),
                ("value", value.to_string()),
            ],
            response,
        })
    }

    #[cfg(feature = "testbed")]
    fn testbed(&self, req: &Request, run_id: &Option<String>) -> Response {
        match (req.method.as_str(), req.path.as_str()) {
            ("GET" | "POST", "/testbed/reset") => {
                let id = req
                    .query_param("fixture")
                    .map(str::to_string)
                    .or_else(|| field(&req.form(), "fixture"))
                    .unwrap_or_else(|| self.initial_fixture.clone());
                let Some(dataset) = fixture::shipped(&id) else {
                    return Response::json(
                        400,
                        format!(
                            "{{\"error\":\"unknown-fixture\",\"fixture\":{}}}",
                            json_string(&id)
                        ),
                    );
                };
                if let Err(e) = self.store.reset_fixture(&dataset) {
                    return Response::json(500, format!("{{\"error\":{}}}", json_string(e.code())));
                }
                self.sessions
                    .lock()
                    .unwrap_or_else(|p| p.into_inner())
                    .clear();
                self.emit(
                    ActivityLogRecord::new(Level::Info, &req.path, "", "reset")
                        .with("fixture", id.clone()),
                    run_id,
                );
                Response::json(200, format!("{{\"fixture_id\":{}}}", json_string(&id)))
            }
            ("GET", "/testbed/defects") => Response::json(200, DEFECT_MANIFEST.to_string()),
            ("GET", "/testbed/dump") => match serde_json::to_string_pretty(&self.store.dump()) {
                Ok(body) => Response::json(200, body),
                Err(e) => Response::json(
                    500,
                    format!("{{\"error\":{}}}", json_string(&e.to_string())),
                ),
            },
            _ => self.error_page(404, "not-found", "No such page.", None),
        }
    }

    #[cfg(not(feature = "testbed"))]
    fn testbed(&self, _req: &Request, _run_id: &Option<String>) -> Response {
        let _ = (&self.initial_fixture, fixture::SHIPPED_IDS);
        self.error_page(404, "not-found", "No such page.", None)
    }
}

fn json_string(s: &str) -> String {
    serde_json::Value::String(s.to_string()).to_string()
}

fn login_required() -> Response {
    redirect_with("/login", FlashKind::Error, "login-required")
}

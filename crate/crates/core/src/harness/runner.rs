//! Executes test cases against a server and records soft assertions.
//!
//! Every step runs twice: once in the browser against the system under
//! test and once in the reference [`World`]. Checks compare the two.
//! Findings on the page are failures; problems of the harness itself, or
//! an unreachable server, end the test with verdict `error`.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::browser::{BrowseError, Browser};
use super::oracle::{Expectation, Fixture};
use super::page::ParsedPage;
use super::registry::{BoundBlock, Category, Check, Step, Suite, TestCase};
use super::transport::Transport;
use super::world::{Prediction, World, WorldError};
use crate::process_model::State;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssertOutcome {
    pub block: String,
    pub check: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actual: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestResult {
    pub test_id: String,
    pub run_id: String,
    pub category: Category,
    pub fixture_id: String,
    pub verdict: Verdict,
    pub asserts: Vec<AssertOutcome>,
    pub duration_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub request_count: usize,
}

impl TestResult {
    pub fn failed_asserts(&self) -> impl Iterator<Item = &AssertOutcome> {
        self.asserts.iter().filter(|a| !a.passed)
    }
}

/// Why a test stopped early.
enum Abort {
    /// The page contradicts the expected flow; recorded as a failed assert.
    Fail,
    /// The harness cannot continue; the test errors.
    Error(String),
}

impl From<WorldError> for Abort {
    fn from(e: WorldError) -> Abort {
        Abort::Error(format!("reference model: {e}"))
    }
}

fn flash_matches(pattern: Option<&str>, flash: Option<&str>) -> bool {
    match (pattern, flash) {
        (None, _) => true,
        (Some(p), Some(f)) => match p.strip_suffix('*') {
            Some(prefix) => f.starts_with(prefix),
            None => p == f,
        },
        (Some(_), None) => false,
    }
}

fn show(v: Option<&str>) -> String {
    v.unwrap_or("(none)").to_string()
}

/// How a step reaches the server.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Via {
    Open,
    Click(String),
    /// Submit a form found on the current page, overriding some fields.
    Form {
        form: String,
        overrides: Vec<String>,
    },
    /// Post the fields directly, without looking at the page.
    Raw,
}

/// A step with its selectors resolved: the request the user means to send.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Intent {
    pub method: String,
    pub path: String,
    pub fields: Vec<(String, String)>,
    pub via: Via,
}

fn form_intent(
    raw: bool,
    form: String,
    path: &str,
    fields: Vec<(&str, String)>,
    overrides: &[&str],
) -> Intent {
    Intent {
        method: "POST".into(),
        path: path.into(),
        fields: fields
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect(),
        via: if raw {
            Via::Raw
        } else {
            Via::Form {
                form,
                overrides: overrides.iter().map(|o| o.to_string()).collect(),
            }
        },
    }
}

/// Resolves a step against the reference model.
pub fn intent(world: &World, step: &Step) -> Result<Intent, WorldError> {
    Ok(match step {
        Step::Open { path } => Intent {
            method: "GET".into(),
            path: path.clone(),
            fields: Vec::new(),
            via: Via::Open,
        },
        Step::Click { element } => Intent {
            method: "GET".into(),
            path: world.link_target(element)?,
            fields: Vec::new(),
            via: Via::Click(element.clone()),
        },
        Step::Login {
            user,
            password,
            raw,
        } => {
            let password = password.clone().unwrap_or_else(|| format!("{user}-secret"));
            let fields = vec![("username", user.clone()), ("password", password)];
            form_intent(
                *raw,
                "login-form".into(),
                "/login",
                fields,
                &["username", "password"],
            )
        }
        Step::Logout { raw } => form_intent(*raw, "logout-form".into(), "/logout", Vec::new(), &[]),
        Step::Enroll { subject, raw } => {
            let id = world.enroll_target(subject)?;
            form_intent(
                *raw,
                format!("enroll-form-{id}"),
                "/student/enroll",
                vec![("subject_id", id)],
                &[],
            )
        }
        Step::Cancel { subject, raw } => {
            let id = world.cancel_target(subject)?;
            form_intent(
                *raw,
                format!("cancel-form-{id}"),
                "/student/cancel",
                vec![("subject_id", id)],
                &[],
            )
        }
        Step::Register { term, raw } => {
            let id = world.register_target(term)?;
            form_intent(
                *raw,
                format!("register-form-{id}"),
                "/student/register",
                vec![("term_id", id)],
                &[],
            )
        }
        Step::CreateTerm {
            subject,
            starts_at,
            capacity,
            raw,
        } => {
            let fields = vec![
                ("subject_id", world.owned_subject_target(subject)?),
                ("starts_at", starts_at.clone()),
                ("max_participants", capacity.clone()),
            ];
            let all = ["subject_id", "starts_at", "max_participants"];
            form_intent(
                *raw,
                "create-term-form".into(),
                "/lecturer/terms",
                fields,
                &all,
            )
        }
        Step::Grade { target, value, raw } => {
            let (term, student) = world.grade_target(target)?;
            let form = format!("grade-form-{term}-{student}");
            let fields = vec![
                ("term_id", term),
                ("student_id", student),
                ("value", value.clone()),
            ];
            form_intent(*raw, form, "/lecturer/grade", fields, &["value"])
        }
        Step::UpdateEmail { email, raw } => form_intent(
            *raw,
            "profile-form".into(),
            "/profile",
            vec![("email", email.clone())],
            &["email"],
        ),
        Step::Post { path, fields } => Intent {
            method: "POST".into(),
            path: path.clone(),
            fields: fields.iter().map(|(k, v)| (k.clone(), v.clone())).collect(),
            via: Via::Raw,
        },
    })
}

struct Execution<'t> {
    browser: Browser<'t>,
    world: World,
    initial: Fixture,
    prediction: Option<Prediction>,
    asserts: Vec<AssertOutcome>,
    block: String,
}

impl<'t> Execution<'t> {
    fn record(
        &mut self,
        check: &str,
        target: Option<&str>,
        passed: bool,
        expected: Option<String>,
        actual: Option<String>,
    ) {
        self.asserts.push(AssertOutcome {
            block: self.block.clone(),
            check: check.to_string(),
            target: target.map(str::to_string),
            passed,
            expected,
            actual,
        });
    }

    /// Maps a browser failure to an abort, recording page findings.
    fn browse<T>(&mut self, step: &str, r: Result<T, BrowseError>) -> Result<T, Abort> {
        match r {
            Ok(v) => Ok(v),
            Err(e) if e.is_transport() => Err(Abort::Error(e.to_string())),
            Err(e) => {
                self.record("step", Some(step), false, None, Some(e.to_string()));
                Err(Abort::Fail)
            }
        }
    }

    fn predict(&mut self, method: &str, target: &str, fields: &[(String, String)]) {
        self.prediction = Some(self.world.request(method, target, fields));
    }

    fn page(&self) -> Option<&ParsedPage> {
        self.browser.page()
    }

    fn step(&mut self, step: &Step) -> Result<(), Abort> {
        let intent = intent(&self.world, step)?;
        let r = match &intent.via {
            Via::Open => self.browser.open(&intent.path).map(|_| ()),
            Via::Click(id) => self.browser.click(id).map(|_| ()),
            Via::Raw => self.browser.post(&intent.path, &intent.fields).map(|_| ()),
            Via::Form { form, overrides } => {
                let over: Vec<(&str, &str)> = intent
                    .fields
                    .iter()
                    .filter(|(k, _)| overrides.contains(k))
                    .map(|(k, v)| (k.as_str(), v.as_str()))
                    .collect();
                self.browser.submit(form, &over).map(|_| ())
            }
        };
        let label = match &intent.via {
            Via::Click(id) => id.clone(),
            Via::Form { form, .. } => form.clone(),
            _ => intent.path.clone(),
        };
        self.browse(&label, r)?;
        self.predict(&intent.method, &intent.path, &intent.fields);
        Ok(())
    }

    fn precondition(&mut self, state: &State) -> Result<(), Abort> {
        let (view, flash) = match self.page() {
            Some(p) => (Some(p.view.clone()), p.flash()),
            None => (None, None),
        };
        let view_ok = state.view.is_none() || view == state.view;
        let ok = view_ok && flash_matches(state.flash.as_deref(), flash.as_deref());
        if ok {
            return Ok(());
        }
        self.record(
            "precondition",
            Some(&state.id),
            false,
            Some(format!(
                "{} {}",
                show(state.view.as_deref()),
                show(state.flash.as_deref())
            )),
            Some(format!(
                "{} {}",
                show(view.as_deref()),
                show(flash.as_deref())
            )),
        );
        Err(Abort::Fail)
    }

    /// The reference model must land where the process model says.
    fn model_agrees(&self, state: &State, p: &Prediction) -> Result<(), Abort> {
        let view_ok = state.view.is_none() || state.view.as_deref() == Some(p.view.as_str());
        if view_ok && flash_matches(state.flash.as_deref(), p.flash.as_deref()) {
            return Ok(());
        }
        Err(Abort::Error(format!(
            "reference model reaches {} {} but the process model expects state {}",
            p.view,
            show(p.flash.as_deref()),
            state.id
        )))
    }

    fn check(&mut self, check: Check) -> Result<(), Abort> {
        let prediction = self
            .prediction
            .clone()
            .ok_or_else(|| Abort::Error("check before any step".into()))?;
        let page = self
            .page()
            .cloned()
            .ok_or_else(|| Abort::Error("check without a page".into()))?;
        match check {
            Check::View => {
                let expected = format!("{} {}", prediction.status, prediction.view);
                let actual = format!("{} {}", page.status, page.view);
                self.record(
                    "view",
                    None,
                    expected == actual,
                    Some(expected),
                    Some(actual),
                );
            }
            Check::Flash => {
                let actual = page.flash();
                self.record(
                    "flash",
                    None,
                    actual == prediction.flash,
                    Some(show(prediction.flash.as_deref())),
                    Some(show(actual.as_deref())),
                );
            }
            Check::Oracle => {
                let expectation = self.world.expectation(&prediction).map_err(|e| {
                    Abort::Error(format!("oracle cannot describe {}: {e}", prediction.view))
                })?;
                self.compare_elements(&expectation, &page);
            }
            Check::State => {
                let expected = self.world.fixture.clone();
                self.compare_dump("state", &expected)?;
            }
            Check::Unchanged => {
                let expected = self.initial.clone();
                self.compare_dump("unchanged", &expected)?;
            }
        }
        Ok(())
    }

    fn compare_elements(&mut self, expectation: &Expectation, page: &ParsedPage) {
        let before = self.asserts.len();
        let expected = expectation.map();
        for (id, value) in &expectation.elements {
            match page.value(id) {
                None => self.record("oracle", Some(id), false, Some(value.clone()), None),
                Some(actual) if actual != value => self.record(
                    "oracle",
                    Some(id),
                    false,
                    Some(value.clone()),
                    Some(actual.to_string()),
                ),
                Some(_) => {}
            }
        }
        for el in &page.elements {
            if !expected.contains_key(el.id.as_str()) {
                self.record(
                    "oracle",
                    Some(&el.id),
                    false,
                    None,
                    Some(format!("unexpected {}: {}", el.tag, el.value)),
                );
            }
        }
        for id in page.duplicate_ids.clone() {
            self.record(
                "oracle",
                Some(&id),
                false,
                None,
                Some("duplicate id".into()),
            );
        }
        let mut seen = std::collections::BTreeSet::new();
        let actual_order: Vec<&str> = page
            .elements
            .iter()
            .map(|e| e.id.as_str())
            .filter(|id| expected.contains_key(id) && seen.insert(*id))
            .collect();
        let wanted: Vec<&str> = expectation
            .elements
            .iter()
            .map(|(id, _)| id.as_str())
            .filter(|id| actual_order.contains(id))
            .collect();
        if actual_order != wanted {
            let first = actual_order
                .iter()
                .zip(&wanted)
                .position(|(a, b)| a != b)
                .unwrap_or(0);
            self.record(
                "oracle-order",
                Some(wanted[first]),
                false,
                Some(wanted[first].to_string()),
                Some(actual_order[first].to_string()),
            );
        }
        if self.asserts.len() == before {
            let n = expectation.elements.len().to_string();
            self.record("oracle", None, true, Some(n.clone()), Some(n));
        }
    }

    fn compare_dump(&mut self, check: &str, expected: &Fixture) -> Result<(), Abort> {
        let dump: Fixture = match self.browser.dump() {
            Ok(d) => d,
            Err(e) => return Err(Abort::Error(e.to_string())),
        };
        let actual = serde_json::to_value(dump.normalized()).expect("fixture serialises");
        let expected =
            serde_json::to_value(expected.clone().normalized()).expect("fixture serialises");
        let mut differs = false;
        for key in ["users", "subjects", "exam_terms", "enrollments", "grades"] {
            if actual[key] != expected[key] {
                differs = true;
                self.record(
                    check,
                    Some(key),
                    false,
                    Some(expected[key].to_string()),
                    Some(actual[key].to_string()),
                );
            }
        }
        if !differs {
            self.record(check, None, true, None, None);
        }
        Ok(())
    }

    fn run_block(&mut self, block: &BoundBlock) -> Result<(), Abort> {
        self.block = block.block_id.clone();
        if let Some(state) = &block.precondition {
            self.precondition(state)?;
        }
        for step in &block.steps {
            self.step(step)?;
        }
        if let (Some(state), Some(p)) = (&block.postcondition, &self.prediction) {
            self.model_agrees(state, p)?;
        }
        for check in &block.checks {
            self.check(*check)?;
        }
        Ok(())
    }

    fn run(&mut self, test: &TestCase) -> Result<(), Abort> {
        let r = self.browser.reset(&test.fixture_id);
        if let Err(e) = r {
            return Err(Abort::Error(format!("reset failed: {e}")));
        }
        self.block = "entry".into();
        if let Some(user) = &test.entry.user {
            self.step(&Step::Login {
                user: user.clone(),
                password: None,
                raw: true,
            })?;
        }
        if let Some(path) = &test.entry.path {
            self.step(&Step::Open { path: path.clone() })?;
        }
        for block in &test.blocks {
            self.run_block(block)?;
        }
        Ok(())
    }
}

/// Runs one test on a fresh browser session.
pub fn run_test(transport: &dyn Transport, test: &TestCase, run_id: &str) -> TestResult {
    let started = Instant::now();
    let mut result = TestResult {
        test_id: test.test_id.clone(),
        run_id: run_id.to_string(),
        category: test.category,
        fixture_id: test.fixture_id.clone(),
        verdict: Verdict::Error,
        asserts: Vec::new(),
        duration_ms: 0,
        error: None,
        request_count: 0,
    };
    let Some(world) = World::shipped(&test.fixture_id) else {
        result.error = Some(format!("unknown fixture {}", test.fixture_id));
        return result;
    };
    let mut exec = Execution {
        browser: Browser::new(transport).with_run_id(run_id),
        initial: world.fixture.clone(),
        world,
        prediction: None,
        asserts: Vec::new(),
        block: String::new(),
    };
    let outcome = exec.run(test);
    result.verdict = match &outcome {
        Err(Abort::Error(message)) => {
            result.error = Some(message.clone());
            Verdict::Error
        }
        _ if exec.asserts.iter().any(|a| !a.passed) => Verdict::Fail,
        Err(Abort::Fail) => Verdict::Fail,
        Ok(()) => Verdict::Pass,
    };
    result.request_count = exec.browser.request_count();
    result.asserts = exec.asserts;
    result.duration_ms = started.elapsed().as_millis() as u64;
    result
}

/// Run id of the `ordinal`-th test (1-based) in suite run `prefix`.
pub fn run_id(prefix: &str, ordinal: usize) -> String {
    format!("{prefix}-{ordinal:03}")
}

/// Runs a whole suite in order, one browser session per test.
pub fn run_suite(transport: &dyn Transport, suite: &Suite, prefix: &str) -> Vec<TestResult> {
    suite
        .tests
        .iter()
        .enumerate()
        .map(|(i, t)| run_test(transport, t, &run_id(prefix, i + 1)))
        .collect()
}

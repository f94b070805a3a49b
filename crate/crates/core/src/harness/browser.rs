//! A minimal scripted browser: cookie jar, redirect following, page
//! objects located by element id, and the testbed side channels.
//!
//! Every request carries the `X-Run-Id` header of the current test run.

use std::collections::BTreeMap;

use serde::de::DeserializeOwned;
use thiserror::Error;

use super::page::ParsedPage;
use super::transport::{HttpRequest, HttpResponse, Transport, TransportError};

pub const RUN_ID_HEADER: &str = "X-Run-Id";
const MAX_REDIRECTS: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BrowseError {
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("no page is open")]
    NoPage,
    #[error("element {0} not found on the page")]
    MissingElement(String),
    #[error("element {0} is not a link")]
    NotALink(String),
    #[error("too many redirects starting at {0}")]
    RedirectLoop(String),
    #[error("testbed endpoint {endpoint} answered {status}: {body}")]
    Testbed {
        endpoint: String,
        status: u16,
        body: String,
    },
}

impl BrowseError {
    /// Transport problems abort a test with verdict error; the rest are
    /// page-level findings and count as failures.
    pub fn is_transport(&self) -> bool {
        matches!(
            self,
            BrowseError::Transport(_) | BrowseError::Testbed { .. }
        )
    }
}

pub struct Browser<'t> {
    transport: &'t dyn Transport,
    run_id: Option<String>,
    cookies: BTreeMap<String, String>,
    page: Option<ParsedPage>,
    requests: usize,
}

impl<'t> Browser<'t> {
    pub fn new(transport: &'t dyn Transport) -> Browser<'t> {
        Browser {
            transport,
            run_id: None,
            cookies: BTreeMap::new(),
            page: None,
            requests: 0,
        }
    }

    pub fn with_run_id(mut self, run_id: &str) -> Browser<'t> {
        self.run_id = Some(run_id.to_string());
        self
    }

    pub fn run_id(&self) -> Option<&str> {
        self.run_id.as_deref()
    }

    /// Number of HTTP requests sent so far.
    pub fn request_count(&self) -> usize {
        self.requests
    }

    pub fn page(&self) -> Option<&ParsedPage> {
        self.page.as_ref()
    }

    pub fn clear_cookies(&mut self) {
        self.cookies.clear();
    }

    fn send(&mut self, mut request: HttpRequest) -> Result<HttpResponse, TransportError> {
        if let Some(run_id) = &self.run_id {
            request = request.with_header(RUN_ID_HEADER, run_id);
        }
        if !self.cookies.is_empty() {
            let jar = self
                .cookies
                .iter()
                .map(|(k, v)| format!("{k}={v}"))
                .collect::<Vec<_>>()
                .join("; ");
            request = request.with_header("Cookie", &jar);
        }
        self.requests += 1;
        let response = self.transport.send(&request)?;
        for raw in response.headers_named("set-cookie") {
            self.store_cookie(raw);
        }
        Ok(response)
    }

    fn store_cookie(&mut self, raw: &str) {
        let mut parts = raw.split(';').map(str::trim);
        let Some((name, value)) = parts.next().and_then(|p| p.split_once('=')) else {
            return;
        };
        let expired = parts.any(|p| p.eq_ignore_ascii_case("max-age=0"));
        if expired || value.is_empty() {
            self.cookies.remove(name);
        } else {
            self.cookies.insert(name.to_string(), value.to_string());
        }
    }

    /// Sends `request`, follows redirects with GET and parses the final page.
    fn navigate(&mut self, request: HttpRequest) -> Result<&ParsedPage, BrowseError> {
        let start = request.target.clone();
        let mut target = request.target.clone();
        let mut response = self.send(request)?;
        let mut hops = 0;
        while matches!(response.status, 301 | 302 | 303 | 307 | 308) {
            hops += 1;
            if hops > MAX_REDIRECTS {
                return Err(BrowseError::RedirectLoop(start));
            }
            let Some(location) = response.header("location") else {
                break;
            };
            target = location.to_string();
            response = self.send(HttpRequest::get(&target))?;
        }
        self.page = Some(ParsedPage::parse(response.status, &target, &response.body));
        Ok(self.page.as_ref().expect("just set"))
    }

    pub fn open(&mut self, target: &str) -> Result<&ParsedPage, BrowseError> {
        self.navigate(HttpRequest::get(target))
    }

    pub fn post(
        &mut self,
        target: &str,
        fields: &[(String, String)],
    ) -> Result<&ParsedPage, BrowseError> {
        self.navigate(HttpRequest::post_form(target, fields))
    }

    /// Follows the link with element id `id` on the current page.
    pub fn click(&mut self, id: &str) -> Result<&ParsedPage, BrowseError> {
        let page = self.page.as_ref().ok_or(BrowseError::NoPage)?;
        let el = page
            .element(id)
            .ok_or_else(|| BrowseError::MissingElement(id.to_string()))?;
        let href = el
            .attrs
            .get("href")
            .cloned()
            .ok_or_else(|| BrowseError::NotALink(id.to_string()))?;
        self.open(&href)
    }

    /// Submits form `form_id` of the current page. `overrides` replace or
    /// add named fields.
    pub fn submit(
        &mut self,
        form_id: &str,
        overrides: &[(&str, &str)],
    ) -> Result<&ParsedPage, BrowseError> {
        let page = self.page.as_ref().ok_or(BrowseError::NoPage)?;
        let form = page
            .forms
            .get(form_id)
            .ok_or_else(|| BrowseError::MissingElement(form_id.to_string()))?;
        let mut fields = form.fields.clone();
        for (name, value) in overrides {
            match fields.iter_mut().find(|(n, _)| n == name) {
                Some(slot) => slot.1 = value.to_string(),
                None => fields.push((name.to_string(), value.to_string())),
            }
        }
        let action = form.action.clone();
        if form.method == "post" {
            self.post(&action, &fields)
        } else {
            let query = form_urlencoded::Serializer::new(String::new())
                .extend_pairs(fields.iter().map(|(k, v)| (k.as_str(), v.as_str())))
                .finish();
            self.open(&format!("{action}?{query}"))
        }
    }

    fn testbed_json<T: DeserializeOwned>(&mut self, target: &str) -> Result<T, BrowseError> {
        let response = self.send(HttpRequest::get(target))?;
        let fail = |body: String| BrowseError::Testbed {
            endpoint: target.to_string(),
            status: response.status,
            body,
        };
        if response.status != 200 {
            return Err(fail(response.body.clone()));
        }
        serde_json::from_str(&response.body).map_err(|e| fail(e.to_string()))
    }

    /// Restores `fixture` on the server and forgets all cookies and pages.
    pub fn reset(&mut self, fixture: &str) -> Result<(), BrowseError> {
        let encoded: String = form_urlencoded::byte_serialize(fixture.as_bytes()).collect();
        let _: serde_json::Value =
            self.testbed_json(&format!("/testbed/reset?fixture={encoded}"))?;
        self.cookies.clear();
        self.page = None;
        Ok(())
    }

    /// Current persistent state as served by `/testbed/dump`.
    pub fn dump<T: DeserializeOwned>(&mut self) -> Result<T, BrowseError> {
        self.testbed_json("/testbed/dump")
    }

    pub fn defects<T: DeserializeOwned>(&mut self) -> Result<T, BrowseError> {
        self.testbed_json("/testbed/defects")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::transport::InProcess;

    #[test]
    fn login_through_the_form_keeps_the_session() {
        let t = InProcess::shipped("baseline-small").unwrap();
        let mut b = Browser::new(&t).with_run_id("r0-1");
        b.open("/login").unwrap();
        let page = b
            .submit(
                "login-form",
                &[("username", "st01"), ("password", "st01-secret")],
            )
            .unwrap();
        assert_eq!(page.view, "home");
        assert_eq!(page.value("home-welcome"), Some("Welcome, Petr Svoboda."));
        let page = b.click("nav-my-subjects").unwrap();
        assert_eq!(page.view, "my-subjects");
        b.submit("logout-form", &[]).unwrap();
        assert_eq!(b.page().unwrap().value("nav-login"), Some("Log in"));
        assert_eq!(b.request_count(), 6);
    }

    #[test]
    fn missing_elements_are_reported() {
        let t = InProcess::shipped("baseline-small").unwrap();
        let mut b = Browser::new(&t);
        assert_eq!(b.click("nav-home").unwrap_err(), BrowseError::NoPage);
        b.open("/").unwrap();
        assert_eq!(
            b.click("nope").unwrap_err(),
            BrowseError::MissingElement("nope".into())
        );
        assert_eq!(
            b.click("home-welcome").unwrap_err(),
            BrowseError::NotALink("home-welcome".into())
        );
    }

    #[test]
    fn reset_rejects_unknown_fixture() {
        let t = InProcess::shipped("baseline-small").unwrap();
        let mut b = Browser::new(&t);
        assert!(matches!(
            b.reset("nope"),
            Err(BrowseError::Testbed { status: 400, .. })
        ));
        b.reset("baseline-edge").unwrap();
        let dump: serde_json::Value = b.dump().unwrap();
        assert_eq!(dump["fixture_id"], "baseline-edge");
    }
}

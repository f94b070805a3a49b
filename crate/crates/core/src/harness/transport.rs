//! How the harness talks to a system under test.
//!
//! [`HttpTransport`] speaks real HTTP to a deployed server. [`InProcess`]
//! hands requests straight to a [`uis::web::App`], which keeps unit tests
//! hermetic and fast. Neither follows redirects; the browser does that.

use std::sync::Arc;
use std::time::Duration;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpRequest {
    pub method: String,
    /// Path plus optional query, e.g. `/login?flash=error:login-required`.
    pub target: String,
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
}

impl HttpRequest {
    pub fn get(target: &str) -> HttpRequest {
        HttpRequest {
            method: "GET".into(),
            target: target.into(),
            headers: Vec::new(),
            body: Vec::new(),
        }
    }

    pub fn post_form(target: &str, fields: &[(String, String)]) -> HttpRequest {
        let body = form_urlencoded::Serializer::new(String::new())
            .extend_pairs(fields.iter().map(|(k, v)| (k.as_str(), v.as_str())))
            .finish();
        HttpRequest {
            method: "POST".into(),
            target: target.into(),
            headers: vec![(
                "Content-Type".into(),
                "application/x-www-form-urlencoded".into(),
            )],
            body: body.into_bytes(),
        }
    }

    pub fn with_header(mut self, name: &str, value: &str) -> HttpRequest {
        self.headers.push((name.into(), value.into()));
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub headers: Vec<(String, String)>,
    pub body: String,
}

impl HttpResponse {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(n, _)| n.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }

    pub fn headers_named<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.headers
            .iter()
            .filter(move |(n, _)| n.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransportError {
    #[error("target unreachable: {0}")]
    TargetUnreachable(String),
}

pub trait Transport: Send + Sync {
    fn send(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError>;

    /// Human-readable target description for reports.
    fn describe(&self) -> String;
}

pub struct HttpTransport {
    base_url: String,
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(base_url: &str) -> HttpTransport {
        // Pooled keep-alive connections stall for the delayed-ACK interval on
        // every reuse because the server writes headers and body separately.
        // A fresh loopback connection per request is far cheaper.
        let agent = ureq::AgentBuilder::new()
            .redirects(0)
            .timeout(Duration::from_secs(30))
            .max_idle_connections(0)
            .build();
        HttpTransport {
            base_url: base_url.trim_end_matches('/').to_string(),
            agent,
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }
}

fn convert(response: ureq::Response) -> Result<HttpResponse, TransportError> {
    let status = response.status();
    let headers = response
        .headers_names()
        .into_iter()
        .flat_map(|name| {
            response
                .all(&name)
                .into_iter()
                .map(|v| (name.clone(), v.to_string()))
                .collect::<Vec<_>>()
        })
        .collect();
    let body = response
        .into_string()
        .map_err(|e| TransportError::TargetUnreachable(e.to_string()))?;
    Ok(HttpResponse {
        status,
        headers,
        body,
    })
}

impl Transport for HttpTransport {
    fn send(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError> {
        let url = format!("{}{}", self.base_url, request.target);
        let mut call = self.agent.request(&request.method, &url);
        for (name, value) in &request.headers {
            call = call.set(name, value);
        }
        let result = if request.method == "GET" {
            call.call()
        } else {
            call.send_bytes(&request.body)
        };
        match result {
            Ok(response) => convert(response),
            // 4xx and 5xx are ordinary answers for the harness
            Err(ureq::Error::Status(_, response)) => convert(response),
            Err(e) => Err(TransportError::TargetUnreachable(e.to_string())),
        }
    }

    fn describe(&self) -> String {
        self.base_url.clone()
    }
}

/// Drives an application object without a socket.
#[derive(Clone)]
pub struct InProcess {
    app: Arc<uis::web::App>,
}

impl InProcess {
    pub fn new(app: Arc<uis::web::App>) -> InProcess {
        InProcess { app }
    }

    /// A fresh application on a shipped fixture with an in-memory log.
    pub fn shipped(fixture_id: &str) -> Option<InProcess> {
        use uis::activity::{ActivityLog, Level, Sink};
        let dataset = uis::core::fixture::shipped(fixture_id)?;
        let app =
            uis::web::App::new(&dataset, ActivityLog::new(Sink::memory(), Level::Info)).ok()?;
        Some(InProcess::new(Arc::new(app)))
    }

    pub fn app(&self) -> &uis::web::App {
        &self.app
    }
}

impl Transport for InProcess {
    fn send(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError> {
        let mut req = uis::web::Request::new(&request.method, &request.target);
        for (name, value) in &request.headers {
            req = req.with_header(name, value);
        }
        req.body = request.body.clone();
        let response = self.app.handle(&req);
        Ok(HttpResponse {
            status: response.status,
            body: response.text(),
            headers: response.headers,
        })
    }

    fn describe(&self) -> String {
        "in-process".into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn in_process_answers_without_following_redirects() {
        let t = InProcess::shipped("baseline-small").unwrap();
        let r = t.send(&HttpRequest::get("/student/subjects")).unwrap();
        assert_eq!(r.status, 303);
        assert_eq!(
            r.header("location"),
            Some("/login?flash=error:login-required")
        );
    }

    #[test]
    fn unreachable_http_target_is_an_error() {
        // port 9 (discard) is closed on any sane test machine
        let t = HttpTransport::new("http://127.0.0.1:9");
        assert!(matches!(
            t.send(&HttpRequest::get("/")),
            Err(TransportError::TargetUnreachable(_))
        ));
    }
}

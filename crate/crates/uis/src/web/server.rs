//! Blocking HTTP adapter over `tiny_http` with a fixed worker pool.

use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::JoinHandle;

use super::{App, Request, Response};

pub struct ServerHandle {
    addr: SocketAddr,
    server: Arc<tiny_http::Server>,
    workers: Vec<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Blocks until every worker has exited, which only happens after
    /// [`ServerHandle::shutdown`] was called from elsewhere.
    pub fn join(self) {
        for worker in self.workers {
            let _ = worker.join();
        }
    }

    pub fn shutdown(self) {
        for _ in 0..self.workers.len() {
            self.server.unblock();
        }
        self.join();
    }
}

/// Binds `addr` (port 0 picks a free port) and starts `workers` threads.
pub fn start(app: Arc<App>, addr: &str, workers: usize) -> std::io::Result<ServerHandle> {
    let server = tiny_http::Server::http(addr).map_err(std::io::Error::other)?;
    let addr = server
        .server_addr()
        .to_ip()
        .ok_or_else(|| std::io::Error::other("server is not bound to an IP address"))?;
    let server = Arc::new(server);
    let workers = (0..workers.max(1))
        .map(|_| {
            let server = server.clone();
            let app = app.clone();
            std::thread::spawn(move || {
                while let Ok(request) = server.recv() {
                    serve_one(&app, request);
                }
            })
        })
        .collect();
    Ok(ServerHandle {
        addr,
        server,
        workers,
    })
}

fn serve_one(app: &App, mut request: tiny_http::Request) {
    let mut req = Request::new(request.method().as_str(), request.url());
    req.headers = request
        .headers()
        .iter()
        .map(|h| {
            (
                h.field.as_str().as_str().to_ascii_lowercase(),
                h.value.as_str().to_string(),
            )
        })
        .collect();
    let mut body = Vec::new();
    if request.as_reader().read_to_end(&mut body).is_err() {
        let _ = request.respond(tiny_http::Response::empty(400));
        return;
    }
    req.body = body;
    let response = app.handle(&req);
    let _ = request.respond(to_tiny(response));
}

fn to_tiny(response: Response) -> tiny_http::Response<std::io::Cursor<Vec<u8>>> {
    let mut out = tiny_http::Response::from_data(response.body).with_status_code(response.status);
    for (name, value) in response.headers {
        if let Ok(header) = tiny_http::Header::from_bytes(name.as_bytes(), value.as_bytes()) {
            out.add_header(header);
        }
    }
    out
}

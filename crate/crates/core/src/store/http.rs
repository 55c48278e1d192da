//! Minimal read-only HTTP front for a [`GraphStore`].

use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use log::{debug, warn};
use serde::Serialize;
use tiny_http::{Header, Response, Server};

use super::{find_object, plan_route, GraphStore};
use crate::error::{Error, Result};
use crate::model::UnifiedSnapshot;

pub struct ServerHandle {
    server: Arc<Server>,
    thread: Option<JoinHandle<()>>,
    addr: SocketAddr,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Blocks until the server thread exits.
    pub fn join(mut self) {
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }

    pub fn shutdown(mut self) {
        self.server.unblock();
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        if self.thread.is_some() {
            self.server.unblock();
        }
    }
}

/// Serves `GET /snapshot/latest`, `/object?name=` and `/route?from=&to=`.
pub fn serve(store: Arc<GraphStore>, addr: &str) -> Result<ServerHandle> {
    let server = Arc::new(Server::http(addr).map_err(|e| Error::Service(e.to_string()))?);
    let addr =
        server.server_addr().to_ip().ok_or_else(|| Error::Service("server is not bound to an IP address".into()))?;
    let thread = {
        let server = server.clone();
        std::thread::spawn(move || {
            for req in server.incoming_requests() {
                let (status, body) = route(&store, req.url());
                debug!("{} {} -> {status}", req.method(), req.url());
                let header = Header::from_bytes("Content-Type", "application/json").expect("static header");
                let resp = Response::from_string(body).with_status_code(status).with_header(header);
                if let Err(e) = req.respond(resp) {
                    warn!("failed to send response: {e}");
                }
            }
        })
    };
    Ok(ServerHandle { server, thread: Some(thread), addr })
}

#[derive(Serialize)]
struct ErrorBody {
    error: String,
}

#[derive(Serialize)]
struct RouteBody {
    path: Vec<String>,
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("response types serialize")
}

fn route(store: &GraphStore, url: &str) -> (u16, String) {
    let (path, query) = url.split_once('?').unwrap_or((url, ""));
    let param =
        |key: &str| url::form_urlencoded::parse(query.as_bytes()).find(|(k, _)| k == key).map(|(_, v)| v.into_owned());
    let err = |status: u16, msg: String| (status, json(&ErrorBody { error: msg }));
    let snap = store.latest();
    match path {
        "/snapshot/latest" => (200, json(&*snap)),
        "/object" => match param("name") {
            Some(name) => (200, json(&find_object(&name, &snap))),
            None => err(400, "missing query parameter `name`".into()),
        },
        "/route" => match (param("from"), param("to")) {
            (Some(from), Some(to)) => match plan_route(&from, &to, &snap) {
                Ok(path) => (200, json(&RouteBody { path })),
                Err(e @ Error::NoRoute { .. }) => err(404, e.to_string()),
                Err(e) => err(400, e.to_string()),
            },
            _ => err(400, "missing query parameters `from` and `to`".into()),
        },
        _ => err(404, format!("no such endpoint `{path}`")),
    }
}

/// Fetches `/snapshot/latest` from a running store service.
pub fn fetch_latest(base_url: &str, timeout: Duration) -> Result<UnifiedSnapshot> {
    let url = format!("{}/snapshot/latest", base_url.trim_end_matches('/'));
    let agent: ureq::Agent = ureq::Agent::config_builder().timeout_global(Some(timeout)).build().into();
    let mut resp = agent.get(&url).call().map_err(|e| Error::Service(format!("{url}: {e}")))?;
    resp.body_mut().read_json::<UnifiedSnapshot>().map_err(|e| Error::Service(format!("{url}: {e}")))
}

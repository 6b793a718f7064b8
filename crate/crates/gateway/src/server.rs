use std::collections::BTreeMap;
use std::io;
use std::net::{SocketAddr, TcpListener};
use std::sync::Arc;
use std::thread::JoinHandle;

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::{HeaderMap, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::Value;
use tokio::sync::oneshot;

use crate::app::{ApiRequest, App, Method};
use crate::error::ApiError;
use crate::GatewayError;

pub const TOKEN_HEADER: &str = "X-SIAT-Token";

/// A server running on its own thread. Dropping the handle stops it.
pub struct ServerHandle {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<io::Result<()>>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Stops accepting connections and waits for in-flight requests.
    pub fn stop(mut self) -> io::Result<()> {
        self.shutdown_and_join()
    }

    /// Blocks until the server exits.
    pub fn wait(mut self) -> io::Result<()> {
        match self.thread.take() {
            Some(t) => t.join().unwrap_or_else(|_| Err(io::Error::other("server thread panicked"))),
            None => Ok(()),
        }
    }

    fn shutdown_and_join(&mut self) -> io::Result<()> {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        match self.thread.take() {
            Some(t) => t.join().unwrap_or_else(|_| Err(io::Error::other("server thread panicked"))),
            None => Ok(()),
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        let _ = self.shutdown_and_join();
    }
}

/// Binds `bind` (e.g. `127.0.0.1:0`) and serves `app` on a background thread.
pub fn spawn(app: Arc<App>, bind: &str) -> Result<ServerHandle, GatewayError> {
    let listener = TcpListener::bind(bind).map_err(|e| match e.kind() {
        io::ErrorKind::AddrInUse => GatewayError::PortInUse(bind.to_string()),
        _ => GatewayError::Io(e),
    })?;
    listener.set_nonblocking(true)?;
    let addr = listener.local_addr()?;
    let (tx, rx) = oneshot::channel::<()>();
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    let thread = std::thread::Builder::new()
        .name(format!("siat-server-{}", addr.port()))
        .spawn(move || {
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::from_std(listener)?;
                let router = axum::Router::new().fallback(dispatch).with_state(app);
                axum::serve(listener, router)
                    .with_graceful_shutdown(async {
                        let _ = rx.await;
                    })
                    .await
            })
        })?;
    Ok(ServerHandle {
        addr,
        shutdown: Some(tx),
        thread: Some(thread),
    })
}

fn reply(status: u16, body: Value) -> Response {
    let status = StatusCode::from_u16(status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    (status, Json(body)).into_response()
}

fn fail(e: ApiError) -> Response {
    reply(e.status, e.body())
}

async fn dispatch(
    State(app): State<Arc<App>>,
    method: axum::http::Method,
    uri: Uri,
    Query(query): Query<BTreeMap<String, String>>,
    headers: HeaderMap,
    body: Bytes,
) -> Response {
    let Some(method) = Method::parse(method.as_str()) else {
        return fail(ApiError::new(405, "MethodNotAllowed", format!("method {method} not supported")));
    };
    let body = if body.iter().all(u8::is_ascii_whitespace) {
        Value::Null
    } else {
        match serde_json::from_slice(&body) {
            Ok(v) => v,
            Err(e) => return fail(ApiError::bad_request(format!("request body is not JSON: {e}"))),
        }
    };
    let token = headers
        .get(TOKEN_HEADER)
        .and_then(|v| v.to_str().ok())
        .or_else(|| {
            headers
                .get(axum::http::header::AUTHORIZATION)
                .and_then(|v| v.to_str().ok())
                .and_then(|v| v.strip_prefix("Bearer "))
        })
        .map(|t| t.trim().to_string());
    let req = ApiRequest {
        method,
        path: uri.path().to_string(),
        query,
        token,
        body,
    };
    match tokio::task::spawn_blocking(move || app.handle(&req)).await {
        Ok(r) => reply(r.status, r.body),
        Err(e) => fail(ApiError::new(500, "Internal", format!("request handler failed: {e}"))),
    }
}

//! Newline-delimited JSON request/response service over a local TCP socket.
//!
//! Requests:
//!
//! ```text
//! {"authenticate": {"capture": "path/to/file.pcap"}, "window": 1.0, "threshold": 0.6}
//! {"authenticate": {"frames": [ ...CsiFrame... ]}, "permission": "door"}
//! {"load": "path/to/store.json"}
//! {"status": {}}
//! ```
//!
//! Every response is one line: `{"ok": true, ...}` or
//! `{"ok": false, "error": {"code": "...", "message": "..."}}`.

use std::io::{BufRead, BufReader, ErrorKind, Write};
use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, RwLock};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{authenticate, AuditLog, AuthDecision, AuthPolicy, EnrollmentStore, GateError};
use crate::codec::{read_capture, CsiFrame};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum AuthSource {
    Capture(PathBuf),
    Frames(Vec<CsiFrame>),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Request {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub authenticate: Option<AuthSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub permission: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub load: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceError {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision: Option<AuthDecision>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub store_version: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ready: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ServiceError>,
}

impl Response {
    fn error(code: &str, message: impl Into<String>) -> Self {
        Response {
            ok: false,
            decision: None,
            store_version: None,
            ready: None,
            error: Some(ServiceError {
                code: code.to_string(),
                message: message.into(),
            }),
        }
    }

    fn success() -> Self {
        Response {
            ok: true,
            decision: None,
            store_version: None,
            ready: None,
            error: None,
        }
    }
}

fn error_code(e: &GateError) -> &'static str {
    match e {
        GateError::WindowTooShort { .. } => "window-too-short",
        GateError::ZeroSignal => "zero-signal",
        GateError::InvalidRequest(_) => "bad-request",
        GateError::Codec(_) => "bad-capture",
        GateError::Io(_) => "io",
        _ => "internal",
    }
}

/// Shared service state: the current store and the audit trail.
pub struct Gatekeeper {
    store: RwLock<Option<Arc<EnrollmentStore>>>,
    audit: Option<AuditLog>,
}

impl Gatekeeper {
    pub fn new(store: Option<EnrollmentStore>, audit: Option<AuditLog>) -> Self {
        Gatekeeper {
            store: RwLock::new(store.map(Arc::new)),
            audit,
        }
    }

    pub fn set_store(&self, store: EnrollmentStore) {
        *self.store.write().unwrap_or_else(|p| p.into_inner()) = Some(Arc::new(store));
    }

    pub fn store(&self) -> Option<Arc<EnrollmentStore>> {
        self.store.read().unwrap_or_else(|p| p.into_inner()).clone()
    }

    pub fn flush(&self) -> Result<(), GateError> {
        match &self.audit {
            Some(a) => a.flush(),
            None => Ok(()),
        }
    }

    /// Parses and answers one request line. Never panics on bad input.
    pub fn handle_line(&self, line: &str) -> Response {
        match serde_json::from_str::<Request>(line) {
            Ok(req) => self.handle(req),
            Err(e) => Response::error("bad-request", e.to_string()),
        }
    }

    pub fn handle(&self, req: Request) -> Response {
        let actions = [
            req.authenticate.is_some(),
            req.load.is_some(),
            req.status.is_some(),
        ];
        if actions.iter().filter(|&&a| a).count() != 1 {
            return Response::error(
                "bad-request",
                "exactly one of authenticate, load, status is required",
            );
        }
        if let Some(path) = req.load {
            return match EnrollmentStore::load(&path) {
                Ok(store) => {
                    let version = store.version;
                    self.set_store(store);
                    Response {
                        store_version: Some(version),
                        ready: Some(true),
                        ..Response::success()
                    }
                }
                Err(e) => Response::error("bad-store", e.to_string()),
            };
        }
        let store = self.store();
        if req.status.is_some() {
            return Response {
                ready: Some(store.is_some()),
                store_version: store.map(|s| s.version),
                ..Response::success()
            };
        }
        let Some(store) = store else {
            return Response::error("not-ready", "no enrollment store loaded");
        };
        let source = req.authenticate.expect("checked above");
        let defaults = AuthPolicy::default();
        let policy = AuthPolicy {
            window_seconds: req.window.unwrap_or(defaults.window_seconds),
            threshold: req.threshold.unwrap_or(defaults.threshold),
            permission: req.permission,
        };
        let frames = match source {
            AuthSource::Frames(f) => f,
            AuthSource::Capture(path) => match read_capture(&path) {
                Ok(c) => c.frames,
                Err(e) => return Response::error("bad-capture", e.to_string()),
            },
        };
        if let Some(bad) = frames.iter().position(|f| f.validate().is_err()) {
            return Response::error(
                "bad-request",
                format!("frame {bad} does not carry 256 samples"),
            );
        }
        match authenticate(&store, &frames, &policy) {
            Ok(decision) => {
                if let Some(audit) = &self.audit {
                    if let Err(e) = audit.append(&decision) {
                        return Response::error("audit", e.to_string());
                    }
                }
                Response {
                    decision: Some(decision),
                    store_version: Some(store.version),
                    ..Response::success()
                }
            }
            Err(e) => Response::error(error_code(&e), e.to_string()),
        }
    }
}

fn handle_connection(stream: TcpStream, gate: &Gatekeeper, shutdown: &AtomicBool) {
    let peer = stream.peer_addr().ok();
    stream
        .set_read_timeout(Some(Duration::from_millis(200)))
        .ok();
    let Ok(mut writer) = stream.try_clone() else {
        return;
    };
    let mut reader = BufReader::new(stream);
    let mut line = String::new();
    while !shutdown.load(Ordering::SeqCst) {
        match reader.read_line(&mut line) {
            Ok(0) => break,
            Ok(_) => {
                if !line.ends_with('\n') {
                    // partial line before a timeout; keep accumulating
                    continue;
                }
                let request = line.trim();
                if !request.is_empty() {
                    let response = gate.handle_line(request);
                    let mut out = serde_json::to_string(&response).unwrap_or_else(|_| {
                        r#"{"ok":false,"error":{"code":"internal","message":"encode"}}"#.into()
                    });
                    out.push('\n');
                    if writer.write_all(out.as_bytes()).is_err() {
                        break;
                    }
                }
                line.clear();
            }
            Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => continue,
            Err(_) => break,
        }
    }
    log::debug!("connection {peer:?} closed");
}

/// Accepts connections until `shutdown` is set, then flushes the audit log.
pub fn serve(
    listener: TcpListener,
    gate: Arc<Gatekeeper>,
    shutdown: Arc<AtomicBool>,
) -> Result<(), GateError> {
    listener.set_nonblocking(true)?;
    let mut workers = Vec::new();
    while !shutdown.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, _)) => {
                stream.set_nonblocking(false)?;
                let gate = Arc::clone(&gate);
                let shutdown = Arc::clone(&shutdown);
                workers.push(thread::spawn(move || {
                    handle_connection(stream, &gate, &shutdown)
                }));
                workers.retain(|w| !w.is_finished());
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock => {
                thread::sleep(Duration::from_millis(20));
            }
            Err(e) => return Err(e.into()),
        }
    }
    for w in workers {
        let _ = w.join();
    }
    gate.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn malformed_line() {
        let gate = Gatekeeper::new(None, None);
        let r = gate.handle_line("{not json");
        assert!(!r.ok);
        assert_eq!(r.error.unwrap().code, "bad-request");
    }

    #[test]
    fn not_ready_without_store() {
        let gate = Gatekeeper::new(None, None);
        let r = gate.handle_line(r#"{"authenticate": {"capture": "x.pcap"}}"#);
        assert_eq!(r.error.unwrap().code, "not-ready");
        let s = gate.handle_line(r#"{"status": {}}"#);
        assert_eq!(s.ready, Some(false));
    }

    #[test]
    fn multiple_actions_rejected() {
        let gate = Gatekeeper::new(None, None);
        let r = gate.handle_line(r#"{"status": {}, "load": "s.json"}"#);
        assert_eq!(r.error.unwrap().code, "bad-request");
        let r = gate.handle_line(r#"{"window": 1.0}"#);
        assert_eq!(r.error.unwrap().code, "bad-request");
        let r = gate.handle_line(r#"{"status": {}, "bogus": 1}"#);
        assert_eq!(r.error.unwrap().code, "bad-request");
    }

    #[test]
    fn missing_store_file() {
        let gate = Gatekeeper::new(None, None);
        let r = gate.handle_line(r#"{"load": "/nonexistent/store.json"}"#);
        assert_eq!(r.error.unwrap().code, "bad-store");
    }
}

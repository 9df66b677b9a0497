//! Minimal blocking JSON-over-HTTP transport used by remote providers and
//! generation backends. Kept behind a trait so tests can count calls without
//! a network.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HttpError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed response: {0}")]
    Malformed(String),
}

impl HttpError {
    /// Connection failures, timeouts, 429 and 5xx are worth retrying.
    pub fn retryable(&self) -> bool {
        match self {
            HttpError::Transport(_) => true,
            HttpError::Status { status, .. } => *status == 429 || *status >= 500,
            HttpError::Malformed(_) => false,
        }
    }
}

pub trait HttpTransport: Send + Sync {
    fn post_json(
        &self,
        url: &str,
        headers: &[(String, String)],
        body: &serde_json::Value,
        timeout: Duration,
    ) -> Result<serde_json::Value, HttpError>;
}

/// Real transport on top of `ureq`.
#[derive(Debug, Default, Clone, Copy)]
pub struct UreqTransport;

impl HttpTransport for UreqTransport {
    fn post_json(
        &self,
        url: &str,
        headers: &[(String, String)],
        body: &serde_json::Value,
        timeout: Duration,
    ) -> Result<serde_json::Value, HttpError> {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build();
        let agent: ureq::Agent = config.into();
        let mut req = agent.post(url);
        for (k, v) in headers {
            req = req.header(k.as_str(), v.as_str());
        }
        let mut resp = req.send_json(body).map_err(|e| HttpError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| HttpError::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(HttpError::Status { status, body: text });
        }
        serde_json::from_str(&text).map_err(|e| HttpError::Malformed(e.to_string()))
    }
}

/// Call `f` up to `attempts` times while it fails with a retryable error.
pub fn with_retries<T>(attempts: usize, mut f: impl FnMut() -> Result<T, HttpError>) -> Result<T, HttpError> {
    let mut last = None;
    for attempt in 0..attempts.max(1) {
        match f() {
            Ok(v) => return Ok(v),
            Err(e) if e.retryable() => {
                log::warn!("attempt {} failed: {e}", attempt + 1);
                last = Some(e);
            }
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

/// Scripted transport for tests: replays canned replies and counts calls.
pub struct StubTransport {
    replies: Mutex<Box<dyn FnMut(&serde_json::Value) -> Result<serde_json::Value, HttpError> + Send>>,
    calls: AtomicUsize,
    last_headers: Mutex<Vec<(String, String)>>,
}

impl StubTransport {
    pub fn new(f: impl FnMut(&serde_json::Value) -> Result<serde_json::Value, HttpError> + Send + 'static) -> Self {
        StubTransport {
            replies: Mutex::new(Box::new(f)),
            calls: AtomicUsize::new(0),
            last_headers: Mutex::new(Vec::new()),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn last_headers(&self) -> Vec<(String, String)> {
        self.last_headers.lock().unwrap().clone()
    }
}

impl HttpTransport for StubTransport {
    fn post_json(
        &self,
        _url: &str,
        headers: &[(String, String)],
        body: &serde_json::Value,
        _timeout: Duration,
    ) -> Result<serde_json::Value, HttpError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        *self.last_headers.lock().unwrap() = headers.to_vec();
        (self.replies.lock().unwrap())(body)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn retries_only_retryable_errors() {
        let mut n = 0;
        let r = with_retries(3, || {
            n += 1;
            if n < 3 {
                Err(HttpError::Status { status: 503, body: String::new() })
            } else {
                Ok(n)
            }
        });
        assert_eq!(r, Ok(3));
        let mut m = 0;
        let r: Result<(), _> = with_retries(3, || {
            m += 1;
            Err(HttpError::Status { status: 400, body: "bad".into() })
        });
        assert!(r.is_err());
        assert_eq!(m, 1);
    }

    #[test]
    fn unreachable_host_is_retryable_transport_error() {
        let err = UreqTransport
            .post_json("http://127.0.0.1:9/x", &[], &serde_json::json!({}), Duration::from_millis(500))
            .unwrap_err();
        assert!(err.retryable(), "{err:?}");
    }
}

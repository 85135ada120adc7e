//! JSON-over-HTTP endpoints shared by scorers, generators, reward models,
//! log-prob providers and embedding providers, with retry and backoff.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EndpointError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("request timed out")]
    Timeout,
    #[error("endpoint returned HTTP {0}")]
    Status(u16),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("gave up after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: Box<EndpointError> },
}

impl EndpointError {
    /// Transport failures, timeouts and 5xx/429 responses are retried;
    /// protocol violations are not.
    pub fn is_retryable(&self) -> bool {
        match self {
            EndpointError::Transport(_) | EndpointError::Timeout => true,
            EndpointError::Status(s) => *s >= 500 || *s == 429,
            EndpointError::Protocol(_) | EndpointError::RetriesExhausted { .. } => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 3,
            base_delay_ms: 200,
            max_delay_ms: 5_000,
        }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        RetryPolicy {
            max_retries: 0,
            ..RetryPolicy::default()
        }
    }

    /// Immediate retries; for tests and mocks.
    pub fn immediate(max_retries: u32) -> Self {
        RetryPolicy {
            max_retries,
            base_delay_ms: 0,
            max_delay_ms: 0,
        }
    }

    fn delay(&self, attempt: u32) -> Duration {
        let ms = self
            .base_delay_ms
            .saturating_mul(1u64 << attempt.min(20))
            .min(self.max_delay_ms);
        Duration::from_millis(ms)
    }
}

/// A successful result and the number of retries it took.
#[derive(Debug, Clone, PartialEq)]
pub struct Retried<T> {
    pub value: T,
    pub retries: u32,
}

/// Runs `op` until it succeeds, fails with a non-retryable error, or the
/// retry budget is spent. Delays double from `base_delay_ms`.
pub fn with_retry<T>(
    policy: &RetryPolicy,
    mut op: impl FnMut() -> Result<T, EndpointError>,
) -> Result<Retried<T>, EndpointError> {
    let mut retries = 0;
    loop {
        match op() {
            Ok(value) => return Ok(Retried { value, retries }),
            Err(e) if e.is_retryable() && retries < policy.max_retries => {
                std::thread::sleep(policy.delay(retries));
                retries += 1;
            }
            Err(e) if e.is_retryable() => {
                return Err(EndpointError::RetriesExhausted {
                    attempts: retries + 1,
                    last: Box::new(e),
                })
            }
            Err(e) => return Err(e),
        }
    }
}

/// A JSON POST endpoint.
#[derive(Clone)]
pub struct JsonEndpoint {
    url: String,
    agent: ureq::Agent,
}

impl std::fmt::Debug for JsonEndpoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("JsonEndpoint").field("url", &self.url).finish()
    }
}

impl JsonEndpoint {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .new_agent();
        JsonEndpoint {
            url: url.into(),
            agent,
        }
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    pub fn post<Q: Serialize, R: DeserializeOwned>(&self, body: &Q) -> Result<R, EndpointError> {
        let mut resp = self.agent.post(&self.url).send_json(body).map_err(map_ureq)?;
        resp.body_mut().read_json::<R>().map_err(|e| match e {
            ureq::Error::Json(e) => EndpointError::Protocol(format!("malformed response: {e}")),
            other => map_ureq(other),
        })
    }
}

fn map_ureq(e: ureq::Error) -> EndpointError {
    match e {
        ureq::Error::StatusCode(code) => EndpointError::Status(code),
        ureq::Error::Timeout(_) => EndpointError::Timeout,
        ureq::Error::Json(e) => EndpointError::Protocol(e.to_string()),
        other => EndpointError::Transport(other.to_string()),
    }
}

/// Minimal single-purpose HTTP/1.1 server for exercising the wire
/// protocols without a real model service. Each POST body is parsed as
/// JSON and handed to the handler with the request path; the handler
/// returns a status code and a JSON body.
pub struct MockHttpServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

type Handler = dyn Fn(&str, serde_json::Value) -> (u16, serde_json::Value) + Send + Sync;

impl MockHttpServer {
    pub fn start<F>(handler: F) -> std::io::Result<Self>
    where
        F: Fn(&str, serde_json::Value) -> (u16, serde_json::Value) + Send + Sync + 'static,
    {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let handler: Arc<Handler> = Arc::new(handler);
        let stop2 = stop.clone();
        let handle = std::thread::spawn(move || {
            while !stop2.load(Ordering::Relaxed) {
                match listener.accept() {
                    Ok((stream, _)) => {
                        let h = handler.clone();
                        std::thread::spawn(move || {
                            let _ = serve_one(stream, &*h);
                        });
                    }
                    Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                        std::thread::sleep(Duration::from_millis(2));
                    }
                    Err(_) => break,
                }
            }
        });
        Ok(MockHttpServer {
            addr,
            stop,
            handle: Some(handle),
        })
    }

    pub fn url(&self, path: &str) -> String {
        format!("http://{}{}", self.addr, path)
    }
}

impl Drop for MockHttpServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn serve_one(stream: TcpStream, handler: &Handler) -> std::io::Result<()> {
    stream.set_nonblocking(false)?;
    let mut reader = BufReader::new(stream.try_clone()?);
    loop {
        let mut request_line = String::new();
        if reader.read_line(&mut request_line)? == 0 {
            return Ok(());
        }
        let path = request_line
            .split_whitespace()
            .nth(1)
            .unwrap_or("/")
            .to_string();
        let mut content_length = 0usize;
        let mut close = false;
        loop {
            let mut line = String::new();
            reader.read_line(&mut line)?;
            let line = line.trim_end();
            if line.is_empty() {
                break;
            }
            let lower = line.to_ascii_lowercase();
            if let Some(v) = lower.strip_prefix("content-length:") {
                content_length = v.trim().parse().unwrap_or(0);
            }
            if lower.starts_with("connection:") && lower.contains("close") {
                close = true;
            }
        }
        let mut body = vec![0u8; content_length];
        reader.read_exact(&mut body)?;
        let value = serde_json::from_slice(&body).unwrap_or(serde_json::Value::Null);
        let (status, resp) = handler(&path, value);
        let payload = serde_json::to_vec(&resp).unwrap_or_default();
        let mut out = stream.try_clone()?;
        write!(
            out,
            "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\n\r\n",
            payload.len()
        )?;
        out.write_all(&payload)?;
        out.flush()?;
        if close {
            return Ok(());
        }
    }
}

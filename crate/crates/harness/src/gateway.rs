//! Chat-completion client: transport retries with backoff, an in-flight
//! limit, and record/replay cassettes.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use log::{debug, warn};
use proact_core::chat::{hash_request, ChannelError, ChatChannel, ChatRequest};
use serde::{Deserialize, Serialize};

pub const API_KEY_ENV: &str = "PROACT_API_KEY";
pub const DEFAULT_RETRY_BUDGET: u32 = 3;
pub const DEFAULT_TIMEOUT_SECS: u64 = 120;
pub const DEFAULT_IN_FLIGHT: usize = 8;

/// One network hop. Implementations perform a single attempt; retrying is
/// the gateway's job.
pub trait Transport: Send + Sync {
    fn send(&self, req: &ChatRequest) -> Result<String, ChannelError>;
}

/// OpenAI-style `POST {base}/chat/completions`.
pub struct HttpTransport {
    client: reqwest::blocking::Client,
    url: String,
    api_key: Option<String>,
}

impl std::fmt::Debug for HttpTransport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpTransport")
            .field("url", &self.url)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .finish()
    }
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: &'a [proact_core::chat::ChatMessage],
    temperature: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_tokens: Option<u32>,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    #[serde(default)]
    content: Option<String>,
}

impl HttpTransport {
    /// Reads the key from `PROACT_API_KEY`; a missing key is allowed for
    /// local servers that do not check it.
    pub fn new(base_url: &str, timeout: Duration) -> Result<HttpTransport, ChannelError> {
        let api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        HttpTransport::with_key(base_url, timeout, api_key)
    }

    pub fn with_key(base_url: &str, timeout: Duration, api_key: Option<String>) -> Result<HttpTransport, ChannelError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| ChannelError::Transport(e.to_string()))?;
        let url = format!("{}/chat/completions", base_url.trim_end_matches('/'));
        Ok(HttpTransport { client, url, api_key })
    }
}

impl Transport for HttpTransport {
    fn send(&self, req: &ChatRequest) -> Result<String, ChannelError> {
        let body = WireRequest {
            model: &req.model,
            messages: &req.messages,
            temperature: req.temperature,
            max_tokens: req.max_output,
        };
        let mut call = self.client.post(&self.url).json(&body);
        if let Some(key) = &self.api_key {
            call = call.bearer_auth(key);
        }
        // reqwest error texts carry the URL only, never headers.
        let resp = call.send().map_err(|e| ChannelError::Transport(e.without_url().to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| ChannelError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(ChannelError::Provider { status: status.as_u16(), body: truncate(&text, 500) });
        }
        let parsed: WireResponse = serde_json::from_str(&text)
            .map_err(|e| ChannelError::Provider { status: status.as_u16(), body: format!("unreadable body: {e}") })?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| ChannelError::Provider { status: status.as_u16(), body: "no choices in response".into() })
    }
}

/// Stand-in used when no endpoint is configured; every call fails.
pub struct NoTransport;

impl Transport for NoTransport {
    fn send(&self, _: &ChatRequest) -> Result<String, ChannelError> {
        Err(ChannelError::InvalidRequest("no provider endpoint configured".into()))
    }
}

fn truncate(s: &str, max: usize) -> String {
    match s.char_indices().nth(max) {
        Some((i, _)) => format!("{}...", &s[..i]),
        None => s.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum CassetteMode {
    Record,
    Replay,
    Passthrough,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestSummary {
    pub model: String,
    pub messages: usize,
    pub temperature: f64,
    pub last_role: Option<proact_core::chat::ChatRole>,
}

impl RequestSummary {
    fn of(req: &ChatRequest) -> RequestSummary {
        RequestSummary {
            model: req.model.clone(),
            messages: req.messages.len(),
            temperature: req.temperature,
            last_role: req.messages.last().map(|m| m.role),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CassetteEntry {
    pub hash: String,
    pub request_summary: RequestSummary,
    pub response: String,
}

#[derive(Debug, thiserror::Error)]
pub enum CassetteError {
    #[error("cassette {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cassette {path} line {line}: {source}")]
    Parse { path: PathBuf, line: usize, source: serde_json::Error },
}

/// Recorded responses keyed by request hash, backed by a JSONL file.
pub struct Cassette {
    pub mode: CassetteMode,
    path: PathBuf,
    entries: Mutex<HashMap<String, String>>,
    writer: Mutex<Option<File>>,
}

impl Cassette {
    /// Loads `path` if it exists. Replay mode needs the file; record mode
    /// creates it.
    pub fn open(path: &Path, mode: CassetteMode) -> Result<Cassette, CassetteError> {
        let io = |source| CassetteError::Io { path: path.to_path_buf(), source };
        let mut entries = HashMap::new();
        if path.exists() || mode == CassetteMode::Replay {
            let file = File::open(path).map_err(io)?;
            for (i, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(io)?;
                if line.trim().is_empty() {
                    continue;
                }
                let e: CassetteEntry = serde_json::from_str(&line)
                    .map_err(|source| CassetteError::Parse { path: path.to_path_buf(), line: i + 1, source })?;
                entries.entry(e.hash).or_insert(e.response);
            }
        }
        let writer = match mode {
            CassetteMode::Record => Some(OpenOptions::new().create(true).append(true).open(path).map_err(io)?),
            _ => None,
        };
        Ok(Cassette { mode, path: path.to_path_buf(), entries: Mutex::new(entries), writer: Mutex::new(writer) })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn lookup(&self, hash: &str) -> Option<String> {
        self.entries.lock().unwrap().get(hash).cloned()
    }

    fn record(&self, req: &ChatRequest, hash: &str, response: &str) -> Result<(), ChannelError> {
        let mut entries = self.entries.lock().unwrap();
        if entries.contains_key(hash) {
            return Ok(());
        }
        let entry = CassetteEntry {
            hash: hash.to_string(),
            request_summary: RequestSummary::of(req),
            response: response.to_string(),
        };
        let mut line = serde_json::to_string(&entry).expect("entry serializes");
        line.push('\n');
        if let Some(f) = self.writer.lock().unwrap().as_mut() {
            f.write_all(line.as_bytes())
                .and_then(|_| f.flush())
                .map_err(|e| ChannelError::Transport(format!("cassette write failed: {e}")))?;
        }
        entries.insert(hash.to_string(), response.to_string());
        Ok(())
    }
}

/// Counting semaphore bounding concurrent transport calls.
struct Limiter {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Limiter {
    fn new(n: usize) -> Limiter {
        Limiter { free: Mutex::new(n.max(1)), cv: Condvar::new() }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap();
        while *free == 0 {
            free = self.cv.wait(free).unwrap();
        }
        *free -= 1;
        Permit(self)
    }
}

struct Permit<'a>(&'a Limiter);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap() += 1;
        self.0.cv.notify_one();
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    /// Retries after the first attempt.
    pub budget: u32,
    pub initial_backoff: Duration,
    pub max_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> RetryPolicy {
        RetryPolicy {
            budget: DEFAULT_RETRY_BUDGET,
            initial_backoff: Duration::from_millis(500),
            max_backoff: Duration::from_secs(8),
        }
    }
}

impl RetryPolicy {
    pub fn immediate(budget: u32) -> RetryPolicy {
        RetryPolicy { budget, initial_backoff: Duration::ZERO, max_backoff: Duration::ZERO }
    }

    fn delay(&self, retry: u32) -> Duration {
        self.initial_backoff.saturating_mul(1 << retry.min(16)).min(self.max_backoff)
    }
}

pub struct Gateway {
    transport: Box<dyn Transport>,
    cassette: Option<Arc<Cassette>>,
    retry: RetryPolicy,
    limiter: Limiter,
}

impl Gateway {
    pub fn new(transport: Box<dyn Transport>, retry: RetryPolicy, in_flight: usize) -> Gateway {
        Gateway { transport, cassette: None, retry, limiter: Limiter::new(in_flight) }
    }

    /// Several gateways may share one cassette file.
    pub fn with_cassette(mut self, cassette: Arc<Cassette>) -> Gateway {
        self.cassette = Some(cassette);
        self
    }

    pub fn cassette(&self) -> Option<&Cassette> {
        self.cassette.as_deref()
    }

    fn send_with_retries(&self, req: &ChatRequest) -> Result<String, ChannelError> {
        let _permit = self.limiter.acquire();
        let mut retry = 0;
        loop {
            match self.transport.send(req) {
                Ok(text) => return Ok(text),
                Err(e) if e.is_transient() && retry < self.retry.budget => {
                    let wait = self.retry.delay(retry);
                    warn!("transport attempt {} failed ({e}); retrying in {wait:?}", retry + 1);
                    std::thread::sleep(wait);
                    retry += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

impl ChatChannel for Gateway {
    fn complete(&self, req: &ChatRequest) -> Result<String, ChannelError> {
        req.check()?;
        let hash = hash_request(req);
        match &self.cassette {
            Some(c) if c.mode != CassetteMode::Passthrough => {
                if let Some(hit) = c.lookup(&hash) {
                    debug!("cassette hit {hash}");
                    return Ok(hit);
                }
                if c.mode == CassetteMode::Replay {
                    return Err(ChannelError::CassetteMiss(hash));
                }
                let text = self.send_with_retries(req)?;
                c.record(req, &hash, &text)?;
                Ok(text)
            }
            _ => self.send_with_retries(req),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proact_core::chat::{ChatMessage, ChatRole};
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn req(text: &str) -> ChatRequest {
        ChatRequest {
            model: "m".into(),
            messages: vec![ChatMessage::new(ChatRole::User, text)],
            temperature: 0.2,
            max_output: None,
        }
    }

    struct Counting(Arc<AtomicUsize>);

    impl Transport for Counting {
        fn send(&self, r: &ChatRequest) -> Result<String, ChannelError> {
            self.0.fetch_add(1, Ordering::SeqCst);
            Ok(format!("echo {}", r.messages[0].content))
        }
    }

    #[test]
    fn backoff_doubles_and_caps() {
        let p = RetryPolicy { budget: 5, initial_backoff: Duration::from_millis(100), max_backoff: Duration::from_millis(350) };
        assert_eq!(p.delay(0), Duration::from_millis(100));
        assert_eq!(p.delay(1), Duration::from_millis(200));
        assert_eq!(p.delay(2), Duration::from_millis(350));
    }

    #[test]
    fn non_transient_errors_are_not_retried() {
        struct Bad(Arc<AtomicUsize>);
        impl Transport for Bad {
            fn send(&self, _: &ChatRequest) -> Result<String, ChannelError> {
                self.0.fetch_add(1, Ordering::SeqCst);
                Err(ChannelError::Provider { status: 401, body: "unauthorized".into() })
            }
        }
        let n = Arc::new(AtomicUsize::new(0));
        let gw = Gateway::new(Box::new(Bad(n.clone())), RetryPolicy::immediate(3), 1);
        assert!(matches!(gw.complete(&req("a")), Err(ChannelError::Provider { status: 401, .. })));
        assert_eq!(n.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn record_then_replay_without_network() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let n = Arc::new(AtomicUsize::new(0));
        let gw = Gateway::new(Box::new(Counting(n.clone())), RetryPolicy::immediate(0), 2)
            .with_cassette(Arc::new(Cassette::open(&path, CassetteMode::Record).unwrap()));
        assert_eq!(gw.complete(&req("a")).unwrap(), "echo a");
        assert_eq!(gw.complete(&req("a")).unwrap(), "echo a");
        assert_eq!(n.load(Ordering::SeqCst), 1);
        drop(gw);

        let gw = Gateway::new(Box::new(Counting(n.clone())), RetryPolicy::immediate(0), 2)
            .with_cassette(Arc::new(Cassette::open(&path, CassetteMode::Replay).unwrap()));
        assert_eq!(gw.complete(&req("a")).unwrap(), "echo a");
        assert!(matches!(gw.complete(&req("b")), Err(ChannelError::CassetteMiss(_))));
        assert_eq!(n.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn replay_requires_the_file() {
        let dir = tempfile::tempdir().unwrap();
        assert!(Cassette::open(&dir.path().join("none.jsonl"), CassetteMode::Replay).is_err());
    }

    #[test]
    fn invalid_requests_never_reach_the_transport() {
        let n = Arc::new(AtomicUsize::new(0));
        let gw = Gateway::new(Box::new(Counting(n.clone())), RetryPolicy::immediate(0), 1);
        let mut r = req("a");
        r.temperature = 3.0;
        assert!(matches!(gw.complete(&r), Err(ChannelError::InvalidRequest(_))));
        assert_eq!(n.load(Ordering::SeqCst), 0);
    }

    #[test]
    fn limiter_bounds_concurrency() {
        struct Slow {
            now: AtomicUsize,
            peak: AtomicUsize,
        }
        impl Transport for Arc<Slow> {
            fn send(&self, _: &ChatRequest) -> Result<String, ChannelError> {
                let cur = self.now.fetch_add(1, Ordering::SeqCst) + 1;
                self.peak.fetch_max(cur, Ordering::SeqCst);
                std::thread::sleep(Duration::from_millis(5));
                self.now.fetch_sub(1, Ordering::SeqCst);
                Ok(String::new())
            }
        }
        let slow = Arc::new(Slow { now: AtomicUsize::new(0), peak: AtomicUsize::new(0) });
        let gw = Gateway::new(Box::new(slow.clone()), RetryPolicy::immediate(0), 2);
        std::thread::scope(|s| {
            for i in 0..8 {
                let gw = &gw;
                s.spawn(move || gw.complete(&req(&i.to_string())).unwrap());
            }
        });
        assert!(slow.peak.load(Ordering::SeqCst) <= 2);
    }

    #[test]
    fn debug_output_hides_the_key() {
        let t = HttpTransport::with_key("http://localhost:1", Duration::from_secs(1), Some("sk-secret".into())).unwrap();
        assert!(!format!("{t:?}").contains("sk-secret"));
    }
}

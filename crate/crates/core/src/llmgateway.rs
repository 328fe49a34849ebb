//! Completion backends (HTTP, scripted mock) behind a content-hash cache.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::jsonl::{append_jsonl, read_jsonl, JsonlError};

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("no scripted completion for prompt hash {hash}")]
    UnknownPrompt { hash: String },
    #[error("environment variable {0} holding the API key is not set")]
    MissingKey(String),
    #[error("authentication failed ({status}): {body}")]
    Auth { status: u16, body: String },
    #[error("rate limited; gave up after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("endpoint returned {status}: {body}")]
    Http { status: u16, body: String },
    #[error("transport error after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("malformed endpoint response: {0}")]
    BadResponse(String),
    #[error(transparent)]
    Store(#[from] JsonlError),
}

fn default_max_tokens() -> u32 {
    512
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    pub model_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop: Option<Vec<String>>,
}

impl CompletionRequest {
    pub fn new(prompt: impl Into<String>, model_name: impl Into<String>) -> Self {
        Self {
            prompt: prompt.into(),
            temperature: 0.0,
            max_tokens: default_max_tokens(),
            model_name: model_name.into(),
            stop: None,
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.prompt.is_empty() {
            return Err(GatewayError::InvalidRequest("empty prompt".into()));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(GatewayError::InvalidRequest(format!(
                "temperature must be >= 0, got {}",
                self.temperature
            )));
        }
        Ok(())
    }

    /// Cache key: sha256 over the canonical JSON of every request field.
    pub fn hash(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("request serializes").as_bytes())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionResult {
    pub text: String,
    pub cached: bool,
    pub latency_ms: u64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Key of a mock script entry.
pub fn prompt_hash(prompt: &str) -> String {
    sha256_hex(prompt.as_bytes())
}

pub trait Backend: Send + Sync {
    fn complete(&self, req: &CompletionRequest) -> Result<String, GatewayError>;
}

/// One line of a mock script.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockEntry {
    pub prompt_hash: String,
    pub completion: String,
}

/// Replays scripted completions keyed by prompt hash; never invents text.
#[derive(Debug, Clone, Default)]
pub struct MockBackend {
    script: HashMap<String, String>,
}

impl MockBackend {
    pub fn new(entries: impl IntoIterator<Item = MockEntry>) -> Self {
        Self {
            script: entries.into_iter().map(|e| (e.prompt_hash, e.completion)).collect(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        Ok(Self::new(read_jsonl::<MockEntry>(path)?))
    }

    pub fn len(&self) -> usize {
        self.script.len()
    }

    pub fn is_empty(&self) -> bool {
        self.script.is_empty()
    }
}

impl Backend for MockBackend {
    fn complete(&self, req: &CompletionRequest) -> Result<String, GatewayError> {
        let hash = prompt_hash(&req.prompt);
        self.script
            .get(&hash)
            .cloned()
            .ok_or(GatewayError::UnknownPrompt { hash })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpConfig {
    /// Base URL; requests go to `{base_url}/completions`.
    pub base_url: String,
    pub api_key_env: String,
    pub max_in_flight: usize,
    pub max_attempts: u32,
    pub backoff_ms: u64,
    pub timeout_secs: u64,
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com/v1".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            max_in_flight: 4,
            max_attempts: 3,
            backoff_ms: 1000,
            timeout_secs: 120,
        }
    }
}

struct Semaphore {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Semaphore {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> SemaphoreGuard<'_> {
        let mut free = self.free.lock().expect("semaphore poisoned");
        while *free == 0 {
            free = self.cv.wait(free).expect("semaphore poisoned");
        }
        *free -= 1;
        SemaphoreGuard(self)
    }
}

struct SemaphoreGuard<'a>(&'a Semaphore);

impl Drop for SemaphoreGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("semaphore poisoned") += 1;
        self.0.cv.notify_one();
    }
}

/// Text-completion endpoint (`{model, prompt, temperature, max_tokens, stop}`
/// in, `choices[0].text` out).
pub struct HttpBackend {
    config: HttpConfig,
    key: String,
    agent: ureq::Agent,
    slots: Semaphore,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    prompt: &'a str,
    temperature: f64,
    max_tokens: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    stop: Option<&'a [String]>,
}

#[derive(Deserialize)]
struct WireChoice {
    text: String,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

enum Attempt {
    Done(String),
    Retry(GatewayError),
    Fail(GatewayError),
}

impl HttpBackend {
    /// Reads the API key from the configured environment variable.
    pub fn new(config: HttpConfig) -> Result<Self, GatewayError> {
        let key =
            std::env::var(&config.api_key_env).map_err(|_| GatewayError::MissingKey(config.api_key_env.clone()))?;
        Ok(Self::with_key(config, key))
    }

    pub fn with_key(config: HttpConfig, key: String) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            slots: Semaphore::new(config.max_in_flight),
            config,
            key,
            agent,
        }
    }

    fn attempt(&self, req: &CompletionRequest) -> Attempt {
        let url = format!("{}/completions", self.config.base_url.trim_end_matches('/'));
        let body = WireRequest {
            model: &req.model_name,
            prompt: &req.prompt,
            temperature: req.temperature,
            max_tokens: req.max_tokens,
            stop: req.stop.as_deref(),
        };
        let _slot = self.slots.acquire();
        let mut resp = match self
            .agent
            .post(&url)
            .header("Authorization", format!("Bearer {}", self.key))
            .send_json(&body)
        {
            Ok(r) => r,
            Err(e) => {
                return Attempt::Retry(GatewayError::Transport {
                    attempts: 0,
                    message: e.to_string(),
                })
            }
        };
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().unwrap_or_default();
        match status {
            200..=299 => match serde_json::from_str::<WireResponse>(&text) {
                Ok(w) => match w.choices.into_iter().next() {
                    Some(c) => Attempt::Done(c.text),
                    None => Attempt::Fail(GatewayError::BadResponse("no choices".into())),
                },
                Err(e) => Attempt::Fail(GatewayError::BadResponse(e.to_string())),
            },
            401 | 403 => Attempt::Fail(GatewayError::Auth { status, body: text }),
            429 => Attempt::Retry(GatewayError::RateLimited { attempts: 0 }),
            500..=599 => Attempt::Retry(GatewayError::Http { status, body: text }),
            _ => Attempt::Fail(GatewayError::Http { status, body: text }),
        }
    }
}

impl Backend for HttpBackend {
    fn complete(&self, req: &CompletionRequest) -> Result<String, GatewayError> {
        let attempts = self.config.max_attempts.max(1);
        let mut last = None;
        for i in 0..attempts {
            if i > 0 {
                let wait = self.config.backoff_ms.saturating_mul(1 << (i - 1));
                thread::sleep(Duration::from_millis(wait));
            }
            match self.attempt(req) {
                Attempt::Done(t) => return Ok(t),
                Attempt::Fail(e) => return Err(e),
                Attempt::Retry(e) => {
                    tracing::warn!(attempt = i + 1, error = %e, "completion attempt failed");
                    last = Some(e);
                }
            }
        }
        Err(match last.expect("at least one attempt") {
            GatewayError::RateLimited { .. } => GatewayError::RateLimited { attempts },
            GatewayError::Transport { message, .. } => GatewayError::Transport { attempts, message },
            other => other,
        })
    }
}

/// One line of the response cache.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub request_hash: String,
    pub completion: String,
}

/// Append-only completion cache; the first entry for a hash wins.
#[derive(Debug, Default)]
pub struct ResponseCache {
    path: Option<PathBuf>,
    entries: Mutex<HashMap<String, String>>,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn open(path: &Path) -> Result<Self, GatewayError> {
        let mut entries = HashMap::new();
        if path.exists() {
            for e in read_jsonl::<CacheEntry>(path)? {
                entries.entry(e.request_hash).or_insert(e.completion);
            }
        }
        Ok(Self {
            path: Some(path.to_path_buf()),
            entries: Mutex::new(entries),
        })
    }

    pub fn get(&self, hash: &str) -> Option<String> {
        self.entries.lock().expect("cache poisoned").get(hash).cloned()
    }

    /// Record a completion; the lock also serializes file appends.
    pub fn insert(&self, hash: &str, completion: &str) -> Result<(), GatewayError> {
        let mut entries = self.entries.lock().expect("cache poisoned");
        if entries.contains_key(hash) {
            return Ok(());
        }
        if let Some(path) = &self.path {
            append_jsonl(
                path,
                &CacheEntry {
                    request_hash: hash.to_string(),
                    completion: completion.to_string(),
                },
            )?;
        }
        entries.insert(hash.to_string(), completion.to_string());
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Cache in front of a backend. Safe to share between threads.
pub struct Gateway {
    backend: Box<dyn Backend>,
    cache: ResponseCache,
    backend_calls: AtomicUsize,
}

impl Gateway {
    pub fn new(backend: Box<dyn Backend>, cache: ResponseCache) -> Self {
        Self {
            backend,
            cache,
            backend_calls: AtomicUsize::new(0),
        }
    }

    pub fn complete(&self, req: &CompletionRequest) -> Result<CompletionResult, GatewayError> {
        req.validate()?;
        let start = Instant::now();
        let key = req.hash();
        if let Some(text) = self.cache.get(&key) {
            return Ok(CompletionResult {
                text,
                cached: true,
                latency_ms: start.elapsed().as_millis() as u64,
            });
        }
        self.backend_calls.fetch_add(1, Ordering::Relaxed);
        let text = self.backend.complete(req)?;
        self.cache.insert(&key, &text)?;
        Ok(CompletionResult {
            text,
            cached: false,
            latency_ms: start.elapsed().as_millis() as u64,
        })
    }

    /// Requests that missed the cache and reached the backend.
    pub fn backend_calls(&self) -> usize {
        self.backend_calls.load(Ordering::Relaxed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;

    fn mock(p: &str, c: &str) -> MockBackend {
        MockBackend::new([MockEntry {
            prompt_hash: prompt_hash(p),
            completion: c.into(),
        }])
    }

    #[test]
    fn hash_is_stable() {
        assert_eq!(
            prompt_hash("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        let r = CompletionRequest::new("p", "m");
        assert_eq!(r.hash(), r.clone().hash());
        let mut r2 = r.clone();
        r2.temperature = 0.5;
        assert_ne!(r.hash(), r2.hash());
    }

    #[test]
    fn mock_replays_and_rejects_unknown() {
        let m = mock("p", "42");
        assert_eq!(m.complete(&CompletionRequest::new("p", "m")).unwrap(), "42");
        let err = m.complete(&CompletionRequest::new("q", "m")).unwrap_err();
        assert!(err.to_string().contains(&prompt_hash("q")));
    }

    #[test]
    fn second_call_is_cached() {
        let g = Gateway::new(Box::new(mock("p", "42")), ResponseCache::in_memory());
        let req = CompletionRequest::new("p", "m");
        let a = g.complete(&req).unwrap();
        let b = g.complete(&req).unwrap();
        assert!(!a.cached && b.cached);
        assert_eq!(a.text, b.text);
        assert_eq!(g.backend_calls(), 1);
    }

    #[test]
    fn cache_file_survives_restart() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        let req = CompletionRequest::new("p", "m");
        {
            let g = Gateway::new(Box::new(mock("p", "42")), ResponseCache::open(&path).unwrap());
            g.complete(&req).unwrap();
        }
        let g = Gateway::new(Box::new(MockBackend::default()), ResponseCache::open(&path).unwrap());
        let r = g.complete(&req).unwrap();
        assert!(r.cached);
        assert_eq!(r.text, "42");
        assert_eq!(g.backend_calls(), 0);
    }

    #[test]
    fn rejects_invalid_request() {
        let g = Gateway::new(Box::new(MockBackend::default()), ResponseCache::in_memory());
        assert!(g.complete(&CompletionRequest::new("", "m")).is_err());
        let mut r = CompletionRequest::new("p", "m");
        r.temperature = -1.0;
        assert!(matches!(g.complete(&r), Err(GatewayError::InvalidRequest(_))));
    }

    /// Serve canned HTTP responses in order, one per connection.
    fn serve(responses: Vec<(u16, &'static str)>) -> (String, thread::JoinHandle<Vec<String>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let handle = thread::spawn(move || {
            let mut bodies = Vec::new();
            for (status, body) in responses {
                let (stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0;
                let mut auth = String::new();
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    let lower = line.to_ascii_lowercase();
                    if let Some(v) = lower.strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                    if lower.starts_with("authorization:") {
                        auth = line.trim().to_string();
                    }
                    if line == "\r\n" {
                        break;
                    }
                }
                let mut buf = vec![0; len];
                reader.read_exact(&mut buf).unwrap();
                bodies.push(format!("{auth}\n{}", String::from_utf8(buf).unwrap()));
                let mut s = stream;
                write!(
                    s,
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                )
                .unwrap();
            }
            bodies
        });
        (url, handle)
    }

    fn http(url: String) -> HttpBackend {
        HttpBackend::with_key(
            HttpConfig {
                base_url: url,
                backoff_ms: 1,
                ..Default::default()
            },
            "sk-test".into(),
        )
    }

    #[test]
    fn http_retries_rate_limits() {
        let (url, h) = serve(vec![
            (429, "{}"),
            (503, "busy"),
            (200, r#"{"choices":[{"text":" 94"}]}"#),
        ]);
        let text = http(url)
            .complete(&CompletionRequest::new("p", "text-davinci-003"))
            .unwrap();
        assert_eq!(text, " 94");
        let bodies = h.join().unwrap();
        assert_eq!(bodies.len(), 3);
        let (auth, json) = bodies[2].split_once('\n').unwrap();
        let sent: serde_json::Value = serde_json::from_str(json).unwrap();
        assert_eq!(auth, "authorization: Bearer sk-test");
        assert_eq!(sent["temperature"], 0.0);
        assert_eq!(sent["model"], "text-davinci-003");
    }

    #[test]
    fn http_gives_up_after_three_attempts() {
        let (url, h) = serve(vec![(429, "{}"), (429, "{}"), (429, "{}")]);
        let err = http(url).complete(&CompletionRequest::new("p", "m")).unwrap_err();
        assert!(matches!(err, GatewayError::RateLimited { attempts: 3 }));
        h.join().unwrap();
    }

    #[test]
    fn http_auth_failure_is_not_retried() {
        let (url, h) = serve(vec![(401, "bad key")]);
        let err = http(url).complete(&CompletionRequest::new("p", "m")).unwrap_err();
        assert!(matches!(err, GatewayError::Auth { status: 401, .. }));
        h.join().unwrap();
    }
}

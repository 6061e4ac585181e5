use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub role: String,
    pub content: String,
}

/// OpenAI-compatible chat-completions request body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub messages: Vec<Message>,
}

impl ChatRequest {
    /// Content hash used as the journal key.
    pub fn key(&self) -> String {
        let body = serde_json::to_vec(self).expect("request serializes");
        hex::encode(Sha256::digest(&body))
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum TransportError {
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("network error: {0}")]
    Network(String),
    #[error("unexpected response body: {0}")]
    Decode(String),
    #[error("no recorded response for request {0}")]
    ReplayMiss(String),
    #[error("journal error: {0}")]
    Journal(String),
    #[error("missing API key: environment variable {0} is not set")]
    MissingApiKey(String),
}

impl TransportError {
    /// Rate limits, server errors and network failures are worth retrying.
    pub fn is_retryable(&self) -> bool {
        match self {
            TransportError::Http { status, .. } => *status == 429 || (500..600).contains(status),
            TransportError::Network(_) | TransportError::Decode(_) => true,
            TransportError::ReplayMiss(_) | TransportError::Journal(_) | TransportError::MissingApiKey(_) => false,
        }
    }
}

pub trait Transport: Send + Sync {
    /// Sends one request and returns the text of the first completion.
    fn send(&self, request: &ChatRequest) -> Result<String, TransportError>;
}

impl<T: Transport + ?Sized> Transport for Arc<T> {
    fn send(&self, request: &ChatRequest) -> Result<String, TransportError> {
        (**self).send(request)
    }
}

/// Live chat-completions client.
pub struct HttpTransport {
    endpoint: String,
    api_key_env: String,
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(endpoint: impl Into<String>, api_key_env: impl Into<String>, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        HttpTransport {
            endpoint: endpoint.into(),
            api_key_env: api_key_env.into(),
            agent,
        }
    }
}

/// Extracts `choices[0].message.content` from a chat-completions response.
pub fn parse_completion(body: &str) -> Result<String, TransportError> {
    let value: serde_json::Value = serde_json::from_str(body).map_err(|e| TransportError::Decode(e.to_string()))?;
    value["choices"][0]["message"]["content"]
        .as_str()
        .map(str::to_string)
        .ok_or_else(|| TransportError::Decode("missing choices[0].message.content".into()))
}

impl Transport for HttpTransport {
    fn send(&self, request: &ChatRequest) -> Result<String, TransportError> {
        let key =
            std::env::var(&self.api_key_env).map_err(|_| TransportError::MissingApiKey(self.api_key_env.clone()))?;
        let mut response = self
            .agent
            .post(&self.endpoint)
            .header("Authorization", &format!("Bearer {key}"))
            .send_json(request)
            .map_err(|e| TransportError::Network(e.to_string()))?;
        let status = response.status().as_u16();
        let body = response
            .body_mut()
            .read_to_string()
            .map_err(|e| TransportError::Network(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(TransportError::Http { status, body });
        }
        parse_completion(&body)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JournalEntry {
    pub key: String,
    pub request: ChatRequest,
    pub responses: Vec<String>,
}

/// Journals request/response pairs, one JSON file per request key.
///
/// The n-th identical request within a session is answered by the n-th
/// recorded response. Without an inner transport the journal is a pure
/// replay: unrecorded requests fail and requests beyond the recorded
/// sequence get the last recorded response.
pub struct JournalTransport {
    dir: PathBuf,
    inner: Option<Arc<dyn Transport>>,
    cursors: Mutex<HashMap<String, usize>>,
}

impl JournalTransport {
    pub fn recording(dir: impl Into<PathBuf>, inner: Arc<dyn Transport>) -> Self {
        JournalTransport {
            dir: dir.into(),
            inner: Some(inner),
            cursors: Mutex::new(HashMap::new()),
        }
    }

    pub fn replay(dir: impl Into<PathBuf>) -> Self {
        JournalTransport {
            dir: dir.into(),
            inner: None,
            cursors: Mutex::new(HashMap::new()),
        }
    }

    fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    fn read_entry(path: &Path) -> Result<Option<JournalEntry>, TransportError> {
        match std::fs::read_to_string(path) {
            Ok(text) => serde_json::from_str(&text)
                .map(Some)
                .map_err(|e| TransportError::Journal(format!("{}: {e}", path.display()))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(TransportError::Journal(e.to_string())),
        }
    }

    fn write_entry(&self, entry: &JournalEntry) -> Result<(), TransportError> {
        let err = |e: std::io::Error| TransportError::Journal(e.to_string());
        std::fs::create_dir_all(&self.dir).map_err(err)?;
        let path = self.path_for(&entry.key);
        let tmp = path.with_extension("json.tmp");
        let body = serde_json::to_string_pretty(entry).expect("entry serializes");
        std::fs::write(&tmp, body + "\n").map_err(err)?;
        std::fs::rename(&tmp, &path).map_err(err)
    }
}

impl Transport for JournalTransport {
    fn send(&self, request: &ChatRequest) -> Result<String, TransportError> {
        let key = request.key();
        let mut cursors = self.cursors.lock().expect("journal lock");
        let n = *cursors.get(&key).unwrap_or(&0);
        let path = self.path_for(&key);
        let existing = Self::read_entry(&path)?;
        if let Some(entry) = &existing {
            if let Some(r) = entry.responses.get(n) {
                cursors.insert(key, n + 1);
                return Ok(r.clone());
            }
        }
        let Some(inner) = &self.inner else {
            return match existing.and_then(|e| e.responses.last().cloned()) {
                Some(last) => Ok(last),
                None => Err(TransportError::ReplayMiss(key)),
            };
        };
        // Live calls happen under the lock; the journal is not a throughput path.
        let response = inner.send(request)?;
        let mut entry = existing.unwrap_or(JournalEntry {
            key: key.clone(),
            request: request.clone(),
            responses: Vec::new(),
        });
        entry.responses.push(response.clone());
        self.write_entry(&entry)?;
        cursors.insert(key, n + 1);
        Ok(response)
    }
}

/// Transport backed by a closure; receives the request and the zero-based
/// call index. Handy for scripted tests and fixture generation.
pub struct FnTransport<F> {
    f: F,
    calls: AtomicUsize,
}

impl<F> FnTransport<F>
where
    F: Fn(&ChatRequest, usize) -> Result<String, TransportError> + Send + Sync,
{
    pub fn new(f: F) -> Self {
        FnTransport {
            f,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl<F> Transport for FnTransport<F>
where
    F: Fn(&ChatRequest, usize) -> Result<String, TransportError> + Send + Sync,
{
    fn send(&self, request: &ChatRequest) -> Result<String, TransportError> {
        let n = self.calls.fetch_add(1, Ordering::SeqCst);
        (self.f)(request, n)
    }
}

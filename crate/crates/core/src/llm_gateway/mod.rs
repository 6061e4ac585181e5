//! Chat-completion gateway with retry and batching policies, plus the prompt
//! programs used by the pipeline: entity extraction, term classification and
//! graph-context disambiguation.

mod programs;
mod prompts;
mod transport;

use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use programs::{
    classify_batch, disambiguate, disambiguate_once, extract_entities, parse_classification, parse_disambiguation,
    parse_extraction, strip_code_fences, BatchClassification, ContextEntry, DisambiguationCandidate, ExtractionResult,
    CLASSIFY_BATCH_LIMIT,
};
pub use prompts::{classification_prompt, disambiguation_prompt, EXTRACTION_INSTRUCTIONS};
pub use transport::{
    parse_completion, ChatRequest, FnTransport, HttpTransport, JournalEntry, JournalTransport, Message, Transport,
    TransportError,
};

pub const OPENROUTER_ENDPOINT: &str = "https://openrouter.ai/api/v1/chat/completions";

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("prompt is empty")]
    EmptyPrompt,
    #[error("invalid gateway config: {0}")]
    Config(String),
    #[error("gave up after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: TransportError },
    #[error("non-retryable transport error: {0}")]
    Fatal(TransportError),
    #[error("unusable response after {attempts} attempts: {reason}")]
    Malformed { attempts: u32, reason: String },
}

/// How instructions and payload are packed into chat messages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageLayout {
    /// Instructions and payload concatenated into one user message.
    #[default]
    SingleUser,
    /// Instructions as a system message, payload as the user message.
    SystemUser,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GatewayConfig {
    pub endpoint_url: String,
    pub model_id: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub max_retries: u32,
    /// Seconds between attempts.
    pub retry_delay: f64,
    pub batch_size: usize,
    /// Seconds between batches.
    pub inter_batch_sleep: f64,
    pub api_key_env: String,
    pub timeout: f64,
    pub layout: MessageLayout,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig::extraction()
    }
}

impl GatewayConfig {
    pub fn extraction() -> Self {
        GatewayConfig {
            endpoint_url: OPENROUTER_ENDPOINT.into(),
            model_id: "google/gemini-2.5-flash".into(),
            temperature: 0.1,
            max_tokens: 50_000,
            max_retries: 3,
            retry_delay: 5.0,
            batch_size: 500,
            inter_batch_sleep: 10.0,
            api_key_env: "OPENROUTER_API_KEY".into(),
            timeout: 300.0,
            layout: MessageLayout::SingleUser,
        }
    }

    /// Graph-RAG disambiguation of indication/contraindication terms.
    pub fn mapping() -> Self {
        GatewayConfig {
            max_tokens: 500,
            retry_delay: 2.0,
            batch_size: 1,
            inter_batch_sleep: 0.0,
            timeout: 60.0,
            ..GatewayConfig::extraction()
        }
    }

    /// Graph-RAG disambiguation of side-effect terms.
    pub fn side_effect_mapping() -> Self {
        GatewayConfig {
            max_tokens: 1_000,
            ..GatewayConfig::mapping()
        }
    }

    pub fn classification() -> Self {
        GatewayConfig {
            model_id: "google/gemini-2.5-flash-lite".into(),
            max_tokens: 1_000,
            ..GatewayConfig::mapping()
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(GatewayError::Config("temperature must be >= 0".into()));
        }
        if self.batch_size == 0 {
            return Err(GatewayError::Config("batch_size must be >= 1".into()));
        }
        if !(self.retry_delay >= 0.0 && self.inter_batch_sleep >= 0.0) {
            return Err(GatewayError::Config("delays must be >= 0".into()));
        }
        Ok(())
    }

    pub fn retry_delay(&self) -> Duration {
        Duration::from_secs_f64(self.retry_delay)
    }

    pub fn inter_batch_sleep(&self) -> Duration {
        Duration::from_secs_f64(self.inter_batch_sleep)
    }
}

pub trait Clock: Send + Sync {
    fn sleep(&self, d: Duration);
}

pub struct SystemClock;

impl Clock for SystemClock {
    fn sleep(&self, d: Duration) {
        if !d.is_zero() {
            std::thread::sleep(d);
        }
    }
}

/// Records requested sleeps without waiting.
#[derive(Default)]
pub struct ManualClock {
    sleeps: Mutex<Vec<Duration>>,
}

impl ManualClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn sleeps(&self) -> Vec<Duration> {
        self.sleeps.lock().expect("clock lock").clone()
    }

    pub fn total(&self) -> Duration {
        self.sleeps().iter().sum()
    }
}

impl Clock for ManualClock {
    fn sleep(&self, d: Duration) {
        self.sleeps.lock().expect("clock lock").push(d);
    }
}

#[derive(Clone)]
pub struct Gateway {
    config: GatewayConfig,
    transport: Arc<dyn Transport>,
    clock: Arc<dyn Clock>,
}

impl Gateway {
    pub fn new(
        config: GatewayConfig,
        transport: Arc<dyn Transport>,
        clock: Arc<dyn Clock>,
    ) -> Result<Self, GatewayError> {
        config.validate()?;
        Ok(Gateway {
            config,
            transport,
            clock,
        })
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }

    /// Sends a single-message prompt; see [`Gateway::complete_parts`].
    pub fn complete(&self, prompt: &str) -> Result<String, GatewayError> {
        if prompt.trim().is_empty() {
            return Err(GatewayError::EmptyPrompt);
        }
        self.send(vec![Message {
            role: "user".into(),
            content: prompt.to_string(),
        }])
    }

    /// Sends instructions plus payload according to the configured layout.
    pub fn complete_parts(&self, instructions: &str, payload: &str) -> Result<String, GatewayError> {
        match self.config.layout {
            MessageLayout::SingleUser => {
                let prompt = if payload.is_empty() {
                    instructions.to_string()
                } else {
                    format!("{instructions}\n\n{payload}")
                };
                self.complete(&prompt)
            }
            MessageLayout::SystemUser => {
                if instructions.trim().is_empty() && payload.trim().is_empty() {
                    return Err(GatewayError::EmptyPrompt);
                }
                self.send(vec![
                    Message {
                        role: "system".into(),
                        content: instructions.to_string(),
                    },
                    Message {
                        role: "user".into(),
                        content: payload.to_string(),
                    },
                ])
            }
        }
    }

    // At most max_retries + 1 transport calls.
    fn send(&self, messages: Vec<Message>) -> Result<String, GatewayError> {
        let request = ChatRequest {
            model: self.config.model_id.clone(),
            temperature: self.config.temperature,
            max_tokens: self.config.max_tokens,
            messages,
        };
        let attempts = self.config.max_retries + 1;
        let mut attempt = 0;
        loop {
            attempt += 1;
            match self.transport.send(&request) {
                Ok(text) => return Ok(text),
                Err(e) if !e.is_retryable() => return Err(GatewayError::Fatal(e)),
                Err(e) => {
                    log::warn!("completion attempt {attempt}/{attempts} failed: {e}");
                    if attempt >= attempts {
                        return Err(GatewayError::Exhausted { attempts, last: e });
                    }
                    self.clock.sleep(self.config.retry_delay());
                }
            }
        }
    }
}

/// Runs `f` over `items` in input order, `batch_size` at a time, pausing
/// between batches. Within a batch up to `jobs` items run concurrently;
/// results keep input order.
pub fn run_batched<T, R, F>(
    items: &[T],
    batch_size: usize,
    pause: Duration,
    clock: &dyn Clock,
    jobs: usize,
    f: F,
) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    use rayon::prelude::*;
    let batch_size = batch_size.max(1);
    let pool = (jobs > 1).then(|| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .expect("thread pool")
    });
    let mut out = Vec::with_capacity(items.len());
    for (i, batch) in items.chunks(batch_size).enumerate() {
        if i > 0 {
            clock.sleep(pause);
        }
        match &pool {
            Some(pool) => out.extend(pool.install(|| batch.par_iter().map(&f).collect::<Vec<_>>())),
            None => out.extend(batch.iter().map(&f)),
        }
    }
    out
}

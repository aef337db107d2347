//! Text-generation backends behind a minimal greedy-decoding contract.
//!
//! [`generate`] is cache-first: a completion is looked up by its content key and
//! only requested from the backend on a miss, then stored before returning.

mod cache;
mod http;
mod mock;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use cache::{CacheParams, CacheRecord, CompletionCache};
pub use http::{tokenize_remote, HttpBackend, RemoteCounter};
pub use mock::{truncate_words, MockBackend, ReplayBackend};

use crate::error::{Error, Result};
use crate::template::RenderedPrompt;

pub const DEFAULT_MAX_NEW_TOKENS: u32 = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decoding {
    #[default]
    Greedy,
}

impl Decoding {
    pub fn as_str(self) -> &'static str {
        match self {
            Decoding::Greedy => "greedy",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub model_id: String,
    #[serde(default = "default_max_new_tokens")]
    pub max_new_tokens: u32,
    #[serde(default)]
    pub decoding: Decoding,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_after: Option<String>,
}

fn default_max_new_tokens() -> u32 {
    DEFAULT_MAX_NEW_TOKENS
}

impl GenerationParams {
    pub fn new(model_id: impl Into<String>) -> Self {
        GenerationParams {
            model_id: model_id.into(),
            max_new_tokens: DEFAULT_MAX_NEW_TOKENS,
            decoding: Decoding::Greedy,
            stop_after: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.model_id.is_empty() {
            return Err(Error::invalid("generation params", "model_id must be non-empty"));
        }
        if self.max_new_tokens == 0 {
            return Err(Error::invalid("generation params", "max_new_tokens must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    /// Generated continuation only; the prompt is never echoed.
    pub text: String,
    pub prompt_key: String,
    pub from_cache: bool,
    pub backend_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency_ms: Option<f64>,
    /// The server ignored `max_new_tokens` and the client cut the text.
    #[serde(default)]
    pub client_truncated: bool,
}

/// Content hash over everything that determines a greedy completion.
pub fn prompt_key(model_id: &str, prompt: &str, max_new_tokens: u32, decoding: Decoding) -> String {
    let canonical = serde_json::to_vec(&(model_id, prompt, max_new_tokens, decoding.as_str()))
        .expect("tuple of primitives serializes");
    hex::encode(Sha256::digest(&canonical))
}

pub fn sha256_hex(data: &str) -> String {
    hex::encode(Sha256::digest(data.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BackendDescriptor {
    Http {
        endpoint: String,
        #[serde(default = "default_timeout_secs")]
        timeout_secs: u64,
    },
    Mock {
        /// Keyed by doc id or prompt key.
        #[serde(default)]
        script: BTreeMap<String, String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        default: Option<String>,
    },
    /// Answers only from the completion cache.
    Replay {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cache_dir: Option<PathBuf>,
    },
}

fn default_timeout_secs() -> u64 {
    120
}

impl BackendDescriptor {
    pub fn validate(&self) -> Result<()> {
        match self {
            BackendDescriptor::Http { endpoint, .. } if endpoint.is_empty() => {
                Err(Error::invalid("backend", "http backend requires an endpoint"))
            }
            BackendDescriptor::Mock { script, default } if script.is_empty() && default.is_none() => {
                Err(Error::invalid("backend", "mock backend requires a script or a default"))
            }
            _ => Ok(()),
        }
    }

    pub fn build(&self) -> Result<Arc<dyn Backend>> {
        self.validate()?;
        Ok(match self {
            BackendDescriptor::Http {
                endpoint,
                timeout_secs,
            } => Arc::new(HttpBackend::new(endpoint, Duration::from_secs(*timeout_secs))?),
            BackendDescriptor::Mock { script, default } => {
                Arc::new(MockBackend::new(script.clone(), default.clone()))
            }
            BackendDescriptor::Replay { .. } => Arc::new(ReplayBackend),
        })
    }
}

pub struct GenerationRequest<'a> {
    pub model: &'a str,
    pub prompt: &'a str,
    pub doc_id: &'a str,
    pub prompt_key: &'a str,
    pub max_new_tokens: u32,
    pub decoding: Decoding,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackendOutput {
    pub text: String,
    pub client_truncated: bool,
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum BackendError {
    /// Transient failure (connection, timeout, 5xx); worth retrying.
    #[error("backend unavailable: {message}")]
    Transient { message: String },

    #[error("backend gave up on prompt {prompt_key} after {attempts} attempts: {message} (re-run to resume from cache)")]
    Exhausted {
        prompt_key: String,
        attempts: u32,
        message: String,
    },

    #[error("malformed backend response: {0}")]
    Malformed(String),

    #[error("backend rejected request with status {status}: {body}")]
    Rejected { status: u16, body: String },

    #[error("backend does not support the `{route}` route; fall back to the approximate token counter")]
    Unsupported { route: &'static str },

    #[error("mock backend has no script entry for doc `{doc_id}`")]
    NotScripted { doc_id: String },

    #[error("replay backend: prompt {prompt_key} is not in the cache")]
    NotCached { prompt_key: String },

    #[error("backend setup failed: {0}")]
    Setup(String),
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, BackendError::Transient { .. } | BackendError::Exhausted { .. })
    }
}

pub trait Backend: Send + Sync {
    fn name(&self) -> &str;

    fn complete(&self, request: &GenerationRequest<'_>) -> std::result::Result<BackendOutput, BackendError>;

    fn count_tokens(&self, _model: &str, _text: &str) -> std::result::Result<usize, BackendError> {
        Err(BackendError::Unsupported { route: "tokenize" })
    }

    /// Number of completion requests issued so far.
    fn calls(&self) -> usize;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 3,
            base_delay_ms: 500,
        }
    }
}

impl RetryPolicy {
    pub fn delay(&self, retry: u32) -> Duration {
        Duration::from_millis(self.base_delay_ms.saturating_mul(1u64 << retry.min(16)))
    }
}

/// Returns the completion for `prompt`, from cache when present.
pub fn generate(
    backend: &dyn Backend,
    prompt: &RenderedPrompt,
    params: &GenerationParams,
    cache: &CompletionCache,
    retry: &RetryPolicy,
) -> Result<Completion> {
    params.validate()?;
    let key = prompt_key(&params.model_id, &prompt.text, params.max_new_tokens, params.decoding);
    if let Some(record) = cache.get(&key) {
        log::debug!("doc {}: cache hit {key}", prompt.doc_id);
        return Ok(Completion {
            text: record.text,
            prompt_key: key,
            from_cache: true,
            backend_name: backend.name().to_string(),
            latency_ms: None,
            client_truncated: false,
        });
    }

    let request = GenerationRequest {
        model: &params.model_id,
        prompt: &prompt.text,
        doc_id: &prompt.doc_id,
        prompt_key: &key,
        max_new_tokens: params.max_new_tokens,
        decoding: params.decoding,
    };
    let started = Instant::now();
    let mut attempt = 0u32;
    let output = loop {
        match backend.complete(&request) {
            Ok(output) => break output,
            Err(err) if err.is_retryable() && attempt < retry.max_retries => {
                log::warn!("prompt {key}: {err}; retry {} of {}", attempt + 1, retry.max_retries);
                std::thread::sleep(retry.delay(attempt));
                attempt += 1;
            }
            Err(err) if err.is_retryable() => {
                return Err(BackendError::Exhausted {
                    prompt_key: key,
                    attempts: attempt + 1,
                    message: err.to_string(),
                }
                .into())
            }
            Err(err) => return Err(err.into()),
        }
    };
    let latency_ms = started.elapsed().as_secs_f64() * 1000.0;

    cache.put(CacheRecord::new(&key, params, &prompt.text, &output.text))?;
    Ok(Completion {
        text: output.text,
        prompt_key: key,
        from_cache: false,
        backend_name: backend.name().to_string(),
        latency_ms: Some(latency_ms),
        client_truncated: output.client_truncated,
    })
}

//! Client for the minimal HTTP inference contract.
//!
//! ```text
//! POST {endpoint}/generate  {"model", "prompt", "max_new_tokens", "decoding": "greedy"} -> {"text"}
//! POST {endpoint}/tokenize  {"model", "text"} -> {"count"}
//! ```

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};

use super::{Backend, BackendDescriptor, BackendError, BackendOutput, GenerationRequest};
use crate::error::{Error, Result};
use crate::template::{ApproxCounter, TokenCounter};

#[derive(Serialize)]
struct GenerateBody<'a> {
    model: &'a str,
    prompt: &'a str,
    max_new_tokens: u32,
    decoding: &'a str,
}

#[derive(Deserialize)]
struct GenerateReply {
    text: String,
}

#[derive(Serialize)]
struct TokenizeBody<'a> {
    model: &'a str,
    text: &'a str,
}

#[derive(Deserialize)]
struct TokenizeReply {
    count: usize,
}

pub struct HttpBackend {
    endpoint: String,
    client: Client,
    calls: AtomicUsize,
}

impl HttpBackend {
    pub fn new(endpoint: &str, timeout: Duration) -> Result<Self> {
        let client = Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| BackendError::Setup(e.to_string()))?;
        Ok(HttpBackend {
            endpoint: endpoint.trim_end_matches('/').to_string(),
            client,
            calls: AtomicUsize::new(0),
        })
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    fn post<B: Serialize>(&self, route: &'static str, body: &B) -> std::result::Result<String, BackendError> {
        let url = format!("{}/{route}", self.endpoint);
        let response = self.client.post(&url).json(body).send().map_err(|e| BackendError::Transient {
            message: format!("{url}: {e}"),
        })?;
        let status = response.status();
        let body = response.text().map_err(|e| BackendError::Transient {
            message: format!("{url}: reading body: {e}"),
        })?;
        if status.is_success() {
            return Ok(body);
        }
        if status.is_server_error() || status == StatusCode::TOO_MANY_REQUESTS || status == StatusCode::REQUEST_TIMEOUT {
            return Err(BackendError::Transient {
                message: format!("{url}: status {status}"),
            });
        }
        if route == "tokenize" && matches!(status, StatusCode::NOT_FOUND | StatusCode::METHOD_NOT_ALLOWED | StatusCode::NOT_IMPLEMENTED) {
            return Err(BackendError::Unsupported { route: "tokenize" });
        }
        Err(BackendError::Rejected {
            status: status.as_u16(),
            body,
        })
    }
}

impl Backend for HttpBackend {
    fn name(&self) -> &str {
        "http"
    }

    fn complete(&self, request: &GenerationRequest<'_>) -> std::result::Result<BackendOutput, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let body = self.post(
            "generate",
            &GenerateBody {
                model: request.model,
                prompt: request.prompt,
                max_new_tokens: request.max_new_tokens,
                decoding: request.decoding.as_str(),
            },
        )?;
        let reply: GenerateReply =
            serde_json::from_str(&body).map_err(|e| BackendError::Malformed(format!("{e}: {body}")))?;
        Ok(clip_to_budget(reply.text, request.max_new_tokens as usize))
    }

    fn count_tokens(&self, model: &str, text: &str) -> std::result::Result<usize, BackendError> {
        let body = self.post("tokenize", &TokenizeBody { model, text })?;
        let reply: TokenizeReply =
            serde_json::from_str(&body).map_err(|e| BackendError::Malformed(format!("{e}: {body}")))?;
        Ok(reply.count)
    }

    fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

/// Cuts `text` at the approximate counter's boundary when a server overshoots.
fn clip_to_budget(text: String, max_new_tokens: usize) -> BackendOutput {
    if ApproxCounter::count_str(&text) <= max_new_tokens {
        return BackendOutput {
            text,
            client_truncated: false,
        };
    }
    let mut end = max_new_tokens.saturating_mul(4).min(text.len());
    while !text.is_char_boundary(end) {
        end -= 1;
    }
    BackendOutput {
        text: text[..end].to_string(),
        client_truncated: true,
    }
}

/// Token count from the backend's own tokenizer.
pub fn tokenize_remote(backend: &BackendDescriptor, model: &str, text: &str) -> Result<usize> {
    match backend {
        BackendDescriptor::Http { endpoint, timeout_secs } => {
            if text.is_empty() {
                return Ok(0);
            }
            let client = HttpBackend::new(endpoint, Duration::from_secs(*timeout_secs))?;
            Ok(client.count_tokens(model, text)?)
        }
        _ => Err(Error::Backend(BackendError::Unsupported { route: "tokenize" })),
    }
}

/// Exact counter delegating to `/tokenize`.
pub struct RemoteCounter {
    backend: Arc<HttpBackend>,
    model: String,
    name: String,
}

impl RemoteCounter {
    pub fn new(backend: Arc<HttpBackend>, model: impl Into<String>) -> Self {
        let model = model.into();
        let name = format!("remote:{model}");
        RemoteCounter { backend, model, name }
    }
}

impl TokenCounter for RemoteCounter {
    fn name(&self) -> &str {
        &self.name
    }

    fn count(&self, text: &str) -> Result<usize> {
        if text.is_empty() {
            return Ok(0);
        }
        Ok(self.backend.count_tokens(&self.model, text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clipping() {
        let out = clip_to_budget("A, Yes".into(), 50);
        assert!(!out.client_truncated);
        assert_eq!(out.text, "A, Yes");
        let out = clip_to_budget("x".repeat(300), 50);
        assert!(out.client_truncated);
        assert_eq!(out.text.len(), 200);
        let out = clip_to_budget("é".repeat(10), 1);
        assert_eq!(out.text, "éé");
    }

    #[test]
    fn tokenize_needs_http() {
        let mock = BackendDescriptor::Mock {
            script: Default::default(),
            default: Some("A".into()),
        };
        let err = tokenize_remote(&mock, "m", "text").unwrap_err();
        assert!(err.to_string().contains("approximate token counter"));
    }
}

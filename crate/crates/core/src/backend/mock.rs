use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};

use super::{Backend, BackendError, BackendOutput, GenerationRequest};

/// Scripted backend: answers by doc id, then prompt key, then the default.
///
/// Output is cut to `max_new_tokens` whitespace-delimited words.
pub struct MockBackend {
    script: BTreeMap<String, String>,
    default: Option<String>,
    calls: AtomicUsize,
}

impl MockBackend {
    pub fn new(script: BTreeMap<String, String>, default: Option<String>) -> Self {
        MockBackend {
            script,
            default,
            calls: AtomicUsize::new(0),
        }
    }
}

impl Backend for MockBackend {
    fn name(&self) -> &str {
        "mock"
    }

    fn complete(&self, request: &GenerationRequest<'_>) -> Result<BackendOutput, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let text = self
            .script
            .get(request.doc_id)
            .or_else(|| self.script.get(request.prompt_key))
            .or(self.default.as_ref())
            .ok_or_else(|| BackendError::NotScripted {
                doc_id: request.doc_id.to_string(),
            })?;
        Ok(BackendOutput {
            text: truncate_words(text, request.max_new_tokens as usize).to_string(),
            client_truncated: false,
        })
    }

    fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

/// The first `n` whitespace-delimited words of `text`, original spacing kept.
pub fn truncate_words(text: &str, n: usize) -> &str {
    let mut words = 0;
    let mut in_word = false;
    for (i, c) in text.char_indices() {
        if c.is_whitespace() {
            in_word = false;
        } else if !in_word {
            if words == n {
                return text[..i].trim_end();
            }
            words += 1;
            in_word = true;
        }
    }
    text
}

/// Cache-only backend; every miss is an error and no request ever leaves the process.
pub struct ReplayBackend;

impl Backend for ReplayBackend {
    fn name(&self) -> &str {
        "replay"
    }

    fn complete(&self, request: &GenerationRequest<'_>) -> Result<BackendOutput, BackendError> {
        Err(BackendError::NotCached {
            prompt_key: request.prompt_key.to_string(),
        })
    }

    fn calls(&self) -> usize {
        0
    }
}

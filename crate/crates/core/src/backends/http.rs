//! OpenAI-compatible HTTP client for `/v1/chat/completions` and
//! `/v1/embeddings`.

use std::thread;
use std::time::Duration;

use serde::Deserialize;
use serde_json::{json, Value};
use tracing::warn;
use ureq::Agent;

use super::{BackendResult, ChatBackend, ChatRequest, ChatResponse, EmbedBackend, TokenUsage};
use crate::error::BackendError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff: Duration,
    pub max_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 4,
            initial_backoff: Duration::from_millis(250),
            max_backoff: Duration::from_secs(8),
        }
    }
}

impl RetryPolicy {
    fn backoff(&self, attempt: u32) -> Duration {
        let factor = 1u32.checked_shl(attempt.saturating_sub(1)).unwrap_or(u32::MAX);
        self.initial_backoff
            .saturating_mul(factor)
            .min(self.max_backoff)
    }
}

#[derive(Clone)]
struct Client {
    agent: Agent,
    base_url: String,
    api_key: Option<String>,
    retry: RetryPolicy,
}

impl Client {
    fn new(base_url: &str, api_key: Option<String>, timeout: Duration) -> Self {
        let agent: Agent = Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build()
            .into();
        Self {
            agent,
            base_url: base_url.trim_end_matches('/').to_string(),
            api_key,
            retry: RetryPolicy::default(),
        }
    }

    /// POSTs `body`, retrying transport errors, 429 and 5xx with capped
    /// exponential backoff.
    fn post(&self, path: &str, body: &Value) -> BackendResult<Value> {
        let url = format!("{}{}", self.base_url, path);
        let mut attempt = 0;
        loop {
            attempt += 1;
            let mut request = self.agent.post(&url);
            if let Some(key) = &self.api_key {
                request = request.header("Authorization", format!("Bearer {key}"));
            }
            let retryable = match request.send_json(body) {
                Ok(mut response) => {
                    let status = response.status().as_u16();
                    let text = response
                        .body_mut()
                        .read_to_string()
                        .map_err(|e| BackendError::Malformed(e.to_string()))?;
                    if (200..300).contains(&status) {
                        return serde_json::from_str(&text)
                            .map_err(|e| BackendError::Malformed(e.to_string()));
                    }
                    let error = BackendError::Status {
                        status,
                        message: server_message(&text),
                    };
                    if status == 429 || status >= 500 {
                        error
                    } else {
                        return Err(error);
                    }
                }
                Err(e) => BackendError::Transport {
                    attempts: attempt,
                    message: e.to_string(),
                },
            };
            if attempt >= self.retry.max_attempts {
                return Err(match retryable {
                    BackendError::Transport { message, .. } => BackendError::Transport {
                        attempts: attempt,
                        message,
                    },
                    other => other,
                });
            }
            let delay = self.retry.backoff(attempt);
            warn!(%url, attempt, ?delay, error = %retryable, "retrying request");
            thread::sleep(delay);
        }
    }
}

fn server_message(body: &str) -> String {
    serde_json::from_str::<Value>(body)
        .ok()
        .and_then(|v| {
            v.pointer("/error/message")
                .and_then(Value::as_str)
                .map(str::to_string)
        })
        .unwrap_or_else(|| body.trim().to_string())
}

pub struct HttpChat {
    client: Client,
    model: String,
}

impl HttpChat {
    pub fn new(base_url: &str, model: &str, api_key: Option<String>) -> Self {
        Self {
            client: Client::new(base_url, api_key, Duration::from_secs(300)),
            model: model.to_string(),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.client.retry = retry;
        self
    }
}

#[derive(Deserialize)]
struct ChatCompletion {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct Usage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

impl ChatBackend for HttpChat {
    fn complete(&self, request: &ChatRequest) -> BackendResult<ChatResponse> {
        let mut messages = Vec::new();
        if let Some(system) = &request.system {
            messages.push(json!({"role": "system", "content": system}));
        }
        messages.push(json!({"role": "user", "content": request.user}));
        let body = json!({
            "model": self.model,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        let value = self.client.post("/v1/chat/completions", &body)?;
        let parsed: ChatCompletion =
            serde_json::from_value(value).map_err(|e| BackendError::Malformed(e.to_string()))?;
        let choice = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| BackendError::Malformed("no choices".into()))?;
        let usage = parsed.usage.map_or_else(TokenUsage::default, |u| TokenUsage {
            prompt_tokens: u.prompt_tokens,
            completion_tokens: u.completion_tokens,
        });
        Ok(ChatResponse {
            text: choice.message.content.unwrap_or_default(),
            usage,
        })
    }

    fn model_name(&self) -> &str {
        &self.model
    }
}

pub struct HttpEmbedder {
    client: Client,
    model: String,
    dim: usize,
}

impl HttpEmbedder {
    pub fn new(base_url: &str, model: &str, dim: usize, api_key: Option<String>) -> Self {
        Self {
            client: Client::new(base_url, api_key, Duration::from_secs(120)),
            model: model.to_string(),
            dim,
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.client.retry = retry;
        self
    }
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingItem>,
}

#[derive(Deserialize)]
struct EmbeddingItem {
    embedding: Vec<f32>,
    #[serde(default)]
    index: Option<usize>,
}

impl EmbedBackend for HttpEmbedder {
    fn embed_batch(&self, texts: &[String]) -> BackendResult<Vec<Vec<f32>>> {
        let body = json!({"model": self.model, "input": texts});
        let value = self.client.post("/v1/embeddings", &body)?;
        let mut parsed: EmbeddingResponse =
            serde_json::from_value(value).map_err(|e| BackendError::Malformed(e.to_string()))?;
        if parsed.data.iter().all(|d| d.index.is_some()) {
            parsed.data.sort_by_key(|d| d.index);
        }
        Ok(parsed.data.into_iter().map(|d| d.embedding).collect())
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn describe(&self) -> String {
        format!("http:{}", self.model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backoff_is_capped_exponential() {
        let p = RetryPolicy {
            max_attempts: 10,
            initial_backoff: Duration::from_millis(100),
            max_backoff: Duration::from_millis(500),
        };
        assert_eq!(p.backoff(1), Duration::from_millis(100));
        assert_eq!(p.backoff(2), Duration::from_millis(200));
        assert_eq!(p.backoff(3), Duration::from_millis(400));
        assert_eq!(p.backoff(4), Duration::from_millis(500));
        assert_eq!(p.backoff(40), Duration::from_millis(500));
    }

    #[test]
    fn server_message_prefers_error_field() {
        assert_eq!(server_message(r#"{"error":{"message":"bad"}}"#), "bad");
        assert_eq!(server_message(" plain "), "plain");
    }
}

//! Remote chat-completions and embeddings clients: blocking HTTP with
//! bounded concurrency, retries with exponential backoff on transport
//! errors and retryable statuses, and strict response shape checks.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use super::{BackendError, ChatRequest, EmbeddingVector, Role};

pub(super) const DEFAULT_MAX_IN_FLIGHT: usize = 16;
const REQUEST_TIMEOUT: Duration = Duration::from_secs(120);

/// Retry schedule for remote calls: `attempts` tries total, sleeping
/// `initial_backoff * 2^n` between them.
#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            attempts: 3,
            initial_backoff: Duration::from_secs(1),
        }
    }
}

impl RetryPolicy {
    fn backoff(&self, attempt: u32) -> Duration {
        let factor = 2u32.saturating_pow(attempt.saturating_sub(1));
        self.initial_backoff.saturating_mul(factor)
    }
}

/// Counting semaphore bounding in-flight remote calls per backend.
struct Semaphore {
    permits: Mutex<usize>,
    available: Condvar,
}

impl Semaphore {
    fn new(permits: usize) -> Semaphore {
        Semaphore {
            permits: Mutex::new(permits.max(1)),
            available: Condvar::new(),
        }
    }

    fn acquire(&self) -> SemaphoreGuard<'_> {
        let mut permits = self.permits.lock().expect("semaphore lock poisoned");
        while *permits == 0 {
            permits = self
                .available
                .wait(permits)
                .expect("semaphore lock poisoned");
        }
        *permits -= 1;
        SemaphoreGuard { semaphore: self }
    }
}

struct SemaphoreGuard<'a> {
    semaphore: &'a Semaphore,
}

impl Drop for SemaphoreGuard<'_> {
    fn drop(&mut self) {
        let mut permits = self
            .semaphore
            .permits
            .lock()
            .expect("semaphore lock poisoned");
        *permits += 1;
        self.semaphore.available.notify_one();
    }
}

fn resolve_endpoint(
    configured: Option<&str>,
    env_name: &str,
) -> Result<String, BackendError> {
    if let Some(endpoint) = configured {
        if !endpoint.is_empty() {
            return Ok(endpoint.trim_end_matches('/').to_string());
        }
    }
    match std::env::var(env_name) {
        Ok(value) if !value.is_empty() => Ok(value.trim_end_matches('/').to_string()),
        _ => Err(BackendError::Config(format!(
            "no endpoint configured and {env_name} is unset"
        ))),
    }
}

fn resolve_api_key(api_key_env: Option<&str>, default_env: &str) -> Option<String> {
    let name = api_key_env.unwrap_or(default_env);
    std::env::var(name).ok().filter(|v| !v.is_empty())
}

fn is_retryable_status(status: reqwest::StatusCode) -> bool {
    status.as_u16() == 429 || status.is_server_error()
}

/// Runs `call` under the retry policy. Transport errors and retryable
/// statuses are retried with exponential backoff; other failures return
/// immediately.
fn with_retries<T>(
    retry: &RetryPolicy,
    mut call: impl FnMut() -> Result<T, (bool, String)>,
) -> Result<T, BackendError> {
    let attempts = retry.attempts.max(1);
    let mut last_error = String::new();
    for attempt in 1..=attempts {
        match call() {
            Ok(value) => return Ok(value),
            Err((retryable, message)) => {
                last_error = message;
                if !retryable || attempt == attempts {
                    break;
                }
                std::thread::sleep(retry.backoff(attempt));
            }
        }
    }
    Err(BackendError::Remote {
        attempts,
        message: last_error,
    })
}

fn build_client() -> Result<reqwest::blocking::Client, BackendError> {
    reqwest::blocking::Client::builder()
        .timeout(REQUEST_TIMEOUT)
        .build()
        .map_err(|err| BackendError::Config(format!("cannot build HTTP client: {err}")))
}

fn post_json(
    client: &reqwest::blocking::Client,
    url: &str,
    api_key: Option<&str>,
    body: &serde_json::Value,
) -> Result<serde_json::Value, (bool, String)> {
    let mut request = client.post(url).json(body);
    if let Some(key) = api_key {
        request = request.bearer_auth(key);
    }
    let response = request
        .send()
        .map_err(|err| (true, format!("transport error: {err}")))?;
    let status = response.status();
    if !status.is_success() {
        let body = response.text().unwrap_or_default();
        let snippet: String = body.chars().take(200).collect();
        return Err((is_retryable_status(status), format!("{status}: {snippet}")));
    }
    response
        .json::<serde_json::Value>()
        .map_err(|err| (false, format!("response is not JSON: {err}")))
}

pub(super) struct RemoteChat {
    endpoint: String,
    api_key: Option<String>,
    model_id: String,
    client: reqwest::blocking::Client,
    limiter: Semaphore,
}

impl RemoteChat {
    pub(super) fn new(
        endpoint: Option<&str>,
        api_key_env: Option<&str>,
        model_id: &str,
        max_in_flight: usize,
    ) -> Result<RemoteChat, BackendError> {
        Ok(RemoteChat {
            endpoint: resolve_endpoint(endpoint, super::MODEL_API_BASE)?,
            api_key: resolve_api_key(api_key_env, super::MODEL_API_KEY),
            model_id: model_id.to_string(),
            client: build_client()?,
            limiter: Semaphore::new(max_in_flight),
        })
    }

    pub(super) fn chat(
        &self,
        request: &ChatRequest,
        retry: &RetryPolicy,
    ) -> Result<(String, Option<u64>, Option<u64>), BackendError> {
        let url = format!("{}/chat/completions", self.endpoint);
        let mut messages = Vec::with_capacity(request.messages.len() + 1);
        if !request.system_prompt.is_empty() {
            messages.push(serde_json::json!({
                "role": "system",
                "content": request.system_prompt,
            }));
        }
        for message in &request.messages {
            let role = match message.role {
                Role::User => "user",
                Role::Assistant => "assistant",
            };
            messages.push(serde_json::json!({"role": role, "content": message.content}));
        }
        let model = if request.model_id.is_empty() {
            &self.model_id
        } else {
            &request.model_id
        };
        let mut body = serde_json::json!({
            "model": model,
            "messages": messages,
            "temperature": request.params.temperature,
            "top_p": request.params.top_p,
            "max_tokens": request.params.max_tokens,
        });
        if !request.params.stop_sequences.is_empty() {
            body["stop"] = serde_json::json!(request.params.stop_sequences);
        }
        let _permit = self.limiter.acquire();
        let value = with_retries(retry, || {
            post_json(&self.client, &url, self.api_key.as_deref(), &body)
        })?;
        let text = value["choices"][0]["message"]["content"]
            .as_str()
            .ok_or_else(|| {
                BackendError::MalformedResponse(
                    "missing choices[0].message.content".to_string(),
                )
            })?
            .to_string();
        let prompt_tokens = value["usage"]["prompt_tokens"].as_u64();
        let completion_tokens = value["usage"]["completion_tokens"].as_u64();
        Ok((text, prompt_tokens, completion_tokens))
    }
}

pub(super) struct RemoteEmbed {
    endpoint: String,
    api_key: Option<String>,
    model_id: String,
    client: reqwest::blocking::Client,
    limiter: Semaphore,
}

impl RemoteEmbed {
    pub(super) fn new(
        endpoint: Option<&str>,
        api_key_env: Option<&str>,
        model_id: &str,
    ) -> Result<RemoteEmbed, BackendError> {
        Ok(RemoteEmbed {
            endpoint: resolve_endpoint(endpoint, super::EMBED_API_BASE)?,
            api_key: resolve_api_key(api_key_env, super::EMBED_API_KEY),
            model_id: model_id.to_string(),
            client: build_client()?,
            limiter: Semaphore::new(DEFAULT_MAX_IN_FLIGHT),
        })
    }

    pub(super) fn embed(
        &self,
        texts: &[String],
        retry: &RetryPolicy,
        model_id: &str,
    ) -> Result<Vec<EmbeddingVector>, BackendError> {
        let url = format!("{}/embeddings", self.endpoint);
        let model = if model_id.is_empty() {
            &self.model_id
        } else {
            model_id
        };
        let body = serde_json::json!({"model": model, "input": texts});
        let _permit = self.limiter.acquire();
        let value = with_retries(retry, || {
            post_json(&self.client, &url, self.api_key.as_deref(), &body)
        })?;
        let data = value["data"].as_array().ok_or_else(|| {
            BackendError::MalformedResponse("missing data array".to_string())
        })?;
        if data.len() != texts.len() {
            return Err(BackendError::MalformedResponse(format!(
                "asked for {} embeddings, got {}",
                texts.len(),
                data.len()
            )));
        }
        let mut out = Vec::with_capacity(data.len());
        for entry in data {
            let values: Vec<f64> = entry["embedding"]
                .as_array()
                .ok_or_else(|| {
                    BackendError::MalformedResponse("entry missing embedding".to_string())
                })?
                .iter()
                .map(|v| v.as_f64().unwrap_or(0.0))
                .collect();
            out.push(EmbeddingVector {
                values,
                model_id: model.to_string(),
            });
        }
        Ok(out)
    }
}

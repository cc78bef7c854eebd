//! Pluggable text-generation and embedding providers.
//!
//! A [`Backend`] wraps one provider kind behind a uniform `generate`/`embed`
//! surface: a remote chat endpoint, a scripted mock that replies from
//! pattern rules, corpus-backed oracles that emit perfect stage outputs, a
//! remote embedding endpoint, or a deterministic local embedder. Responses
//! to `generate` flow through a response cache keyed by a stable digest of
//! the request, so repeated calls are free and runs can resume.

mod cache;
mod embed;
mod mock;
mod oracle;
mod remote;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::CorpusIndex;

pub use cache::Cache;
pub use embed::{cosine_similarity, EmbeddingVector, DEFAULT_EMBED_DIM};
pub use mock::ScriptRule;
pub use remote::RetryPolicy;

/// Environment variable naming the chat endpoint base URL.
pub const MODEL_API_BASE: &str = "MODEL_API_BASE";
/// Environment variable naming the chat endpoint credential.
pub const MODEL_API_KEY: &str = "MODEL_API_KEY";
/// Environment variable naming the embedding endpoint base URL.
pub const EMBED_API_BASE: &str = "EMBED_API_BASE";
/// Environment variable naming the embedding endpoint credential.
pub const EMBED_API_KEY: &str = "EMBED_API_KEY";
/// Environment variable naming the persistent response cache directory.
pub const MHQA_CACHE_DIR: &str = "MHQA_CACHE_DIR";

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("invalid chat request: {0}")]
    InvalidRequest(String),
    #[error("no scripted rule matched the prompt (prompt starts {snippet:?})")]
    UnscriptedPrompt { snippet: String },
    #[error("oracle backend needs example metadata on the request, none provided")]
    MissingExampleId,
    #[error("oracle backend does not know example {0:?}")]
    UnknownExample(String),
    #[error("backend kind {kind} cannot serve {op}")]
    WrongKind { kind: &'static str, op: &'static str },
    #[error("remote call failed after {attempts} attempt(s): {message}")]
    Remote { attempts: u32, message: String },
    #[error("remote response malformed: {0}")]
    MalformedResponse(String),
    #[error("embedding input is empty")]
    EmptyEmbedInput,
    #[error("backend configuration error: {0}")]
    Config(String),
}

/// Sampling parameters sent with every generation request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stop_sequences: Vec<String>,
}

impl Default for GenerationParams {
    fn default() -> Self {
        GenerationParams {
            temperature: 0.01,
            top_p: 0.8,
            max_tokens: 512,
            stop_sequences: Vec::new(),
        }
    }
}

impl GenerationParams {
    /// Defaults, with the output budget widened when chain-of-thought
    /// rationales are requested.
    pub fn default_for(cot: bool) -> Self {
        let mut params = GenerationParams::default();
        if cot {
            params.max_tokens = 1024;
        }
        params
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if !(self.temperature >= 0.0) {
            return Err(BackendError::InvalidRequest(format!(
                "temperature {} must be >= 0",
                self.temperature
            )));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(BackendError::InvalidRequest(format!(
                "top_p {} must be in (0, 1]",
                self.top_p
            )));
        }
        if self.max_tokens == 0 {
            return Err(BackendError::InvalidRequest(
                "max_tokens must be positive".to_string(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

/// One generation request. `example_id` carries the corpus id of the example
/// the prompt was built from, which oracle backends use to look up gold
/// outputs; it does not affect remote or scripted backends and is excluded
/// from the cache key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system_prompt: String,
    pub messages: Vec<ChatMessage>,
    pub params: GenerationParams,
    pub model_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub example_id: Option<String>,
}

impl ChatRequest {
    pub fn validate(&self) -> Result<(), BackendError> {
        if self.messages.is_empty() {
            return Err(BackendError::InvalidRequest(
                "request carries no messages".to_string(),
            ));
        }
        self.params.validate()
    }

    /// The full prompt text a scripted rule matches against.
    pub fn matchable_text(&self) -> String {
        let mut parts = Vec::with_capacity(self.messages.len() + 1);
        if !self.system_prompt.is_empty() {
            parts.push(self.system_prompt.as_str());
        }
        parts.extend(self.messages.iter().map(|m| m.content.as_str()));
        parts.join("\n")
    }
}

/// One generation response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub prompt_tokens: Option<u64>,
    pub completion_tokens: Option<u64>,
    pub latency_ms: u64,
    pub cache_hit: bool,
}

/// Serializable backend configuration, as written in experiment config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendSpec {
    /// A chat-completions endpoint. The endpoint falls back to
    /// `MODEL_API_BASE`; the credential is read from `api_key_env`
    /// (default `MODEL_API_KEY`).
    RemoteChat {
        #[serde(default)]
        endpoint: Option<String>,
        #[serde(default)]
        api_key_env: Option<String>,
        model_id: String,
        #[serde(default)]
        max_in_flight: Option<usize>,
        #[serde(default)]
        retry_attempts: Option<u32>,
        #[serde(default)]
        retry_backoff_ms: Option<u64>,
    },
    /// Replies from an ordered rule list; unmatched prompts are errors.
    ScriptedMock { rules: Vec<ScriptRule> },
    /// Emits the gold titles and supporting facts for the request's example.
    OracleSelector,
    /// Emits the gold answer for the request's example.
    OracleReader,
    /// An embeddings endpoint. Falls back to `EMBED_API_BASE` /
    /// `EMBED_API_KEY`.
    RemoteEmbed {
        #[serde(default)]
        endpoint: Option<String>,
        #[serde(default)]
        api_key_env: Option<String>,
        model_id: String,
    },
    /// Deterministic local embedder: planted vectors by exact text when
    /// present, hashed bag-of-words otherwise.
    MockEmbed {
        #[serde(default)]
        dim: Option<usize>,
        #[serde(default)]
        planted: BTreeMap<String, Vec<f64>>,
    },
}

impl BackendSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            BackendSpec::RemoteChat { .. } => "remote_chat",
            BackendSpec::ScriptedMock { .. } => "scripted_mock",
            BackendSpec::OracleSelector => "oracle_selector",
            BackendSpec::OracleReader => "oracle_reader",
            BackendSpec::RemoteEmbed { .. } => "remote_embed",
            BackendSpec::MockEmbed { .. } => "mock_embed",
        }
    }

    /// Whether this backend needs a corpus index to answer.
    pub fn needs_corpus(&self) -> bool {
        matches!(self, BackendSpec::OracleSelector | BackendSpec::OracleReader)
    }
}

enum Kind {
    RemoteChat(remote::RemoteChat),
    ScriptedMock(mock::ScriptSet),
    OracleSelector(Arc<CorpusIndex>),
    OracleReader(Arc<CorpusIndex>),
    RemoteEmbed(remote::RemoteEmbed),
    MockEmbed(embed::MockEmbedder),
}

/// A ready-to-call provider. Construction validates the configuration;
/// generation responses pass through the attached cache.
pub struct Backend {
    kind: Kind,
    cache: Cache,
    retry: RetryPolicy,
    model_id: String,
}

impl std::fmt::Debug for Backend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Backend")
            .field("kind", &self.kind_name())
            .field("model_id", &self.model_id)
            .finish_non_exhaustive()
    }
}

impl Backend {
    /// Builds a backend from its serializable spec. Oracle kinds need the
    /// corpus index; other kinds ignore it.
    pub fn from_spec(
        spec: &BackendSpec,
        corpus: Option<Arc<CorpusIndex>>,
        cache: Cache,
    ) -> Result<Backend, BackendError> {
        let mut retry = RetryPolicy::default();
        let (kind, model_id) = match spec {
            BackendSpec::RemoteChat {
                endpoint,
                api_key_env,
                model_id,
                max_in_flight,
                retry_attempts,
                retry_backoff_ms,
            } => {
                if let Some(attempts) = retry_attempts {
                    retry.attempts = (*attempts).max(1);
                }
                if let Some(ms) = retry_backoff_ms {
                    retry.initial_backoff = std::time::Duration::from_millis(*ms);
                }
                let chat = remote::RemoteChat::new(
                    endpoint.as_deref(),
                    api_key_env.as_deref(),
                    model_id,
                    max_in_flight.unwrap_or(remote::DEFAULT_MAX_IN_FLIGHT),
                )?;
                (Kind::RemoteChat(chat), model_id.clone())
            }
            BackendSpec::ScriptedMock { rules } => (
                Kind::ScriptedMock(mock::ScriptSet::compile(rules)?),
                "scripted-mock".to_string(),
            ),
            BackendSpec::OracleSelector => {
                let index = corpus.ok_or_else(|| {
                    BackendError::Config("oracle_selector needs a corpus index".to_string())
                })?;
                (Kind::OracleSelector(index), "oracle".to_string())
            }
            BackendSpec::OracleReader => {
                let index = corpus.ok_or_else(|| {
                    BackendError::Config("oracle_reader needs a corpus index".to_string())
                })?;
                (Kind::OracleReader(index), "oracle".to_string())
            }
            BackendSpec::RemoteEmbed {
                endpoint,
                api_key_env,
                model_id,
            } => (
                Kind::RemoteEmbed(remote::RemoteEmbed::new(
                    endpoint.as_deref(),
                    api_key_env.as_deref(),
                    model_id,
                )?),
                model_id.clone(),
            ),
            BackendSpec::MockEmbed { dim, planted } => {
                let dim = dim.unwrap_or(DEFAULT_EMBED_DIM);
                let embedder = embed::MockEmbedder::new(dim, planted.clone())?;
                (Kind::MockEmbed(embedder), format!("mock-embed-{dim}"))
            }
        };
        Ok(Backend {
            kind,
            cache,
            retry,
            model_id,
        })
    }

    /// A scripted mock with an in-memory cache.
    pub fn scripted(rules: Vec<ScriptRule>) -> Result<Backend, BackendError> {
        Backend::from_spec(&BackendSpec::ScriptedMock { rules }, None, Cache::in_memory())
    }

    pub fn oracle_selector(index: Arc<CorpusIndex>) -> Backend {
        Backend::from_spec(&BackendSpec::OracleSelector, Some(index), Cache::in_memory())
            .expect("oracle construction cannot fail")
    }

    pub fn oracle_reader(index: Arc<CorpusIndex>) -> Backend {
        Backend::from_spec(&BackendSpec::OracleReader, Some(index), Cache::in_memory())
            .expect("oracle construction cannot fail")
    }

    /// A hashed bag-of-words embedder of the default dimension.
    pub fn mock_embed() -> Backend {
        Backend::from_spec(
            &BackendSpec::MockEmbed {
                dim: None,
                planted: BTreeMap::new(),
            },
            None,
            Cache::in_memory(),
        )
        .expect("mock embedder construction cannot fail")
    }

    /// An embedder that returns planted vectors for exact texts and hashed
    /// bag-of-words vectors otherwise.
    pub fn planted_embed(
        dim: usize,
        planted: BTreeMap<String, Vec<f64>>,
    ) -> Result<Backend, BackendError> {
        Backend::from_spec(
            &BackendSpec::MockEmbed {
                dim: Some(dim),
                planted,
            },
            None,
            Cache::in_memory(),
        )
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn kind_name(&self) -> &'static str {
        match &self.kind {
            Kind::RemoteChat(_) => "remote_chat",
            Kind::ScriptedMock(_) => "scripted_mock",
            Kind::OracleSelector(_) => "oracle_selector",
            Kind::OracleReader(_) => "oracle_reader",
            Kind::RemoteEmbed(_) => "remote_embed",
            Kind::MockEmbed(_) => "mock_embed",
        }
    }

    /// The model identifier requests against this backend should carry.
    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn is_chat(&self) -> bool {
        matches!(
            self.kind,
            Kind::RemoteChat(_) | Kind::ScriptedMock(_) | Kind::OracleSelector(_) | Kind::OracleReader(_)
        )
    }

    pub fn is_embed(&self) -> bool {
        matches!(self.kind, Kind::RemoteEmbed(_) | Kind::MockEmbed(_))
    }

    /// Generates a completion for the request, serving from cache when the
    /// same request was answered before.
    pub fn generate(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let start = Instant::now();
        request.validate()?;
        let key = cache_key(self.kind_name(), request);
        if let Some(text) = self.cache.get(&key) {
            return Ok(ChatResponse {
                text,
                prompt_tokens: None,
                completion_tokens: None,
                latency_ms: start.elapsed().as_millis() as u64,
                cache_hit: true,
            });
        }
        let (text, prompt_tokens, completion_tokens) = match &self.kind {
            Kind::RemoteChat(chat) => chat.chat(request, &self.retry)?,
            Kind::ScriptedMock(rules) => {
                let content = request.matchable_text();
                match rules.reply_for(&content) {
                    Some(reply) => (reply.to_string(), None, None),
                    None => {
                        return Err(BackendError::UnscriptedPrompt {
                            snippet: content.chars().take(80).collect(),
                        })
                    }
                }
            }
            Kind::OracleSelector(index) => (oracle::selector_reply(index, request)?, None, None),
            Kind::OracleReader(index) => (oracle::reader_reply(index, request)?, None, None),
            Kind::RemoteEmbed(_) | Kind::MockEmbed(_) => {
                return Err(BackendError::WrongKind {
                    kind: self.kind_name(),
                    op: "generate",
                })
            }
        };
        self.cache.put(&key, &text, &digest_inputs(self.kind_name(), request));
        Ok(ChatResponse {
            text,
            prompt_tokens,
            completion_tokens,
            latency_ms: start.elapsed().as_millis() as u64,
            cache_hit: false,
        })
    }

    /// Embeds a batch of texts, preserving order.
    pub fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, BackendError> {
        if texts.is_empty() {
            return Err(BackendError::EmptyEmbedInput);
        }
        match &self.kind {
            Kind::MockEmbed(embedder) => Ok(texts
                .iter()
                .map(|t| EmbeddingVector {
                    values: embedder.embed_one(t),
                    model_id: self.model_id.clone(),
                })
                .collect()),
            Kind::RemoteEmbed(remote) => remote.embed(texts, &self.retry, &self.model_id),
            _ => Err(BackendError::WrongKind {
                kind: self.kind_name(),
                op: "embed",
            }),
        }
    }
}

fn digest_inputs(kind: &str, request: &ChatRequest) -> serde_json::Value {
    serde_json::json!({
        "kind": kind,
        "model_id": request.model_id,
        "params": request.params,
        "system_prompt": request.system_prompt,
        "messages": request.messages,
    })
}

/// Stable digest of everything that determines a response: backend kind,
/// model id, sampling parameters, system prompt, and messages. Stable across
/// processes and platforms, so persistent caches survive restarts.
pub fn cache_key(kind: &str, request: &ChatRequest) -> String {
    let payload = digest_inputs(kind, request);
    let bytes = serde_json::to_vec(&payload).expect("digest inputs serialize");
    let digest = Sha256::digest(&bytes);
    let mut out = String::with_capacity(64);
    for byte in digest {
        write!(out, "{byte:02x}").expect("writing to a string cannot fail");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn request(content: &str) -> ChatRequest {
        ChatRequest {
            system_prompt: "system".to_string(),
            messages: vec![ChatMessage::user(content)],
            params: GenerationParams::default(),
            model_id: "test-model".to_string(),
            example_id: None,
        }
    }

    #[test]
    fn default_params_match_documented_values() {
        let params = GenerationParams::default();
        assert_eq!(params.temperature, 0.01);
        assert_eq!(params.top_p, 0.8);
        assert_eq!(params.max_tokens, 512);
        assert!(params.stop_sequences.is_empty());
        assert_eq!(GenerationParams::default_for(true).max_tokens, 1024);
        assert_eq!(GenerationParams::default_for(false).max_tokens, 512);
    }

    #[test]
    fn request_validation_rejects_bad_params() {
        let mut req = request("hello");
        req.params.top_p = 0.0;
        assert!(matches!(
            req.validate(),
            Err(BackendError::InvalidRequest(_))
        ));
        let mut req = request("hello");
        req.messages.clear();
        assert!(req.validate().is_err());
        let mut req = request("hello");
        req.params.max_tokens = 0;
        assert!(req.validate().is_err());
    }

    #[test]
    fn cache_key_is_stable_and_sensitive() {
        let a = cache_key("scripted_mock", &request("hello"));
        let b = cache_key("scripted_mock", &request("hello"));
        assert_eq!(a, b);
        assert_eq!(a.len(), 64);
        let c = cache_key("scripted_mock", &request("other"));
        assert_ne!(a, c);
        let d = cache_key("remote_chat", &request("hello"));
        assert_ne!(a, d);
        let mut req = request("hello");
        req.params.temperature = 0.5;
        assert_ne!(cache_key("scripted_mock", &req), a);
        let mut req = request("hello");
        req.model_id = "another-model".to_string();
        assert_ne!(cache_key("scripted_mock", &req), a);
    }

    #[test]
    fn cache_key_ignores_example_id() {
        let mut with_id = request("hello");
        with_id.example_id = Some("ex-1".to_string());
        assert_eq!(
            cache_key("scripted_mock", &request("hello")),
            cache_key("scripted_mock", &with_id)
        );
    }

    #[test]
    fn many_distinct_requests_get_distinct_keys() {
        let mut keys = std::collections::HashSet::new();
        for i in 0..1000 {
            let key = cache_key("scripted_mock", &request(&format!("prompt number {i}")));
            assert!(keys.insert(key));
        }
        assert_eq!(keys.len(), 1000);
    }

    #[test]
    fn scripted_rules_match_in_order_and_unmatched_prompts_fail() {
        let backend = Backend::scripted(vec![
            ScriptRule::Exact {
                pattern: "system\nexact prompt".to_string(),
                reply: "exact reply".to_string(),
            },
            ScriptRule::Prefix {
                pattern: "system\nexact".to_string(),
                reply: "prefix reply".to_string(),
            },
            ScriptRule::Regex {
                pattern: "number \\d+".to_string(),
                reply: "regex reply".to_string(),
            },
        ])
        .unwrap();
        assert_eq!(
            backend.generate(&request("exact prompt")).unwrap().text,
            "exact reply"
        );
        assert_eq!(
            backend.generate(&request("exactly so")).unwrap().text,
            "prefix reply"
        );
        assert_eq!(
            backend.generate(&request("the number 42 appears")).unwrap().text,
            "regex reply"
        );
        let err = backend.generate(&request("nothing matches this")).unwrap_err();
        assert!(matches!(err, BackendError::UnscriptedPrompt { .. }));
    }

    #[test]
    fn repeated_generation_is_served_from_cache() {
        let backend = Backend::scripted(vec![ScriptRule::Regex {
            pattern: ".*".to_string(),
            reply: "the reply".to_string(),
        }])
        .unwrap();
        let first = backend.generate(&request("hello")).unwrap();
        assert!(!first.cache_hit);
        let second = backend.generate(&request("hello")).unwrap();
        assert!(second.cache_hit);
        assert_eq!(second.text, "the reply");
    }

    #[test]
    fn invalid_regex_rule_is_a_config_error() {
        let result = Backend::scripted(vec![ScriptRule::Regex {
            pattern: "(unclosed".to_string(),
            reply: "x".to_string(),
        }]);
        assert!(matches!(result, Err(BackendError::Config(_))));
    }

    #[test]
    fn embed_on_chat_backend_is_a_kind_error() {
        let backend = Backend::scripted(vec![]).unwrap();
        let err = backend.embed(&["text".to_string()]).unwrap_err();
        assert!(matches!(err, BackendError::WrongKind { .. }));
        let embedder = Backend::mock_embed();
        let err = embedder.generate(&request("hello")).unwrap_err();
        assert!(matches!(err, BackendError::WrongKind { .. }));
    }

    #[test]
    fn backend_spec_round_trips_through_toml() {
        let spec = BackendSpec::ScriptedMock {
            rules: vec![ScriptRule::Prefix {
                pattern: "p".to_string(),
                reply: "r".to_string(),
            }],
        };
        let text = toml::to_string(&spec).unwrap();
        let back: BackendSpec = toml::from_str(&text).unwrap();
        assert_eq!(spec, back);
        let embed_spec: BackendSpec = toml::from_str("kind = \"mock_embed\"\ndim = 64").unwrap();
        assert_eq!(
            embed_spec,
            BackendSpec::MockEmbed {
                dim: Some(64),
                planted: BTreeMap::new(),
            }
        );
    }
}

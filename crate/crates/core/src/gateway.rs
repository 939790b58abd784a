//! Minimal multi-provider chat gateway.
//!
//! Each call issues one completion request through an injected [`Transport`],
//! extracts real token usage (or estimates it), prices it, and records exactly
//! one telemetry event whether the call succeeds or fails.

use std::sync::Arc;
use std::time::Instant;

use async_trait::async_trait;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::pricing::{MatchKind, PricingRegistry};
use crate::telemetry::{Store, TelemetryEvent};
use crate::usage::{estimate_usage, extract_usage, Provider, TokenUsage};

pub const ANTHROPIC_URL: &str = "https://api.anthropic.com/v1/messages";
pub const ANTHROPIC_VERSION: &str = "2023-06-01";
pub const GEMINI_BASE_URL: &str = "https://generativelanguage.googleapis.com/v1beta/models";
pub const DEFAULT_OLLAMA_URL: &str = "http://localhost:11434";
pub const DEFAULT_MAX_TOKENS: u32 = 4096;

/// A fully-formed provider request.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProviderRequest {
    pub provider: Provider,
    pub url: String,
    pub headers: Vec<(String, String)>,
    pub body: Value,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TransportError {
    #[error("connection failed: {0}")]
    Connection(String),
    #[error("provider returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("invalid response body: {0}")]
    Decode(String),
}

/// Sends a request and returns the parsed JSON response body.
#[async_trait]
pub trait Transport: Send + Sync {
    async fn send(&self, request: ProviderRequest) -> std::result::Result<Value, TransportError>;
}

#[derive(Debug, Clone)]
pub struct Credentials {
    pub anthropic_api_key: Option<String>,
    pub google_api_key: Option<String>,
    pub ollama_base_url: String,
}

impl Default for Credentials {
    fn default() -> Self {
        Credentials {
            anthropic_api_key: None,
            google_api_key: None,
            ollama_base_url: DEFAULT_OLLAMA_URL.to_string(),
        }
    }
}

impl Credentials {
    pub fn from_env() -> Self {
        let var = |k| std::env::var(k).ok().filter(|v: &String| !v.trim().is_empty());
        Credentials {
            anthropic_api_key: var("ANTHROPIC_API_KEY"),
            google_api_key: var("GOOGLE_API_KEY"),
            ollama_base_url: var("OLLAMA_BASE_URL").unwrap_or_else(|| DEFAULT_OLLAMA_URL.into()),
        }
    }
}

/// Build the provider-specific request for a single-turn prompt.
pub fn build_request(
    provider: Provider,
    model: &str,
    prompt: &str,
    credentials: &Credentials,
) -> Result<ProviderRequest> {
    let json_ct = ("content-type".to_string(), "application/json".to_string());
    match provider {
        Provider::Anthropic => {
            let key = credentials
                .anthropic_api_key
                .as_deref()
                .ok_or_else(|| Error::Gateway("missing credentials: ANTHROPIC_API_KEY".into()))?;
            Ok(ProviderRequest {
                provider,
                url: ANTHROPIC_URL.to_string(),
                headers: vec![
                    json_ct,
                    ("x-api-key".into(), key.to_string()),
                    ("anthropic-version".into(), ANTHROPIC_VERSION.into()),
                ],
                body: json!({
                    "model": model,
                    "max_tokens": DEFAULT_MAX_TOKENS,
                    "messages": [{"role": "user", "content": prompt}],
                }),
            })
        }
        Provider::Gemini => {
            let key = credentials
                .google_api_key
                .as_deref()
                .ok_or_else(|| Error::Gateway("missing credentials: GOOGLE_API_KEY".into()))?;
            Ok(ProviderRequest {
                provider,
                url: format!("{GEMINI_BASE_URL}/{model}:generateContent"),
                headers: vec![json_ct, ("x-goog-api-key".into(), key.to_string())],
                body: json!({"contents": [{"role": "user", "parts": [{"text": prompt}]}]}),
            })
        }
        Provider::Ollama => Ok(ProviderRequest {
            provider,
            url: format!("{}/api/chat", credentials.ollama_base_url.trim_end_matches('/')),
            headers: vec![json_ct],
            body: json!({
                "model": model,
                "stream": false,
                "messages": [{"role": "user", "content": prompt}],
            }),
        }),
    }
}

/// Pull the assistant text out of a provider response. Missing text is "".
pub fn extract_text(provider: Provider, body: &Value) -> String {
    let join = |parts: Option<&Vec<Value>>, key: &str| {
        parts
            .into_iter()
            .flatten()
            .filter_map(|p| p.get(key).and_then(Value::as_str))
            .collect::<Vec<_>>()
            .join("")
    };
    match provider {
        Provider::Anthropic => join(body.get("content").and_then(Value::as_array), "text"),
        Provider::Gemini => join(
            body.pointer("/candidates/0/content/parts")
                .and_then(Value::as_array),
            "text",
        ),
        Provider::Ollama => body
            .pointer("/message/content")
            .or_else(|| body.get("response"))
            .and_then(Value::as_str)
            .unwrap_or_default()
            .to_string(),
    }
}

/// Telemetry labels for a gateway call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallTag {
    pub agent: String,
    pub operation: String,
    pub feature: String,
}

impl CallTag {
    pub fn new(agent: &str, operation: &str, feature: &str) -> Self {
        CallTag {
            agent: agent.into(),
            operation: operation.into(),
            feature: feature.into(),
        }
    }
}

impl Default for CallTag {
    fn default() -> Self {
        CallTag::new("ai_gateway", "chat", "chat")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GatewayResult {
    pub text: String,
    pub usage: TokenUsage,
    pub latency_ms: u64,
    pub provider: Provider,
    pub model: String,
    pub event_id: String,
    pub cost_usd: crate::money::Usd,
}

pub struct Gateway {
    store: Arc<Store>,
    registry: Arc<PricingRegistry>,
    transport: Arc<dyn Transport>,
    credentials: Credentials,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway").finish_non_exhaustive()
    }
}

impl Gateway {
    pub fn new(
        store: Arc<Store>,
        registry: Arc<PricingRegistry>,
        transport: Arc<dyn Transport>,
        credentials: Credentials,
    ) -> Self {
        Gateway {
            store,
            registry,
            transport,
            credentials,
        }
    }

    /// One completion request. On failure an error event is still recorded
    /// and the error is returned.
    pub async fn chat(
        &self,
        provider: Provider,
        model: &str,
        prompt: &str,
        tag: &CallTag,
    ) -> Result<GatewayResult> {
        let base = TelemetryEvent::new(&tag.agent, &tag.operation, provider.as_str(), model)
            .with_feature(&tag.feature);

        let request = match build_request(provider, model, prompt, &self.credentials) {
            Ok(r) => r,
            Err(e) => {
                self.store.record_event(&base.failed(e.to_string()))?;
                return Err(e);
            }
        };

        let started = Instant::now();
        let outcome = self.transport.send(request).await;
        let latency_ms = started.elapsed().as_millis() as u64;

        let body = match outcome {
            Ok(body) => body,
            Err(e) => {
                let mut event = base.failed(e.to_string());
                event.latency_ms = Some(latency_ms);
                self.store.record_event(&event)?;
                return Err(Error::Gateway(e.to_string()));
            }
        };

        let usage = extract_usage(provider, &body)
            .unwrap_or_else(|_| estimate_usage(prompt.chars().count() as u64));
        let (resolution, cost) = self.registry.price(model, &usage);

        let mut event = base
            .with_tokens(usage.input_tokens, usage.output_tokens)
            .with_cost(cost);
        event.latency_ms = Some(latency_ms);
        annotate_usage(&mut event, &usage, resolution.match_kind);
        self.store.record_event(&event)?;

        Ok(GatewayResult {
            text: extract_text(provider, &body),
            usage,
            latency_ms,
            provider,
            model: model.to_string(),
            event_id: event.id,
            cost_usd: cost,
        })
    }
}

/// Record the estimation flag, cache counts and pricing outcome in metadata.
pub(crate) fn annotate_usage(event: &mut TelemetryEvent, usage: &TokenUsage, kind: MatchKind) {
    let meta = &mut event.metadata;
    if usage.estimated {
        meta.insert("estimated".into(), Value::Bool(true));
    }
    if usage.cache_read_tokens > 0 {
        meta.insert("cache_read_tokens".into(), usage.cache_read_tokens.into());
    }
    if usage.cache_creation_tokens > 0 {
        meta.insert("cache_creation_tokens".into(), usage.cache_creation_tokens.into());
    }
    match kind {
        MatchKind::Unpriced => {
            meta.insert("unpriced".into(), Value::Bool(true));
        }
        MatchKind::Fuzzy => {
            meta.insert("pricing_match".into(), "fuzzy".into());
        }
        MatchKind::Exact => {}
    }
}

/// A transport that replays canned responses. Used by tests and for offline
/// demos.
pub struct FixtureTransport {
    responses: std::sync::Mutex<std::collections::VecDeque<std::result::Result<Value, TransportError>>>,
    requests: std::sync::Mutex<Vec<ProviderRequest>>,
}

impl FixtureTransport {
    pub fn new(
        responses: impl IntoIterator<Item = std::result::Result<Value, TransportError>>,
    ) -> Self {
        FixtureTransport {
            responses: std::sync::Mutex::new(responses.into_iter().collect()),
            requests: std::sync::Mutex::new(Vec::new()),
        }
    }

    pub fn requests(&self) -> Vec<ProviderRequest> {
        self.requests.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }
}

#[async_trait]
impl Transport for FixtureTransport {
    async fn send(&self, request: ProviderRequest) -> std::result::Result<Value, TransportError> {
        self.requests
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .push(request);
        self.responses
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .pop_front()
            .unwrap_or_else(|| Err(TransportError::Connection("fixture exhausted".into())))
    }
}

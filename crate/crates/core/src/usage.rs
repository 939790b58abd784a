//! Token usage as reported by provider APIs, with a character-count fallback
//! for responses that carry no usage block.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::Error;

/// Output tokens assumed when usage has to be estimated.
pub const ESTIMATED_OUTPUT_TOKENS: u64 = 500;
/// Characters per token assumed by the fallback estimate.
pub const CHARS_PER_TOKEN: u64 = 4;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub input_tokens: u64,
    pub output_tokens: u64,
    #[serde(default)]
    pub cache_read_tokens: u64,
    #[serde(default)]
    pub cache_creation_tokens: u64,
    #[serde(default)]
    pub estimated: bool,
}

impl TokenUsage {
    pub fn new(input_tokens: u64, output_tokens: u64) -> Self {
        TokenUsage {
            input_tokens,
            output_tokens,
            ..Default::default()
        }
    }

    pub fn with_cache(mut self, read: u64, creation: u64) -> Self {
        self.cache_read_tokens = read;
        self.cache_creation_tokens = creation;
        self
    }

    pub fn total(&self) -> u64 {
        self.input_tokens + self.output_tokens
    }
}

impl std::ops::Add for TokenUsage {
    type Output = TokenUsage;

    fn add(self, rhs: TokenUsage) -> TokenUsage {
        TokenUsage {
            input_tokens: self.input_tokens + rhs.input_tokens,
            output_tokens: self.output_tokens + rhs.output_tokens,
            cache_read_tokens: self.cache_read_tokens + rhs.cache_read_tokens,
            cache_creation_tokens: self.cache_creation_tokens + rhs.cache_creation_tokens,
            estimated: self.estimated || rhs.estimated,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provider {
    Anthropic,
    #[serde(alias = "google")]
    Gemini,
    Ollama,
}

impl Provider {
    pub fn as_str(self) -> &'static str {
        match self {
            Provider::Anthropic => "anthropic",
            Provider::Gemini => "gemini",
            Provider::Ollama => "ollama",
        }
    }
}

impl fmt::Display for Provider {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Provider {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.trim().to_ascii_lowercase().as_str() {
            "anthropic" | "claude" => Ok(Provider::Anthropic),
            "gemini" | "google" => Ok(Provider::Gemini),
            "ollama" => Ok(Provider::Ollama),
            other => Err(Error::invalid(
                "provider",
                format!("unsupported provider {other:?} (expected anthropic, gemini or ollama)"),
            )),
        }
    }
}

/// The response carried no usable usage block.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("usage missing from {provider} response: {field}")]
pub struct UsageMissing {
    pub provider: Provider,
    pub field: &'static str,
}

fn count(v: &Value, pointer: &str) -> Option<u64> {
    v.pointer(pointer).and_then(Value::as_u64)
}

/// Read token counts from a parsed provider response body.
///
/// Never fabricates counts: a missing or non-integer required field yields
/// [`UsageMissing`] so the caller can decide to estimate.
pub fn extract_usage(provider: Provider, body: &Value) -> Result<TokenUsage, UsageMissing> {
    let missing = |field| UsageMissing { provider, field };
    match provider {
        Provider::Anthropic => {
            let input = count(body, "/usage/input_tokens").ok_or(missing("usage.input_tokens"))?;
            let output =
                count(body, "/usage/output_tokens").ok_or(missing("usage.output_tokens"))?;
            Ok(TokenUsage::new(input, output).with_cache(
                count(body, "/usage/cache_read_input_tokens").unwrap_or(0),
                count(body, "/usage/cache_creation_input_tokens").unwrap_or(0),
            ))
        }
        Provider::Gemini => {
            let input = count(body, "/usageMetadata/promptTokenCount")
                .ok_or(missing("usageMetadata.promptTokenCount"))?;
            let output = count(body, "/usageMetadata/candidatesTokenCount")
                .ok_or(missing("usageMetadata.candidatesTokenCount"))?;
            Ok(TokenUsage::new(input, output))
        }
        Provider::Ollama => {
            let input = count(body, "/prompt_eval_count").ok_or(missing("prompt_eval_count"))?;
            let output = count(body, "/eval_count").ok_or(missing("eval_count"))?;
            Ok(TokenUsage::new(input, output))
        }
    }
}

/// Character heuristic used when a provider reports no usage:
/// `chars / 4` input tokens and a flat 500 output tokens.
pub fn estimate_usage(prompt_char_count: u64) -> TokenUsage {
    TokenUsage {
        input_tokens: prompt_char_count / CHARS_PER_TOKEN,
        output_tokens: ESTIMATED_OUTPUT_TOKENS,
        cache_read_tokens: 0,
        cache_creation_tokens: 0,
        estimated: true,
    }
}

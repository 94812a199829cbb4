//! Execution plane.
//!
//! [`ReferenceBackend`] stands in for a temperature-0 model: its output is a
//! pure function of `(prompt, seed, max_tokens)`, byte-identical across runs
//! and implementations. Remote model servers speak the
//! [`GenerateRequestBody`]/[`GenerateResponseBody`] contract; the HTTP client
//! for it lives in the service crate.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contract::Request;
use crate::hash::Fnv1a64;

/// Number of prompt codepoints echoed after the digest.
pub const ECHO_CODEPOINTS: usize = 48;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("backend unreachable: {0}")]
    Unreachable(String),
    #[error("backend returned an invalid response: {0}")]
    InvalidResponse(String),
    #[error("backend timed out after {0} ms")]
    Timeout(u64),
}

/// Anything that can execute a request.
pub trait Backend: Send + Sync {
    fn generate(&self, request: &Request) -> Result<String, BackendError>;
}

impl<B: Backend + ?Sized> Backend for std::sync::Arc<B> {
    fn generate(&self, request: &Request) -> Result<String, BackendError> {
        (**self).generate(request)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Reference,
    Remote,
}

/// Linear execution-cost model: `base + per_token * tokens`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyProfile {
    pub base_ms: f64,
    pub per_token_ms: f64,
}

impl LatencyProfile {
    /// Calibrated so the median RENDER output of the default replay set costs
    /// 412 ms (median RENDER output is 9 whitespace tokens).
    pub const SMALL_MODEL: LatencyProfile = LatencyProfile {
        base_ms: 187.0,
        per_token_ms: 25.0,
    };

    /// A 9B-parameter-scale profile: roughly 800-1200 ms per request.
    pub const LARGE_MODEL: LatencyProfile = LatencyProfile {
        base_ms: 800.0,
        per_token_ms: 28.571429,
    };

    pub fn new(base_ms: f64, per_token_ms: f64) -> Self {
        Self {
            base_ms: base_ms.max(0.0),
            per_token_ms: per_token_ms.max(0.0),
        }
    }

    /// Simulated execution time for `output`; tokens are whitespace-split.
    pub fn simulate_exec_latency(&self, output: &str) -> f64 {
        let tokens = output.split_whitespace().count() as f64;
        self.base_ms + self.per_token_ms * tokens
    }
}

impl Default for LatencyProfile {
    fn default() -> Self {
        Self::SMALL_MODEL
    }
}

/// Backend configuration as named in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendHandle {
    pub kind: BackendKind,
    pub profile: LatencyProfile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
}

impl BackendHandle {
    pub fn reference(profile: LatencyProfile) -> Self {
        Self {
            kind: BackendKind::Reference,
            profile,
            endpoint: None,
        }
    }

    pub fn remote(endpoint: impl Into<String>, profile: LatencyProfile) -> Self {
        Self {
            kind: BackendKind::Remote,
            profile,
            endpoint: Some(endpoint.into()),
        }
    }
}

/// The deterministic hash-template generator.
#[derive(Debug, Clone, Copy, Default)]
pub struct ReferenceBackend;

impl ReferenceBackend {
    pub fn new() -> Self {
        Self
    }

    /// `"GEN:" + hex16(fnv1a64(prompt 0x1F seed 0x1F max_tokens)) + ":" + prefix`
    pub fn render(prompt: &str, seed: i64, max_tokens: u32) -> String {
        let digest = Fnv1a64::new()
            .update(prompt.as_bytes())
            .update(&[0x1f])
            .update(seed.to_string().as_bytes())
            .update(&[0x1f])
            .update(max_tokens.to_string().as_bytes())
            .finish();
        let echo: String = prompt.chars().take(ECHO_CODEPOINTS).collect();
        format!("GEN:{digest:016x}:{echo}")
    }
}

impl Backend for ReferenceBackend {
    fn generate(&self, request: &Request) -> Result<String, BackendError> {
        Ok(Self::render(&request.prompt, request.seed, request.max_tokens))
    }
}

/// Body sent to a remote model server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateRequestBody {
    pub request_id: String,
    pub prompt: String,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub seed: i64,
}

impl From<&Request> for GenerateRequestBody {
    fn from(r: &Request) -> Self {
        Self {
            request_id: r.request_id.clone(),
            prompt: r.prompt.clone(),
            model: r.model.clone(),
            temperature: r.temperature,
            max_tokens: r.max_tokens,
            seed: r.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerateResponseBody {
    pub request_id: String,
    pub output: String,
}

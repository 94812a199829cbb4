//! Request and decision contracts.
//!
//! The gate's verdict is one of four decisions. Each carries its own output
//! rule: `RENDER` is exactly the backend's output, `DIRECT` is the bounded
//! response verbatim, `NO_OP` is the empty output and `ABSTAIN` is a fixed
//! refusal. [`dispatch`] is the single place those rules are applied.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{Backend, BackendError};

pub const DEFAULT_SEED: i64 = 12345;
pub const DEFAULT_MAX_TOKENS: u32 = 1000;
pub const DEFAULT_MODEL: &str = "gpt2-124m";

/// Fixed text returned for `ABSTAIN`.
pub const REFUSAL_TEXT: &str = "I can't help with that request.";

/// Exchange rate used by [`action_utility`]: one value unit per this many ms.
pub const DEFAULT_MS_PER_VALUE_UNIT: f64 = 1000.0;

/// A prompt plus its generation configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub request_id: String,
    pub prompt: String,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub seed: i64,
}

impl Request {
    /// A request under the deterministic protocol (temperature 0, seed 12345,
    /// 1000 max tokens).
    pub fn deterministic(request_id: impl Into<String>, prompt: impl Into<String>) -> Self {
        Self {
            request_id: request_id.into(),
            prompt: prompt.into(),
            model: DEFAULT_MODEL.to_string(),
            temperature: 0.0,
            max_tokens: DEFAULT_MAX_TOKENS,
            seed: DEFAULT_SEED,
        }
    }
}

/// An unvalidated request as it arrives on the wire.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RawRequest {
    #[serde(default)]
    pub request_id: Option<String>,
    #[serde(default)]
    pub prompt: Option<String>,
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default)]
    pub temperature: Option<f64>,
    #[serde(default)]
    pub max_tokens: Option<i64>,
    #[serde(default)]
    pub seed: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid field `{field}`: {reason}")]
pub struct ValidationError {
    pub field: &'static str,
    pub reason: String,
}

impl ValidationError {
    fn new(field: &'static str, reason: impl Into<String>) -> Self {
        Self {
            field,
            reason: reason.into(),
        }
    }
}

/// Turns a wire request into a [`Request`], naming the first field that fails.
///
/// `seed` is optional and defaults to the deterministic-protocol seed; every
/// other field is required.
pub fn validate_request(raw: RawRequest) -> Result<Request, ValidationError> {
    let request_id = raw
        .request_id
        .ok_or_else(|| ValidationError::new("request_id", "missing"))?;
    if request_id.is_empty() {
        return Err(ValidationError::new("request_id", "must not be empty"));
    }
    let prompt = raw
        .prompt
        .ok_or_else(|| ValidationError::new("prompt", "missing"))?;
    let model = raw
        .model
        .ok_or_else(|| ValidationError::new("model", "missing"))?;
    let temperature = raw
        .temperature
        .ok_or_else(|| ValidationError::new("temperature", "missing"))?;
    if !temperature.is_finite() || temperature < 0.0 {
        return Err(ValidationError::new(
            "temperature",
            format!("must be a non-negative number, got {temperature}"),
        ));
    }
    let max_tokens = raw
        .max_tokens
        .ok_or_else(|| ValidationError::new("max_tokens", "missing"))?;
    if max_tokens < 1 {
        return Err(ValidationError::new(
            "max_tokens",
            format!("must be positive, got {max_tokens}"),
        ));
    }
    let max_tokens = u32::try_from(max_tokens)
        .map_err(|_| ValidationError::new("max_tokens", format!("too large: {max_tokens}")))?;
    Ok(Request {
        request_id,
        prompt,
        model,
        temperature,
        max_tokens,
        seed: raw.seed.unwrap_or(DEFAULT_SEED),
    })
}

/// The gate's four-way verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Decision {
    Render,
    Direct,
    NoOp,
    Abstain,
}

impl Decision {
    pub const ALL: [Decision; 4] = [
        Decision::Render,
        Decision::Direct,
        Decision::NoOp,
        Decision::Abstain,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Decision::Render => "RENDER",
            Decision::Direct => "DIRECT",
            Decision::NoOp => "NO_OP",
            Decision::Abstain => "ABSTAIN",
        }
    }

    pub fn is_bounded(self) -> bool {
        self != Decision::Render
    }
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which bounded pathway produced a `DIRECT` response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProofTag {
    CacheHit,
    DeterministicRule,
    KbLookup,
}

impl ProofTag {
    pub fn as_str(self) -> &'static str {
        match self {
            ProofTag::CacheHit => "cache_hit",
            ProofTag::DeterministicRule => "deterministic_rule",
            ProofTag::KbLookup => "kb_lookup",
        }
    }
}

impl fmt::Display for ProofTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Why the gate fell back to execution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RenderReason {
    NovelGeneration,
    SemanticAmbiguity,
    LowConfidence,
    NoPathway,
}

impl RenderReason {
    pub const ALL: [RenderReason; 4] = [
        RenderReason::NovelGeneration,
        RenderReason::SemanticAmbiguity,
        RenderReason::LowConfidence,
        RenderReason::NoPathway,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RenderReason::NovelGeneration => "novel_generation",
            RenderReason::SemanticAmbiguity => "semantic_ambiguity",
            RenderReason::LowConfidence => "low_confidence",
            RenderReason::NoPathway => "no_pathway",
        }
    }
}

impl fmt::Display for RenderReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Workload category of a replay entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Factual,
    Conversational,
    Creative,
    Redundant,
    Trivial,
    Safety,
    Mixed,
}

impl Category {
    pub const ALL: [Category; 7] = [
        Category::Factual,
        Category::Conversational,
        Category::Creative,
        Category::Redundant,
        Category::Trivial,
        Category::Safety,
        Category::Mixed,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Factual => "factual",
            Category::Conversational => "conversational",
            Category::Creative => "creative",
            Category::Redundant => "redundant",
            Category::Trivial => "trivial",
            Category::Safety => "safety",
            Category::Mixed => "mixed",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown category `{0}`")]
pub struct UnknownCategory(pub String);

impl FromStr for Category {
    type Err = UnknownCategory;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Category::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| UnknownCategory(s.to_string()))
    }
}

/// The control-plane verdict for one request.
///
/// Construct through [`GateOutcome::render`], [`GateOutcome::direct`],
/// [`GateOutcome::no_op`] or [`GateOutcome::abstain`]; those keep the
/// optional fields consistent with the decision. Outcomes that arrive from
/// elsewhere (deserialized, hand-built) are checked by [`GateOutcome::check`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateOutcome {
    pub decision: Decision,
    pub confidence: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direct_output: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proof_tag: Option<ProofTag>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub render_reason: Option<RenderReason>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ContractViolation {
    #[error("DIRECT outcome without direct_output")]
    MissingDirectOutput,
    #[error("DIRECT outcome without proof_tag")]
    MissingProofTag,
    #[error("{0} outcome carries direct_output or proof_tag")]
    UnexpectedDirectFields(Decision),
    #[error("{0} outcome carries a render_reason")]
    UnexpectedRenderReason(Decision),
    #[error("RENDER outcome without render_reason")]
    MissingRenderReason,
    #[error("confidence {0} outside [0, 1]")]
    ConfidenceOutOfRange(String),
}

impl GateOutcome {
    pub fn render(reason: RenderReason, confidence: f64) -> Self {
        Self {
            decision: Decision::Render,
            confidence: confidence.clamp(0.0, 1.0),
            direct_output: None,
            proof_tag: None,
            render_reason: Some(reason),
        }
    }

    pub fn direct(output: impl Into<String>, proof: ProofTag, confidence: f64) -> Self {
        Self {
            decision: Decision::Direct,
            confidence: confidence.clamp(0.0, 1.0),
            direct_output: Some(output.into()),
            proof_tag: Some(proof),
            render_reason: None,
        }
    }

    pub fn no_op(confidence: f64) -> Self {
        Self {
            decision: Decision::NoOp,
            confidence: confidence.clamp(0.0, 1.0),
            direct_output: None,
            proof_tag: None,
            render_reason: None,
        }
    }

    pub fn abstain(confidence: f64) -> Self {
        Self {
            decision: Decision::Abstain,
            confidence: confidence.clamp(0.0, 1.0),
            direct_output: None,
            proof_tag: None,
            render_reason: None,
        }
    }

    pub fn check(&self) -> Result<(), ContractViolation> {
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(ContractViolation::ConfidenceOutOfRange(
                self.confidence.to_string(),
            ));
        }
        match self.decision {
            Decision::Direct => {
                if self.direct_output.is_none() {
                    return Err(ContractViolation::MissingDirectOutput);
                }
                if self.proof_tag.is_none() {
                    return Err(ContractViolation::MissingProofTag);
                }
                if self.render_reason.is_some() {
                    return Err(ContractViolation::UnexpectedRenderReason(self.decision));
                }
            }
            other => {
                if self.direct_output.is_some() || self.proof_tag.is_some() {
                    return Err(ContractViolation::UnexpectedDirectFields(other));
                }
                match (other, self.render_reason) {
                    (Decision::Render, None) => return Err(ContractViolation::MissingRenderReason),
                    (Decision::NoOp | Decision::Abstain, Some(_)) => {
                        return Err(ContractViolation::UnexpectedRenderReason(other))
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }
}

/// How a [`FinalResponse`] was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseKind {
    /// Backend output.
    Generated,
    /// Bounded response returned without execution.
    Direct,
    /// The empty output of `NO_OP`.
    Empty,
    /// The refusal of `ABSTAIN`.
    Refusal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinalResponse {
    pub kind: ResponseKind,
    pub text: String,
}

impl FinalResponse {
    pub fn empty() -> Self {
        Self {
            kind: ResponseKind::Empty,
            text: String::new(),
        }
    }

    pub fn refusal() -> Self {
        Self {
            kind: ResponseKind::Refusal,
            text: REFUSAL_TEXT.to_string(),
        }
    }
}

#[derive(Debug, Error)]
pub enum DispatchError {
    #[error("backend failed for request {request_id}: {source}")]
    Backend {
        request_id: String,
        #[source]
        source: BackendError,
    },
    #[error("contract violation: {0}")]
    Contract(#[from] ContractViolation),
}

/// Applies a gate outcome.
///
/// Only `RENDER` touches the backend, and it hands over the request exactly as
/// received.
pub fn dispatch(
    outcome: &GateOutcome,
    request: &Request,
    backend: &dyn Backend,
) -> Result<FinalResponse, DispatchError> {
    outcome.check()?;
    match outcome.decision {
        Decision::Render => {
            let text = backend
                .generate(request)
                .map_err(|source| DispatchError::Backend {
                    request_id: request.request_id.clone(),
                    source,
                })?;
            Ok(FinalResponse {
                kind: ResponseKind::Generated,
                text,
            })
        }
        Decision::Direct => Ok(FinalResponse {
            kind: ResponseKind::Direct,
            // check() guarantees presence
            text: outcome.direct_output.clone().unwrap_or_default(),
        }),
        Decision::NoOp => Ok(FinalResponse::empty()),
        Decision::Abstain => Ok(FinalResponse::refusal()),
    }
}

/// Cost of taking `action`: execution plus gating for `RENDER`, gating alone
/// otherwise. Milliseconds in, milliseconds out.
pub fn action_cost(action: Decision, gate_latency_ms: f64, exec_latency_ms: f64) -> f64 {
    match action {
        Decision::Render => exec_latency_ms + gate_latency_ms,
        _ => gate_latency_ms,
    }
}

/// Inputs to the utility of one action.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub gate_cost_ms: f64,
    pub exec_cost_ms: f64,
    pub value: f64,
    pub correct: bool,
}

impl CostModel {
    /// Builds the model for `action`, charging execution only when it renders.
    pub fn for_action(action: Decision, gate_latency_ms: f64, exec_latency_ms: f64, correct: bool) -> Self {
        let exec_cost_ms = action_cost(action, gate_latency_ms, exec_latency_ms) - gate_latency_ms;
        Self {
            gate_cost_ms: gate_latency_ms,
            exec_cost_ms,
            value: 1.0,
            correct,
        }
    }

    pub fn total_cost_ms(&self) -> f64 {
        self.gate_cost_ms + self.exec_cost_ms
    }
}

/// `1[correct] * value - cost`, with cost converted at one value unit per
/// second.
pub fn action_utility(model: &CostModel) -> f64 {
    action_utility_with_rate(model, DEFAULT_MS_PER_VALUE_UNIT)
}

pub fn action_utility_with_rate(model: &CostModel, ms_per_value_unit: f64) -> f64 {
    let indicator = if model.correct { 1.0 } else { 0.0 };
    indicator * model.value - model.total_cost_ms() / ms_per_value_unit
}

use std::sync::Arc;
use std::time::Instant;

use mfee_core::backend::{Backend, BackendError, BackendKind, LatencyProfile, ReferenceBackend};
use mfee_core::contract::{dispatch, DispatchError, ResponseKind, ValidationError};
use mfee_core::fixtures::{FixtureError, Fixtures};
use mfee_core::hash::fnv1a64;
use mfee_core::{validate_request, Decision, Gate, ProofTag, RawRequest, RenderReason, Request};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::ServiceConfig;
use crate::killswitch::{KillSwitch, KillSwitchState, Trigger};
use crate::metrics::{Metrics, MetricsSnapshot};
use crate::remote::RemoteBackend;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error("backend failed for request {request_id}: {source}")]
    Backend {
        request_id: String,
        #[source]
        source: BackendError,
    },
    #[error("contract violation: {0}")]
    Contract(String),
    #[error(transparent)]
    Fixtures(#[from] FixtureError),
}

/// `/gate` response body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateResponse {
    pub decision: Decision,
    pub confidence: f64,
    pub direct_output: Option<String>,
}

/// `/infer` response body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferResponse {
    pub request_id: String,
    pub decision: Decision,
    pub kind: ResponseKind,
    pub output: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proof_tag: Option<ProofTag>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub render_reason: Option<RenderReason>,
    pub gate_latency_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exec_latency_ms: Option<f64>,
    /// The kill switch was engaged and the gate was not consulted.
    #[serde(default)]
    pub bypassed: bool,
}

/// Gate, backend and operational state shared by all handlers.
pub struct ControlPlane {
    gate: Arc<Gate>,
    backend: Arc<dyn Backend>,
    oracle: Arc<dyn Backend>,
    profile: LatencyProfile,
    simulated_latency: bool,
    kill: KillSwitch,
    metrics: Metrics,
    sample_rate: f64,
    breach_threshold_ms: f64,
}

impl ControlPlane {
    pub fn new(gate: Gate, backend: Arc<dyn Backend>, config: &ServiceConfig) -> Self {
        let breach_threshold_ms = config.latency_breach_factor * config.gate.latency_budget_ms;
        Self {
            gate: Arc::new(gate),
            oracle: Arc::clone(&backend),
            backend,
            profile: config.backend.profile,
            simulated_latency: config.backend.kind == BackendKind::Reference,
            kill: KillSwitch::new(config.kill_switch),
            metrics: Metrics::new(config.latency_window),
            sample_rate: config.equivalence_sample_rate,
            breach_threshold_ms,
        }
    }

    /// Builds the gate over bundled or on-disk fixtures and the configured
    /// backend.
    pub fn from_config(config: &ServiceConfig) -> Result<Self, ServiceError> {
        let fixtures = match &config.fixtures_dir {
            Some(dir) => Fixtures::load_dir(dir)?,
            None => Fixtures::bundled()?,
        };
        let gate = fixtures.gate(config.gate.clone())?;
        let backend: Arc<dyn Backend> = match (&config.backend.kind, &config.backend.endpoint) {
            (BackendKind::Remote, Some(endpoint)) => Arc::new(
                RemoteBackend::new(
                    endpoint.clone(),
                    config.backend_timeout,
                    config.backend_max_in_flight,
                )
                .map_err(|source| ServiceError::Backend {
                    request_id: String::new(),
                    source,
                })?,
            ),
            _ => Arc::new(ReferenceBackend),
        };
        Ok(Self::new(gate, backend, config))
    }

    /// Replaces what sampled RENDER outputs are compared against. Defaults to
    /// re-running the serving backend.
    pub fn with_equivalence_oracle(mut self, oracle: Arc<dyn Backend>) -> Self {
        self.oracle = oracle;
        self
    }

    pub fn gate(&self) -> &Gate {
        &self.gate
    }

    pub fn kill_switch(&self) -> &KillSwitch {
        &self.kill
    }

    pub fn metrics_snapshot(&self) -> MetricsSnapshot {
        self.metrics.snapshot(self.kill.state())
    }

    pub fn kill_switch_update(&self, signal: Option<Trigger>) -> KillSwitchState {
        match signal {
            Some(t) => self.kill.trigger(t),
            None => self.kill.reset(),
        }
    }

    /// Whether a RENDER for `request_id` is re-generated and compared.
    pub fn is_sampled(&self, request_id: &str) -> bool {
        const SCALE: u64 = 1_000_000;
        (fnv1a64(request_id.as_bytes()) % SCALE) < (self.sample_rate * SCALE as f64).round() as u64
    }

    fn gate_timed(&self, request: &Request) -> (mfee_core::GateOutcome, f64) {
        let started = Instant::now();
        let (outcome, _trace) = self.gate.evaluate(request);
        let ms = started.elapsed().as_secs_f64() * 1000.0;
        if let Some(p95) = self.metrics.record_gated(outcome.decision, ms) {
            if p95 > self.breach_threshold_ms && !self.kill.is_engaged() {
                self.kill.trigger(Trigger::LatencyBreach);
            }
        }
        (outcome, ms)
    }

    pub fn handle_gate(&self, raw: RawRequest) -> Result<GateResponse, ServiceError> {
        let request = validate_request(raw)?;
        if self.kill.is_engaged() {
            self.metrics.record_bypass();
            return Ok(GateResponse {
                decision: Decision::Render,
                confidence: 1.0,
                direct_output: None,
            });
        }
        let (outcome, _) = self.gate_timed(&request);
        Ok(GateResponse {
            decision: outcome.decision,
            confidence: outcome.confidence,
            direct_output: outcome.direct_output,
        })
    }

    fn execute(&self, request: &Request) -> Result<(String, f64), ServiceError> {
        let started = Instant::now();
        let output = self.backend.generate(request).map_err(|source| {
            self.kill.trigger(Trigger::InternalError);
            ServiceError::Backend {
                request_id: request.request_id.clone(),
                source,
            }
        })?;
        let ms = if self.simulated_latency {
            self.profile.simulate_exec_latency(&output)
        } else {
            started.elapsed().as_secs_f64() * 1000.0
        };
        self.metrics.record_backend(ms);
        Ok((output, ms))
    }

    pub fn handle_infer(&self, raw: RawRequest) -> Result<InferResponse, ServiceError> {
        let request = validate_request(raw)?;
        if self.kill.is_engaged() {
            self.metrics.record_bypass();
            let (output, exec) = self.execute(&request)?;
            return Ok(InferResponse {
                request_id: request.request_id,
                decision: Decision::Render,
                kind: ResponseKind::Generated,
                output,
                proof_tag: None,
                render_reason: None,
                gate_latency_ms: 0.0,
                exec_latency_ms: Some(exec),
                bypassed: true,
            });
        }

        let (outcome, gate_ms) = self.gate_timed(&request);
        let mut response = InferResponse {
            request_id: request.request_id.clone(),
            decision: outcome.decision,
            kind: ResponseKind::Generated,
            output: String::new(),
            proof_tag: outcome.proof_tag,
            render_reason: outcome.render_reason,
            gate_latency_ms: gate_ms,
            exec_latency_ms: None,
            bypassed: false,
        };
        if outcome.decision == Decision::Render {
            let (output, exec) = self.execute(&request)?;
            self.gate.record_render(&request, &output);
            if self.is_sampled(&request.request_id) {
                self.check_equivalence(&request, &output);
            }
            response.output = output;
            response.exec_latency_ms = Some(exec);
            return Ok(response);
        }
        // bounded decisions never reach the backend
        struct NoBackend;
        impl Backend for NoBackend {
            fn generate(&self, _: &Request) -> Result<String, BackendError> {
                Err(BackendError::Unreachable("bounded decision".into()))
            }
        }
        let fin = dispatch(&outcome, &request, &NoBackend).map_err(|e| match e {
            DispatchError::Contract(v) => ServiceError::Contract(v.to_string()),
            DispatchError::Backend { request_id, source } => ServiceError::Backend { request_id, source },
        })?;
        response.kind = fin.kind;
        response.output = fin.text;
        Ok(response)
    }

    fn check_equivalence(&self, request: &Request, served: &str) {
        let passed = matches!(self.oracle.generate(request), Ok(expected) if expected == served);
        self.metrics.record_equivalence(passed);
        if !passed {
            self.kill.trigger(Trigger::EquivalenceViolation);
        }
    }
}

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use web_time::Instant;

use super::baseline::BaselineRecord;
use super::replay::{Pathway, ReplayEntry};
use super::EvalError;
use crate::backend::{Backend, LatencyProfile};
use crate::contract::{Category, Decision, ProofTag, RenderReason, REFUSAL_TEXT};
use crate::gate::Gate;
use crate::resolvers::{canonicalize, config_fingerprint, deterministic_solve, CanonicalKey};

/// One gated request and how it was checked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub request_id: String,
    pub category: Category,
    pub decision: Decision,
    pub confidence: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proof_tag: Option<ProofTag>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub render_reason: Option<RenderReason>,
    pub output: String,
    /// RENDER only: byte equality with the stored baseline.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact_match: Option<bool>,
    /// Bounded decisions only: the pathway re-check succeeded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validated: Option<bool>,
    pub gate_latency_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exec_latency_ms: Option<f64>,
}

impl EvalRecord {
    /// False for a RENDER mismatch or a bounded response that failed its check.
    pub fn is_correct(&self) -> bool {
        self.exact_match.unwrap_or(true) && self.validated.unwrap_or(true)
    }
}

/// Replays `replay` through `gate` in order.
///
/// RENDER executes `backend` with the unchanged request and byte-compares to
/// the baseline, then warms the cache. Bounded decisions are re-validated: a
/// cache hit against the baseline of the request that populated the entry,
/// solver answers by recomputation, KB answers by re-reading the fact source,
/// NO_OP and ABSTAIN against the fixture's expected pathway. Validation
/// failures are recorded; a missing baseline or backend failure aborts.
pub fn run_replay(
    replay: &[ReplayEntry],
    baselines: &[BaselineRecord],
    gate: &Gate,
    backend: &dyn Backend,
    profile: &LatencyProfile,
) -> Result<Vec<EvalRecord>, EvalError> {
    let mut runner = ReplayRunner::new(baselines, gate, backend, profile)?;
    replay.iter().map(|e| runner.step(e)).collect()
}

/// [`run_replay`] one entry at a time, for callers that interleave runs.
pub struct ReplayRunner<'a> {
    by_id: HashMap<&'a str, &'a BaselineRecord>,
    gate: &'a Gate,
    backend: &'a dyn Backend,
    profile: &'a LatencyProfile,
    populated: HashMap<(CanonicalKey, u64), String>,
}

impl<'a> ReplayRunner<'a> {
    pub fn new(
        baselines: &'a [BaselineRecord],
        gate: &'a Gate,
        backend: &'a dyn Backend,
        profile: &'a LatencyProfile,
    ) -> Result<Self, EvalError> {
        Ok(Self {
            by_id: index_baselines(baselines)?,
            gate,
            backend,
            profile,
            populated: HashMap::new(),
        })
    }

    pub fn step(&mut self, entry: &ReplayEntry) -> Result<EvalRecord, EvalError> {
        let baseline = self
            .by_id
            .get(entry.request.request_id.as_str())
            .ok_or_else(|| EvalError::MissingBaseline(entry.request.request_id.clone()))?;
        evaluate_one(
            entry,
            baseline,
            self.gate,
            self.backend,
            self.profile,
            &mut self.populated,
        )
    }
}

/// Same records as [`run_replay`] without inter-request cache warming order;
/// refused when any entry relies on an earlier one.
pub fn run_replay_parallel(
    replay: &[ReplayEntry],
    baselines: &[BaselineRecord],
    gate: &Gate,
    backend: &dyn Backend,
    profile: &LatencyProfile,
    threads: usize,
) -> Result<Vec<EvalRecord>, EvalError> {
    if replay
        .iter()
        .any(|e| e.category == Category::Redundant || e.expected_pathway == Some(Pathway::CacheHit))
    {
        return Err(EvalError::ParallelWithRedundant);
    }
    let by_id = index_baselines(baselines)?;
    let chunk = replay.len().div_ceil(threads.max(1)).max(1);
    let results: Vec<Result<Vec<EvalRecord>, EvalError>> = std::thread::scope(|s| {
        let handles: Vec<_> = replay
            .chunks(chunk)
            .map(|part| {
                let by_id = &by_id;
                s.spawn(move || {
                    let mut populated = HashMap::new();
                    part.iter()
                        .map(|e| {
                            let b = by_id
                                .get(e.request.request_id.as_str())
                                .ok_or_else(|| EvalError::MissingBaseline(e.request.request_id.clone()))?;
                            evaluate_one(e, b, gate, backend, profile, &mut populated)
                        })
                        .collect()
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker panicked"))
            .collect()
    });
    let mut out = Vec::with_capacity(replay.len());
    for part in results {
        out.extend(part?);
    }
    Ok(out)
}

fn index_baselines(baselines: &[BaselineRecord]) -> Result<HashMap<&str, &BaselineRecord>, EvalError> {
    let mut by_id = HashMap::with_capacity(baselines.len());
    let mut seen = HashSet::new();
    for b in baselines {
        if !seen.insert(b.request_id.as_str()) {
            return Err(EvalError::DuplicateId(b.request_id.clone()));
        }
        by_id.insert(b.request_id.as_str(), b);
    }
    Ok(by_id)
}

fn evaluate_one(
    entry: &ReplayEntry,
    baseline: &BaselineRecord,
    gate: &Gate,
    backend: &dyn Backend,
    profile: &LatencyProfile,
    populated: &mut HashMap<(CanonicalKey, u64), String>,
) -> Result<EvalRecord, EvalError> {
    let request = &entry.request;
    let started = Instant::now();
    let (outcome, _trace) = gate.evaluate(request);
    let gate_latency_ms = started.elapsed().as_secs_f64() * 1000.0;

    let slot = || (canonicalize(&request.prompt), config_fingerprint(request));
    let mut record = EvalRecord {
        request_id: request.request_id.clone(),
        category: entry.category,
        decision: outcome.decision,
        confidence: outcome.confidence,
        proof_tag: outcome.proof_tag,
        render_reason: outcome.render_reason,
        output: String::new(),
        exact_match: None,
        validated: None,
        gate_latency_ms,
        exec_latency_ms: None,
    };
    match outcome.decision {
        Decision::Render => {
            let output = backend.generate(request).map_err(|source| EvalError::Backend {
                request_id: request.request_id.clone(),
                source,
            })?;
            record.exact_match = Some(output == baseline.baseline_output);
            record.exec_latency_ms = Some(profile.simulate_exec_latency(&output));
            gate.record_render(request, &output);
            populated
                .entry(slot())
                .or_insert_with(|| baseline.baseline_output.clone());
            record.output = output;
        }
        Decision::Direct => {
            let output = outcome.direct_output.unwrap_or_default();
            let ok = match outcome.proof_tag {
                Some(ProofTag::CacheHit) => populated.get(&slot()) == Some(&output),
                Some(ProofTag::DeterministicRule) => {
                    deterministic_solve(&request.prompt).as_deref() == Some(output.as_str())
                }
                Some(ProofTag::KbLookup) => matches!(
                    gate.facts().lookup(&canonicalize(&request.prompt)),
                    Ok(Some(f)) if f.answer == output
                ),
                None => false,
            };
            record.validated = Some(ok);
            record.output = output;
        }
        Decision::NoOp => {
            record.validated = Some(entry.expected_pathway == Some(Pathway::NoOp));
        }
        Decision::Abstain => {
            record.validated = Some(entry.expected_pathway == Some(Pathway::Abstain));
            record.output = REFUSAL_TEXT.to_string();
        }
    }
    Ok(record)
}

use std::collections::{BTreeSet, HashSet};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::baseline::generate_baselines;
use super::replay::ReplayEntry;
use super::run::{run_replay, EvalRecord};
use super::EvalError;
use crate::backend::{Backend, LatencyProfile};
use crate::contract::Decision;
use crate::gate::Gate;
use crate::resolvers::{canonicalize, config_fingerprint};

/// A replay entry stamped with when and from whom it arrived.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    #[serde(flatten)]
    pub entry: ReplayEntry,
    pub timestamp: DateTime<Utc>,
    #[serde(default)]
    pub user: String,
    #[serde(default)]
    pub issue: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalReport {
    pub entries: usize,
    pub users: usize,
    pub issues: usize,
    /// Executions an ungated deployment with request deduplication needs:
    /// one per distinct request.
    pub baseline_calls: usize,
    pub gated_calls: usize,
    pub avoided: usize,
    pub avoidance_rate: f64,
    /// Records whose output failed validation or byte comparison.
    pub regressions: Vec<String>,
    pub records: Vec<EvalRecord>,
}

pub fn parse_trace_jsonl(text: &str) -> Result<Vec<TraceEntry>, EvalError> {
    super::from_jsonl(text)
}

/// Replays a timestamped trace in arrival order against `gate`, whose cache
/// warms as the trace proceeds. Baselines are produced by `backend`.
pub fn run_temporal(
    trace: &[TraceEntry],
    gate: &Gate,
    backend: &dyn Backend,
    profile: &LatencyProfile,
) -> Result<TemporalReport, EvalError> {
    for pair in trace.windows(2) {
        if pair[1].timestamp < pair[0].timestamp {
            return Err(EvalError::Unordered {
                request_id: pair[1].entry.request.request_id.clone(),
            });
        }
    }
    let replay: Vec<ReplayEntry> = trace.iter().map(|t| t.entry.clone()).collect();
    let baselines = generate_baselines(&replay, backend)?;
    let records = run_replay(&replay, &baselines, gate, backend, profile)?;

    let distinct: HashSet<_> = replay
        .iter()
        .map(|e| (canonicalize(&e.request.prompt), config_fingerprint(&e.request)))
        .collect();
    let baseline_calls = distinct.len();
    let gated_calls = records.iter().filter(|r| r.decision == Decision::Render).count();
    let avoided = baseline_calls.saturating_sub(gated_calls);
    Ok(TemporalReport {
        entries: trace.len(),
        users: trace.iter().map(|t| &t.user).collect::<BTreeSet<_>>().len(),
        issues: trace.iter().map(|t| &t.issue).collect::<BTreeSet<_>>().len(),
        baseline_calls,
        gated_calls,
        avoided,
        avoidance_rate: if baseline_calls == 0 {
            0.0
        } else {
            avoided as f64 / baseline_calls as f64
        },
        regressions: records
            .iter()
            .filter(|r| !r.is_correct())
            .map(|r| r.request_id.clone())
            .collect(),
        records,
    })
}

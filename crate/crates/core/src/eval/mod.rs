//! Replay evaluation: synthetic replay sets, stored baselines, the
//! gate-then-validate protocol, metrics, router comparison, temporal traces
//! and report emission.

mod baseline;
mod compare;
mod metrics;
mod replay;
mod report;
mod run;
mod temporal;

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

pub use baseline::{generate_baselines, parse_baselines_jsonl, write_baselines_jsonl, BaselineRecord};
pub use compare::{compare_routers, FrontierTable};
pub use metrics::{compute_metrics, nearest_rank, EvalReport, LatencySummary};
pub use replay::{
    build_replay_set, label_entries, parse_replay_jsonl, write_replay_jsonl, Mix, Pathway, ReplayEntry,
};
pub use report::{render_frontier_table, render_report, render_temporal, write_run_dir, RunArtifacts};
pub use run::{run_replay, run_replay_parallel, EvalRecord, ReplayRunner};
pub use temporal::{parse_trace_jsonl, run_temporal, TemporalReport, TraceEntry};

use crate::backend::BackendError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid mix: {0}")]
    Mix(String),
    #[error("line {line}: {source}")]
    Jsonl {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("generation failed for request {request_id}: {source}")]
    Backend {
        request_id: String,
        #[source]
        source: BackendError,
    },
    #[error("no baseline for request {0}")]
    MissingBaseline(String),
    #[error("duplicate request_id {0}")]
    DuplicateId(String),
    #[error("no records to summarize")]
    Empty,
    #[error("trace is not in timestamp order at {request_id}")]
    Unordered { request_id: String },
    #[error("parallel evaluation is not allowed when the replay contains redundant entries")]
    ParallelWithRedundant,
    #[error(transparent)]
    Fixture(#[from] crate::fixtures::FixtureError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn to_jsonl<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("records serialize"));
        out.push('\n');
    }
    out
}

pub(crate) fn from_jsonl<T: DeserializeOwned>(text: &str) -> Result<Vec<T>, EvalError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|source| EvalError::Jsonl { line: i + 1, source }))
        .collect()
}

use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use super::replay::ReplayEntry;
use super::EvalError;
use crate::backend::Backend;

/// Stored deterministic output for one replay request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRecord {
    pub request_id: String,
    pub prompt: String,
    pub temperature: f64,
    pub seed: i64,
    pub baseline_output: String,
    pub timestamp: String,
}

/// Executes every entry unconditionally. The first failure aborts the whole
/// run; a partial baseline set is never returned.
pub fn generate_baselines(
    replay: &[ReplayEntry],
    backend: &dyn Backend,
) -> Result<Vec<BaselineRecord>, EvalError> {
    replay
        .iter()
        .map(|e| {
            let r = &e.request;
            let baseline_output = backend.generate(r).map_err(|source| EvalError::Backend {
                request_id: r.request_id.clone(),
                source,
            })?;
            Ok(BaselineRecord {
                request_id: r.request_id.clone(),
                prompt: r.prompt.clone(),
                temperature: r.temperature,
                seed: r.seed,
                baseline_output,
                timestamp: Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true),
            })
        })
        .collect()
}

pub fn write_baselines_jsonl(records: &[BaselineRecord]) -> String {
    super::to_jsonl(records)
}

pub fn parse_baselines_jsonl(text: &str) -> Result<Vec<BaselineRecord>, EvalError> {
    super::from_jsonl(text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{BackendError, ReferenceBackend};
    use crate::contract::{Category, Request};

    fn entry(id: &str, p: &str) -> ReplayEntry {
        ReplayEntry {
            request: Request::deterministic(id, p),
            category: Category::Creative,
            s_label: 0,
            expected_pathway: None,
        }
    }

    #[test]
    fn schema_and_determinism() {
        let replay = vec![entry("a", "Write a poem"), entry("b", "hi")];
        let one = generate_baselines(&replay, &ReferenceBackend).unwrap();
        let two = generate_baselines(&replay, &ReferenceBackend).unwrap();
        assert_eq!(one.len(), 2);
        for (x, y) in one.iter().zip(&two) {
            assert_eq!(x.baseline_output, y.baseline_output);
        }
        let line = write_baselines_jsonl(&one);
        let v: serde_json::Value = serde_json::from_str(line.lines().next().unwrap()).unwrap();
        let mut keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        keys.sort();
        assert_eq!(
            keys,
            [
                "baseline_output",
                "prompt",
                "request_id",
                "seed",
                "temperature",
                "timestamp"
            ]
        );
        assert!(chrono::DateTime::parse_from_rfc3339(&one[0].timestamp).is_ok());
        assert_eq!(parse_baselines_jsonl(&line).unwrap(), one);
    }

    #[test]
    fn empty_replay_gives_empty_file() {
        let out = generate_baselines(&[], &ReferenceBackend).unwrap();
        assert!(out.is_empty());
        assert_eq!(write_baselines_jsonl(&out), "");
    }

    struct FailsOn(&'static str);

    impl Backend for FailsOn {
        fn generate(&self, r: &Request) -> Result<String, BackendError> {
            if r.request_id == self.0 {
                Err(BackendError::Unreachable("down".into()))
            } else {
                Ok("x".into())
            }
        }
    }

    #[test]
    fn failure_names_the_request() {
        let replay = vec![entry("a", "x"), entry("b", "y"), entry("c", "z")];
        match generate_baselines(&replay, &FailsOn("b")) {
            Err(EvalError::Backend { request_id, .. }) => assert_eq!(request_id, "b"),
            other => panic!("{other:?}"),
        }
    }
}

use serde::{Deserialize, Serialize};

use super::RouterError;
use crate::contract::{Category, Request};

/// A request with its ground-truth execution-safety label.
///
/// `s_label = 1` means a bounded procedure reproduces the reference response,
/// given in `skip_response`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledRequest {
    pub request: Request,
    pub s_label: u8,
    pub category: Category,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skip_response: Option<String>,
}

impl LabeledRequest {
    pub fn safe(request: Request, category: Category, skip_response: impl Into<String>) -> Self {
        Self {
            request,
            s_label: 1,
            category,
            skip_response: Some(skip_response.into()),
        }
    }

    pub fn unsafe_(request: Request, category: Category) -> Self {
        Self {
            request,
            s_label: 0,
            category,
            skip_response: None,
        }
    }

    pub fn is_safe(&self) -> bool {
        self.s_label == 1
    }

    fn validate(&self) -> Result<(), String> {
        match (self.s_label, &self.skip_response) {
            (0, _) | (1, Some(_)) => Ok(()),
            (1, None) => Err("s_label 1 requires skip_response".into()),
            (s, _) => Err(format!("s_label must be 0 or 1, got {s}")),
        }
    }
}

pub fn parse_labeled_jsonl(text: &str) -> Result<Vec<LabeledRequest>, RouterError> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |reason: String| RouterError::Malformed {
            line: idx + 1,
            reason,
        };
        let item: LabeledRequest = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
        item.validate().map_err(malformed)?;
        out.push(item);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_validation() {
        let a = LabeledRequest::safe(
            Request::deterministic("a", "What is 2+2?"),
            Category::Trivial,
            "4",
        );
        let b = LabeledRequest::unsafe_(Request::deterministic("b", "Write a poem"), Category::Creative);
        let text = [&a, &b]
            .iter()
            .map(|x| serde_json::to_string(x).unwrap())
            .collect::<Vec<_>>()
            .join("\n");
        assert_eq!(parse_labeled_jsonl(&text).unwrap(), vec![a.clone(), b]);

        let mut bad = a.clone();
        bad.skip_response = None;
        let line = serde_json::to_string(&bad).unwrap();
        assert!(matches!(
            parse_labeled_jsonl(&line),
            Err(RouterError::Malformed { line: 1, .. })
        ));
        let mut bad = a;
        bad.s_label = 2;
        assert!(parse_labeled_jsonl(&serde_json::to_string(&bad).unwrap()).is_err());
        assert!(parse_labeled_jsonl("{not json").is_err());
    }
}

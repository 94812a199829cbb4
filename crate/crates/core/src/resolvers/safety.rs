use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::canonical::canonicalize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Allow,
    Refuse,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SafetyVerdict {
    pub verdict: Verdict,
    /// Present exactly when the verdict is `Refuse`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule_id: Option<String>,
}

impl SafetyVerdict {
    pub fn allow() -> Self {
        Self {
            verdict: Verdict::Allow,
            rule_id: None,
        }
    }

    pub fn is_refuse(&self) -> bool {
        self.verdict == Verdict::Refuse
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternKind {
    /// Case-insensitive substring of the canonical key.
    Substring,
    /// Regex that must match the whole canonical key.
    Anchored,
}

#[derive(Debug, Clone)]
pub struct SafetyRule {
    pub rule_id: String,
    pub kind: PatternKind,
    pub pattern: String,
    matcher: Matcher,
}

#[derive(Debug, Clone)]
enum Matcher {
    Substring(String),
    Regex(Regex),
}

impl SafetyRule {
    pub fn new(
        rule_id: impl Into<String>,
        kind: PatternKind,
        pattern: impl Into<String>,
    ) -> Result<Self, regex::Error> {
        let pattern = pattern.into();
        let matcher = match kind {
            PatternKind::Substring => Matcher::Substring(canonicalize(&pattern).to_string()),
            PatternKind::Anchored => Matcher::Regex(Regex::new(&format!("(?i)^(?:{pattern})$"))?),
        };
        Ok(Self {
            rule_id: rule_id.into(),
            kind,
            pattern,
            matcher,
        })
    }

    fn matches(&self, key: &str) -> bool {
        match &self.matcher {
            Matcher::Substring(needle) => !needle.is_empty() && key.contains(needle.as_str()),
            Matcher::Regex(re) => re.is_match(key),
        }
    }
}

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("cannot read policy file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("policy line {line}: {reason}")]
    Malformed { line: usize, reason: String },
}

/// Ordered deny-list. The first matching rule names the refusal.
#[derive(Debug, Clone, Default)]
pub struct SafetyPolicy {
    rules: Vec<SafetyRule>,
}

impl SafetyPolicy {
    pub fn new(rules: Vec<SafetyRule>) -> Self {
        Self { rules }
    }

    /// Parses `rule_id<TAB>pattern_kind<TAB>pattern` lines.
    pub fn parse(text: &str) -> Result<Self, PolicyError> {
        let mut rules = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let malformed = |reason: String| PolicyError::Malformed {
                line: line_no,
                reason,
            };
            let fields: Vec<&str> = line.split('\t').collect();
            let [rule_id, kind, pattern] = fields[..] else {
                return Err(malformed(format!(
                    "expected 3 tab-separated fields, found {}",
                    fields.len()
                )));
            };
            let kind = match kind {
                "substring" => PatternKind::Substring,
                "anchored" => PatternKind::Anchored,
                other => return Err(malformed(format!("unknown pattern kind `{other}`"))),
            };
            if pattern.is_empty() {
                return Err(malformed("empty pattern".into()));
            }
            let rule = SafetyRule::new(rule_id, kind, pattern)
                .map_err(|e| malformed(format!("bad pattern: {e}")))?;
            rules.push(rule);
        }
        Ok(Self { rules })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PolicyError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| PolicyError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn rules(&self) -> &[SafetyRule] {
        &self.rules
    }

    pub fn safety_check(&self, prompt: &str) -> SafetyVerdict {
        let key = canonicalize(prompt);
        self.rules
            .iter()
            .find(|r| r.matches(key.as_str()))
            .map(|r| SafetyVerdict {
                verdict: Verdict::Refuse,
                rule_id: Some(r.rule_id.clone()),
            })
            .unwrap_or_else(SafetyVerdict::allow)
    }
}

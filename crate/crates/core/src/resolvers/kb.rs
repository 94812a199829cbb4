use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::canonical::{canonicalize, CanonicalKey};

/// A verified answer and where it came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fact {
    pub answer: String,
    pub provenance: String,
}

#[derive(Debug, Error)]
pub enum KbError {
    #[error("cannot read knowledge base {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("knowledge base line {line}: {reason}")]
    Malformed { line: usize, reason: String },
}

/// A resolver stage failed internally (as opposed to simply missing).
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{stage} failed: {message}")]
pub struct ResolverError {
    pub stage: &'static str,
    pub message: String,
}

/// Exact-key fact lookup. The in-memory [`KnowledgeBase`] never fails; other
/// implementations (a remote store, a test double) may.
pub trait FactSource: Send + Sync {
    fn lookup(&self, key: &CanonicalKey) -> Result<Option<Fact>, ResolverError>;
}

/// Read-only map from canonical key to verified answer.
#[derive(Debug, Clone, Default)]
pub struct KnowledgeBase {
    entries: HashMap<CanonicalKey, Fact>,
}

impl KnowledgeBase {
    /// Parses `key<TAB>answer<TAB>provenance` lines. Blank lines and lines
    /// starting with `#` are skipped. Keys are canonicalized on load, so the
    /// file may use natural casing.
    pub fn parse(text: &str) -> Result<Self, KbError> {
        let mut entries = HashMap::new();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let [key, answer, provenance] = fields[..] else {
                return Err(KbError::Malformed {
                    line: line_no,
                    reason: format!("expected 3 tab-separated fields, found {}", fields.len()),
                });
            };
            if provenance.trim().is_empty() {
                return Err(KbError::Malformed {
                    line: line_no,
                    reason: "empty provenance".into(),
                });
            }
            let key = canonicalize(key);
            if key.is_empty() {
                return Err(KbError::Malformed {
                    line: line_no,
                    reason: "empty key".into(),
                });
            }
            entries.insert(
                key,
                Fact {
                    answer: answer.to_string(),
                    provenance: provenance.trim().to_string(),
                },
            );
        }
        Ok(Self { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, KbError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| KbError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn get(&self, key: &CanonicalKey) -> Option<&Fact> {
        self.entries.get(key)
    }

    pub fn kb_lookup(&self, key: &CanonicalKey) -> Option<String> {
        self.get(key).map(|f| f.answer.clone())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn keys(&self) -> impl Iterator<Item = &CanonicalKey> {
        self.entries.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&CanonicalKey, &Fact)> {
        self.entries.iter()
    }
}

impl FactSource for KnowledgeBase {
    fn lookup(&self, key: &CanonicalKey) -> Result<Option<Fact>, ResolverError> {
        Ok(self.get(key).cloned())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const KB: &str = "# comment\nWhat is the capital of France?\tParis\tatlas\nhow do i reset my password\tUse the self-service portal.\tsupport_kb\n";

    #[test]
    fn exact_lookup() {
        let kb = KnowledgeBase::parse(KB).unwrap();
        assert_eq!(kb.len(), 2);
        assert_eq!(
            kb.kb_lookup(&canonicalize("what is the capital of france"))
                .as_deref(),
            Some("Paris")
        );
        assert_eq!(
            kb.get(&canonicalize("What is the capital of France"))
                .unwrap()
                .provenance,
            "atlas"
        );
        assert_eq!(kb.kb_lookup(&canonicalize("what is the capital of spain")), None);
        // one token off: no fuzzy matching
        assert_eq!(kb.kb_lookup(&canonicalize("what is the capitol of france")), None);
    }

    #[test]
    fn malformed_lines_are_rejected_with_line_numbers() {
        let err = KnowledgeBase::parse("ok\tfine\tsrc\nbroken line\n").unwrap_err();
        assert!(matches!(err, KbError::Malformed { line: 2, .. }));
        let err = KnowledgeBase::parse("k\tv\t \n").unwrap_err();
        assert!(matches!(err, KbError::Malformed { line: 1, .. }));
    }

    #[test]
    fn unreadable_file_is_an_error() {
        let err = KnowledgeBase::load("/nonexistent/kb.tsv").unwrap_err();
        assert!(matches!(err, KbError::Io { .. }));
    }

    #[test]
    fn loads_from_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("kb.tsv");
        std::fs::write(&path, KB).unwrap();
        assert_eq!(KnowledgeBase::load(&path).unwrap().len(), 2);
    }
}

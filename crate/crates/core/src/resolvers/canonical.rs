use std::fmt;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

/// Normalized form of a prompt. Equal keys are the same query.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CanonicalKey(String);

impl CanonicalKey {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for CanonicalKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for CanonicalKey {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

/// NFC, lowercase, collapse whitespace, trim, then drop trailing `?`, `!`, `.`.
/// Lowercasing can yield a composable sequence (`T\u{308}` becomes
/// `t\u{308}`, whose NFC form is `ẗ`), so NFC is applied again after it.
///
/// The steps run in exactly that order, so `"what ?"` keeps its inner space:
/// trimming happens before the punctuation goes.
pub fn canonicalize(prompt: &str) -> CanonicalKey {
    let lowered: String = prompt.nfc().collect::<String>().to_lowercase().nfc().collect();
    let mut collapsed = String::with_capacity(lowered.len());
    let mut in_space = false;
    for c in lowered.chars() {
        if c.is_whitespace() {
            if !in_space {
                collapsed.push(' ');
            }
            in_space = true;
        } else {
            collapsed.push(c);
            in_space = false;
        }
    }
    let trimmed = collapsed.trim();
    let stripped = trimmed.trim_end_matches(['?', '!', '.']);
    CanonicalKey(stripped.to_string())
}

//! `key = value` configuration files with environment overrides.
//!
//! ```text
//! # gate
//! direct_confidence_threshold = 0.9
//! threshold.factual = 0.97
//! ```
//!
//! Environment variables `MFEE_<KEY>` override file values. The key is the
//! variable name after the prefix, lowercased, with `__` standing for `.`:
//! `MFEE_THRESHOLD__FACTUAL=0.97`, `MFEE_KILL_SWITCH=1`.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

pub const ENV_PREFIX: &str = "MFEE_";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("config key `{key}`: {reason}")]
    Invalid { key: String, reason: String },
}

impl ConfigError {
    pub fn invalid(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Self::Invalid {
            key: key.into(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KeyValueConfig {
    entries: BTreeMap<String, String>,
}

impl KeyValueConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or(ConfigError::Syntax { line: idx + 1 })?;
            let k = k.trim();
            if k.is_empty() {
                return Err(ConfigError::Syntax { line: idx + 1 });
            }
            entries.insert(k.to_string(), v.trim().to_string());
        }
        Ok(Self { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Applies `MFEE_*` overrides from `vars` (usually `std::env::vars()`).
    pub fn with_env<I>(mut self, vars: I) -> Self
    where
        I: IntoIterator<Item = (String, String)>,
    {
        for (name, value) in vars {
            if let Some(rest) = name.strip_prefix(ENV_PREFIX) {
                let key = rest.to_ascii_lowercase().replace("__", ".");
                self.entries.insert(key, value);
            }
        }
        self
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.entries.insert(key.into(), value.into());
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        self.entries
            .get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| ConfigError::invalid(key, format!("`{v}`: {e}")))
            })
            .transpose()
    }

    pub fn get_bool(&self, key: &str) -> Result<Option<bool>, ConfigError> {
        self.entries
            .get(key)
            .map(|v| match v.to_ascii_lowercase().as_str() {
                "1" | "true" | "yes" | "on" => Ok(true),
                "0" | "false" | "no" | "off" => Ok(false),
                _ => Err(ConfigError::invalid(key, format!("`{v}` is not a boolean"))),
            })
            .transpose()
    }

    /// Entries whose key starts with `prefix`, with the prefix removed.
    pub fn with_prefix<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = (&'a str, &'a str)> {
        self.entries
            .iter()
            .filter_map(move |(k, v)| k.strip_prefix(prefix).map(|rest| (rest, v.as_str())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_overrides() {
        let cfg = KeyValueConfig::parse("# c\na = 1\n threshold.factual= 0.97 \n\nflag=on\n")
            .unwrap()
            .with_env([
                ("MFEE_A".to_string(), "2".to_string()),
                ("MFEE_THRESHOLD__TRIVIAL".to_string(), "0.9".to_string()),
                ("PATH".to_string(), "/bin".to_string()),
            ]);
        assert_eq!(cfg.get::<u32>("a").unwrap(), Some(2));
        assert_eq!(cfg.get::<f64>("threshold.factual").unwrap(), Some(0.97));
        assert_eq!(cfg.get::<f64>("threshold.trivial").unwrap(), Some(0.9));
        assert_eq!(cfg.get_bool("flag").unwrap(), Some(true));
        assert_eq!(cfg.get_str("path"), None);
        let th: Vec<_> = cfg.with_prefix("threshold.").collect();
        assert_eq!(th, vec![("factual", "0.97"), ("trivial", "0.9")]);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            KeyValueConfig::parse("novalue").unwrap_err(),
            ConfigError::Syntax { line: 1 }
        ));
        let cfg = KeyValueConfig::parse("n = abc\nb = maybe").unwrap();
        assert!(cfg.get::<f64>("n").is_err());
        assert!(cfg.get_bool("b").is_err());
    }
}

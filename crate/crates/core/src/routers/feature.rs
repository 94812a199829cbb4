use std::fmt;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::RouterError;
use crate::contract::Request;
use crate::resolvers::canonicalize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredicateKind {
    /// Key equals the pattern or starts with it followed by a space.
    Prefix,
    Substring,
    Exact,
    /// Unanchored regex over the key.
    Regex,
}

impl PredicateKind {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "prefix" => Self::Prefix,
            "substring" => Self::Substring,
            "exact" => Self::Exact,
            "regex" => Self::Regex,
            _ => return None,
        })
    }
}

/// A named binary test over the canonical prompt.
#[derive(Debug, Clone)]
pub struct Predicate {
    pub name: String,
    pub kind: PredicateKind,
    pub pattern: String,
    needle: String,
    regex: Option<Regex>,
}

impl Predicate {
    pub fn new(
        name: impl Into<String>,
        kind: PredicateKind,
        pattern: impl Into<String>,
    ) -> Result<Self, regex::Error> {
        let pattern = pattern.into();
        let (needle, regex) = match kind {
            PredicateKind::Regex => (String::new(), Some(Regex::new(&pattern)?)),
            _ => (canonicalize(&pattern).as_str().trim_end().to_string(), None),
        };
        Ok(Self {
            name: name.into(),
            kind,
            pattern,
            needle,
            regex,
        })
    }

    pub fn prefix(name: &str, pattern: &str) -> Self {
        Self::new(name, PredicateKind::Prefix, pattern).expect("prefix predicates always build")
    }

    /// Evaluates against an already canonical, right-trimmed key.
    pub fn test_key(&self, key: &str) -> bool {
        match self.kind {
            PredicateKind::Prefix => key
                .strip_prefix(self.needle.as_str())
                .is_some_and(|rest| rest.is_empty() || rest.starts_with(' ')),
            PredicateKind::Substring => key.contains(self.needle.as_str()),
            PredicateKind::Exact => key == self.needle,
            PredicateKind::Regex => self.regex.as_ref().is_some_and(|r| r.is_match(key)),
        }
    }
}

/// φ: an ordered list of predicates. Arity k is the list length.
#[derive(Debug, Clone)]
pub struct FeatureMap {
    predicates: Vec<Predicate>,
}

impl FeatureMap {
    pub fn new(predicates: Vec<Predicate>) -> Result<Self, RouterError> {
        if predicates.is_empty() {
            return Err(RouterError::EmptyFeatureMap);
        }
        Ok(Self { predicates })
    }

    /// Parses `name<TAB>kind<TAB>pattern` lines; extra columns are ignored.
    pub fn parse(text: &str) -> Result<Self, RouterError> {
        let rows = parse_rows(text, 3)?;
        let predicates = rows
            .into_iter()
            .map(|(line, cols)| {
                build_predicate(&cols[0], &cols[1], &cols[2])
                    .map_err(|reason| RouterError::Malformed { line, reason })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(predicates)
    }

    pub fn k(&self) -> usize {
        self.predicates.len()
    }

    pub fn predicates(&self) -> &[Predicate] {
        &self.predicates
    }

    pub fn features_of(&self, prompt: &str) -> FeatureVector {
        let key = canonicalize(prompt);
        let key = key.as_str().trim_end();
        FeatureVector(self.predicates.iter().map(|p| p.test_key(key)).collect())
    }
}

pub(crate) fn build_predicate(name: &str, kind: &str, pattern: &str) -> Result<Predicate, String> {
    let kind = PredicateKind::parse(kind).ok_or_else(|| format!("unknown predicate kind `{kind}`"))?;
    if pattern.is_empty() {
        return Err("empty pattern".into());
    }
    Predicate::new(name, kind, pattern).map_err(|e| format!("bad regex: {e}"))
}

/// Non-comment rows split on tabs, each with at least `min_cols` columns.
pub(crate) fn parse_rows(text: &str, min_cols: usize) -> Result<Vec<(usize, Vec<String>)>, RouterError> {
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<String> = line.split('\t').map(str::to_string).collect();
        if cols.len() < min_cols {
            return Err(RouterError::Malformed {
                line: idx + 1,
                reason: format!("expected at least {min_cols} tab-separated fields"),
            });
        }
        rows.push((idx + 1, cols));
    }
    Ok(rows)
}

pub fn extract_features(request: &Request, fmap: &FeatureMap) -> FeatureVector {
    fmap.features_of(&request.prompt)
}

/// φ(x): one bit per predicate, in feature-map order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FeatureVector(pub Vec<bool>);

impl FeatureVector {
    pub fn k(&self) -> usize {
        self.0.len()
    }

    /// Little-endian index (bit i is feature i), when it fits.
    pub fn index(&self) -> Option<usize> {
        if self.0.len() >= usize::BITS as usize {
            return None;
        }
        Some(
            self.0
                .iter()
                .enumerate()
                .fold(0, |acc, (i, &b)| acc | (usize::from(b) << i)),
        )
    }

    pub fn from_index(index: usize, k: usize) -> Self {
        Self((0..k).map(|i| index >> i & 1 == 1).collect())
    }

    pub fn first_set(&self) -> Option<usize> {
        self.0.iter().position(|&b| b)
    }
}

impl fmt::Display for FeatureVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RouteDecision {
    Render,
    Skip,
}

/// h: total map from k-bit vectors to a routing decision.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DecisionTable {
    /// One entry per vector, indexed by [`FeatureVector::index`]; length 2^k.
    Enumerated { k: usize, decisions: Vec<RouteDecision> },
    /// The first set bit picks the decision; the zero vector gets `default`.
    FirstMatch {
        per_feature: Vec<RouteDecision>,
        default: RouteDecision,
    },
}

impl DecisionTable {
    pub fn constant(k: usize, decision: RouteDecision) -> Result<Self, RouterError> {
        Self::from_fn(k, |_| decision)
    }

    pub fn from_fn(k: usize, f: impl Fn(&FeatureVector) -> RouteDecision) -> Result<Self, RouterError> {
        if k > MAX_ENUMERATED_K {
            return Err(RouterError::TableTooLarge { k });
        }
        let decisions = (0..1usize << k)
            .map(|i| f(&FeatureVector::from_index(i, k)))
            .collect();
        Ok(Self::Enumerated { k, decisions })
    }

    /// Table number `n` in the enumeration order: bit v of `n` is SKIP for
    /// vector index v.
    pub fn nth(k: usize, n: u64) -> Result<Self, RouterError> {
        Self::from_fn(k, |v| {
            let idx = v.index().unwrap_or(0);
            if n >> idx & 1 == 1 {
                RouteDecision::Skip
            } else {
                RouteDecision::Render
            }
        })
    }

    pub fn decide(&self, v: &FeatureVector) -> RouteDecision {
        match self {
            Self::Enumerated { decisions, .. } => v
                .index()
                .and_then(|i| decisions.get(i).copied())
                .unwrap_or(RouteDecision::Render),
            Self::FirstMatch { per_feature, default } => v
                .first_set()
                .and_then(|i| per_feature.get(i).copied())
                .unwrap_or(*default),
        }
    }

    pub fn is_total_for(&self, fmap: &FeatureMap) -> bool {
        match self {
            Self::Enumerated { k, decisions } => *k == fmap.k() && decisions.len() == 1 << k,
            Self::FirstMatch { per_feature, .. } => per_feature.len() == fmap.k(),
        }
    }
}

/// Largest arity for which an explicit table is materialized.
pub const MAX_ENUMERATED_K: usize = 16;

/// g(x) = h(φ(x)).
pub fn route_pattern(table: &DecisionTable, fmap: &FeatureMap, request: &Request) -> RouteDecision {
    table.decide(&extract_features(request, fmap))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(p: &str) -> Request {
        Request::deterministic("t", p)
    }

    #[test]
    fn extraction_examples() {
        let what = FeatureMap::new(vec![Predicate::prefix("what_is", "what is")]).unwrap();
        assert_eq!(extract_features(&req("What is 2+2?"), &what).0, vec![true]);
        assert_eq!(extract_features(&req("Write a story"), &what).0, vec![false]);
        assert_eq!(extract_features(&req("whatis"), &what).0, vec![false]);
        let how = FeatureMap::new(vec![Predicate::prefix("how_do_i", "How do I")]).unwrap();
        assert_eq!(
            extract_features(&req("How do I reset my password?"), &how).0,
            vec![true]
        );
    }

    #[test]
    fn parse_and_kinds() {
        let fm =
            FeatureMap::parse("a\tprefix\twhat is\nb\tregex\t[0-9]\nc\texact\thello\nd\tsubstring\tcapital")
                .unwrap();
        assert_eq!(fm.k(), 4);
        assert_eq!(fm.features_of("What is 2+2?").to_string(), "1100");
        assert_eq!(fm.features_of("HELLO!").to_string(), "0010");
        assert_eq!(fm.features_of("the capital of peru").to_string(), "0001");
        assert!(FeatureMap::parse("").is_err());
        assert!(FeatureMap::parse("x\tfuzzy\ty").is_err());
        assert!(FeatureMap::parse("x\tregex\t(").is_err());
    }

    #[test]
    fn tables() {
        let fm = FeatureMap::new(vec![Predicate::prefix("w", "what is")]).unwrap();
        let skip = DecisionTable::constant(1, RouteDecision::Skip).unwrap();
        let render = DecisionTable::constant(1, RouteDecision::Render).unwrap();
        for p in ["What is 2+2?", "Write a story", ""] {
            assert_eq!(route_pattern(&skip, &fm, &req(p)), RouteDecision::Skip);
            assert_eq!(route_pattern(&render, &fm, &req(p)), RouteDecision::Render);
        }
        assert!(skip.is_total_for(&fm));
        // table 2 = 0b10: SKIP only on vector index 1
        let t = DecisionTable::nth(1, 2).unwrap();
        assert_eq!(route_pattern(&t, &fm, &req("what is up")), RouteDecision::Skip);
        assert_eq!(route_pattern(&t, &fm, &req("hi")), RouteDecision::Render);
        assert!(DecisionTable::constant(MAX_ENUMERATED_K + 1, RouteDecision::Skip).is_err());
    }

    #[test]
    fn vector_index_round_trip() {
        for k in 0..6 {
            for i in 0..(1usize << k) {
                assert_eq!(FeatureVector::from_index(i, k).index(), Some(i));
            }
        }
    }
}

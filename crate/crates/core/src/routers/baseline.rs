use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::feature::{build_predicate, parse_rows, DecisionTable, FeatureMap, RouteDecision};
use super::RouterError;
use crate::contract::{Decision, Request, REFUSAL_TEXT};
use crate::gate::Gate;
use crate::resolvers::{canonicalize, deterministic_solve, KnowledgeBase, SafetyPolicy};

/// What a lookup rule answers when the knowledge base has nothing.
pub const UNKNOWN_ANSWER: &str = "I don't know.";

/// A routing decision plus, for SKIP, the response served instead.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Routed {
    pub decision: RouteDecision,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
}

impl Routed {
    pub fn render() -> Self {
        Self {
            decision: RouteDecision::Render,
            response: None,
        }
    }

    pub fn skip(response: impl Into<String>) -> Self {
        Self {
            decision: RouteDecision::Skip,
            response: Some(response.into()),
        }
    }

    pub fn is_skip(&self) -> bool {
        self.decision == RouteDecision::Skip
    }
}

pub trait Router: Send + Sync {
    fn name(&self) -> &str;
    fn route(&self, request: &Request) -> Routed;
}

/// Response a rule produces when it fires.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RuleAction {
    Render,
    Refuse,
    Empty,
    Canned(String),
    /// Run the arithmetic/conversion solver; empty output if it cannot.
    Calculator,
    /// Knowledge-base read; [`UNKNOWN_ANSWER`] on a miss.
    Lookup,
}

impl RuleAction {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "render" => Self::Render,
            "refuse" => Self::Refuse,
            "empty" => Self::Empty,
            "calculator" => Self::Calculator,
            "lookup" => Self::Lookup,
            other => Self::Canned(other.strip_prefix("canned:")?.to_string()),
        })
    }

    fn respond(&self, prompt: &str, kb: &KnowledgeBase) -> Option<String> {
        match self {
            Self::Render => None,
            Self::Refuse => Some(REFUSAL_TEXT.to_string()),
            Self::Empty => Some(String::new()),
            Self::Canned(text) => Some(text.clone()),
            Self::Calculator => Some(deterministic_solve(prompt).unwrap_or_default()),
            Self::Lookup => Some(
                kb.kb_lookup(&canonicalize(prompt))
                    .unwrap_or_else(|| UNKNOWN_ANSWER.to_string()),
            ),
        }
    }
}

/// First-match rule router. The decision depends only on φ(x); the response
/// for a SKIP comes from the first rule that fired.
pub struct PatternRouter {
    name: String,
    fmap: FeatureMap,
    table: DecisionTable,
    actions: Vec<RuleAction>,
    kb: Arc<KnowledgeBase>,
}

impl PatternRouter {
    /// Parses `name<TAB>kind<TAB>pattern<TAB>action` rule lines, where action
    /// is `render`, `refuse`, `empty`, `calculator`, `lookup` or
    /// `canned:<text>`.
    pub fn parse(name: &str, rules: &str, kb: Arc<KnowledgeBase>) -> Result<Self, RouterError> {
        let mut predicates = Vec::new();
        let mut actions = Vec::new();
        for (line, cols) in parse_rows(rules, 4)? {
            let malformed = |reason: String| RouterError::Malformed { line, reason };
            predicates.push(build_predicate(&cols[0], &cols[1], &cols[2]).map_err(malformed)?);
            actions.push(
                RuleAction::parse(&cols[3])
                    .ok_or_else(|| malformed(format!("unknown action `{}`", cols[3])))?,
            );
        }
        let table = DecisionTable::FirstMatch {
            per_feature: actions
                .iter()
                .map(|a| match a {
                    RuleAction::Render => RouteDecision::Render,
                    _ => RouteDecision::Skip,
                })
                .collect(),
            default: RouteDecision::Render,
        };
        Ok(Self {
            name: name.to_string(),
            fmap: FeatureMap::new(predicates)?,
            table,
            actions,
            kb,
        })
    }

    pub fn feature_map(&self) -> &FeatureMap {
        &self.fmap
    }

    pub fn table(&self) -> &DecisionTable {
        &self.table
    }

    /// Name of the first rule that fires, if any.
    pub fn matched_rule(&self, prompt: &str) -> Option<&str> {
        let v = self.fmap.features_of(prompt);
        v.first_set().map(|i| self.fmap.predicates()[i].name.as_str())
    }
}

impl Router for PatternRouter {
    fn name(&self) -> &str {
        &self.name
    }

    fn route(&self, request: &Request) -> Routed {
        let v = self.fmap.features_of(&request.prompt);
        match self.table.decide(&v) {
            RouteDecision::Render => Routed::render(),
            RouteDecision::Skip => {
                let action = v.first_set().map(|i| &self.actions[i]);
                match action.and_then(|a| a.respond(&request.prompt, &self.kb)) {
                    Some(text) => Routed::skip(text),
                    None => Routed::render(),
                }
            }
        }
    }
}

/// SKIP only for prompts seen verbatim before, plus safety refusals.
pub struct CacheOnlyRouter {
    seen: HashMap<String, String>,
    policy: Arc<SafetyPolicy>,
}

impl CacheOnlyRouter {
    pub fn new(policy: Arc<SafetyPolicy>) -> Self {
        Self {
            seen: HashMap::new(),
            policy,
        }
    }

    pub fn remember(&mut self, prompt: impl Into<String>, output: impl Into<String>) {
        self.seen.insert(prompt.into(), output.into());
    }
}

impl Router for CacheOnlyRouter {
    fn name(&self) -> &str {
        "cache_only"
    }

    fn route(&self, request: &Request) -> Routed {
        if self.policy.safety_check(&request.prompt).is_refuse() {
            return Routed::skip(REFUSAL_TEXT);
        }
        match self.seen.get(&request.prompt) {
            Some(out) => Routed::skip(out.clone()),
            None => Routed::render(),
        }
    }
}

/// The gate seen as a router: anything but RENDER is a SKIP.
pub struct GateRouter {
    gate: Arc<Gate>,
}

impl GateRouter {
    pub fn new(gate: Arc<Gate>) -> Self {
        Self { gate }
    }
}

impl Router for GateRouter {
    fn name(&self) -> &str {
        "gate"
    }

    fn route(&self, request: &Request) -> Routed {
        let (outcome, _) = self.gate.evaluate(request);
        match outcome.decision {
            Decision::Render => Routed::render(),
            Decision::Direct => Routed::skip(outcome.direct_output.unwrap_or_default()),
            Decision::NoOp => Routed::skip(""),
            Decision::Abstain => Routed::skip(REFUSAL_TEXT),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Keyword,
    CacheOnly,
    Intent,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 3] = [Self::Keyword, Self::CacheOnly, Self::Intent];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Keyword => "keyword",
            Self::CacheOnly => "cache_only",
            Self::Intent => "intent",
        }
    }
}

/// Builds a baseline router from rule text. `history` is the set of
/// (prompt, output) pairs the cache-only router has already seen.
pub fn build_baseline_router(
    kind: BaselineKind,
    rules: &str,
    kb: Arc<KnowledgeBase>,
    policy: Arc<SafetyPolicy>,
    history: &[(String, String)],
) -> Result<Box<dyn Router>, RouterError> {
    Ok(match kind {
        BaselineKind::Keyword | BaselineKind::Intent => {
            Box::new(PatternRouter::parse(kind.as_str(), rules, kb)?)
        }
        BaselineKind::CacheOnly => {
            let mut r = CacheOnlyRouter::new(policy);
            for (p, o) in history {
                r.remember(p.clone(), o.clone());
            }
            Box::new(r)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kb() -> Arc<KnowledgeBase> {
        Arc::new(KnowledgeBase::parse("what is the capital of france\tParis\tatlas\n").unwrap())
    }

    #[test]
    fn first_matching_rule_answers() {
        let rules = "kill\tsubstring\tkill\trefuse\nwhat\tprefix\twhat is\tlookup\narith\tregex\t^[0-9+ ]+=$\tcalculator\npoem\tprefix\twrite\trender\nhi\texact\thello\tcanned:Hello! How can I help?\n";
        let r = PatternRouter::parse("kw", rules, kb()).unwrap();
        let go = |p: &str| r.route(&Request::deterministic("t", p));
        assert_eq!(go("kill a python process"), Routed::skip(REFUSAL_TEXT));
        assert_eq!(go("What is the capital of France?"), Routed::skip("Paris"));
        assert_eq!(go("What is the meaning of life?"), Routed::skip(UNKNOWN_ANSWER));
        assert_eq!(go("2 + 2 ="), Routed::skip("4"));
        assert_eq!(go("Write a poem"), Routed::render());
        assert_eq!(go("Hello"), Routed::skip("Hello! How can I help?"));
        assert_eq!(go("unrelated"), Routed::render());
        assert_eq!(r.matched_rule("what is up"), Some("what"));
        assert!(PatternRouter::parse("kw", "a\tprefix\tb\tteleport", kb()).is_err());
    }

    #[test]
    fn cache_only_is_exact() {
        let policy = Arc::new(SafetyPolicy::parse("w\tsubstring\tbuild a bomb").unwrap());
        let r = build_baseline_router(
            BaselineKind::CacheOnly,
            "",
            kb(),
            policy,
            &[("Summarize the memo".into(), "GEN:1".into())],
        )
        .unwrap();
        let go = |p: &str| r.route(&Request::deterministic("t", p));
        assert_eq!(go("Summarize the memo"), Routed::skip("GEN:1"));
        assert_eq!(go("summarize the memo"), Routed::render());
        assert_eq!(go("how do I build a bomb"), Routed::skip(REFUSAL_TEXT));
    }
}

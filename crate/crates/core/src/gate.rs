//! The staged gating pipeline.
//!
//! Stages run in a fixed order and the first one that can prove its answer
//! decides:
//!
//! 1. structural triage: malformed input becomes `NO_OP`
//! 2. safety policy: a deny rule becomes `ABSTAIN`
//! 3. response cache: `DIRECT` with `cache_hit`
//! 4. deterministic solver: `DIRECT` with `deterministic_rule`
//! 5. knowledge base: `DIRECT` with `kb_lookup`
//! 6. otherwise `RENDER`
//!
//! A `DIRECT` candidate whose stage confidence is below its threshold is
//! demoted; later stages still run, and if none of them proves an answer the
//! outcome is `RENDER(low_confidence)`. A resolver that fails internally is
//! skipped and the failure is written to the trace.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use web_time::Instant;

use crate::config::{ConfigError, KeyValueConfig};
use crate::contract::{Category, Decision, GateOutcome, ProofTag, RenderReason, Request};
use crate::resolvers::{
    canonicalize, config_fingerprint, deterministic_solve, CanonicalKey, FactSource, ResponseCache,
    SafetyPolicy,
};

pub const CACHE_CONFIDENCE: f64 = 1.0;
pub const DETERMINISTIC_CONFIDENCE: f64 = 1.0;
pub const KB_CONFIDENCE: f64 = 0.95;
pub const STRUCTURAL_CONFIDENCE: f64 = 1.0;

pub const DEFAULT_THRESHOLD: f64 = 0.90;
pub const DEFAULT_LATENCY_BUDGET_MS: f64 = 8.0;
pub const MAX_PROMPT_CODEPOINTS: usize = 32_768;
/// Below this share of alphanumeric codepoints (among non-space ones) a
/// prompt is unintelligible.
pub const INTELLIGIBILITY_FLOOR: f64 = 0.20;

const GENERATIVE_VERBS: [&str; 6] = ["write", "generate", "compose", "imagine", "create", "continue"];

const UNDERSPECIFIED: [&str; 16] = [
    "what should i do",
    "what do you think",
    "what do you recommend",
    "what would you do",
    "which one is better",
    "which is better",
    "is it worth it",
    "what does it mean",
    "what happened",
    "what now",
    "any thoughts",
    "can you help me",
    "help me decide",
    "what's the best option",
    "should i do it",
    "is this right",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateConfig {
    pub direct_confidence_threshold: f64,
    /// Per-category overrides, keyed by the category a pathway serves:
    /// `factual` for the knowledge base, `trivial` for the solver,
    /// `redundant` for the cache.
    pub category_thresholds: BTreeMap<Category, f64>,
    pub latency_budget_ms: f64,
    pub max_prompt_codepoints: usize,
    pub enable_triage: bool,
    pub enable_safety: bool,
    pub enable_cache: bool,
    pub enable_deterministic: bool,
    pub enable_kb: bool,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self {
            direct_confidence_threshold: DEFAULT_THRESHOLD,
            category_thresholds: BTreeMap::new(),
            latency_budget_ms: DEFAULT_LATENCY_BUDGET_MS,
            max_prompt_codepoints: MAX_PROMPT_CODEPOINTS,
            enable_triage: true,
            enable_safety: true,
            enable_cache: true,
            enable_deterministic: true,
            enable_kb: true,
        }
    }
}

impl GateConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let in_unit = |v: f64| (0.0..=1.0).contains(&v);
        if !in_unit(self.direct_confidence_threshold) {
            return Err(ConfigError::invalid(
                "direct_confidence_threshold",
                "must lie in [0, 1]",
            ));
        }
        for (cat, v) in &self.category_thresholds {
            if !in_unit(*v) {
                return Err(ConfigError::invalid(
                    format!("threshold.{cat}"),
                    "must lie in [0, 1]",
                ));
            }
        }
        if !(self.latency_budget_ms.is_finite() && self.latency_budget_ms > 0.0) {
            return Err(ConfigError::invalid("latency_budget_ms", "must be positive"));
        }
        if self.max_prompt_codepoints == 0 {
            return Err(ConfigError::invalid("max_prompt_codepoints", "must be positive"));
        }
        Ok(())
    }

    /// Reads gate keys from a key=value config; absent keys keep defaults.
    pub fn from_kv(kv: &KeyValueConfig) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        if let Some(v) = kv.get("direct_confidence_threshold")? {
            cfg.direct_confidence_threshold = v;
        }
        if let Some(v) = kv.get("latency_budget_ms")? {
            cfg.latency_budget_ms = v;
        }
        if let Some(v) = kv.get("max_prompt_codepoints")? {
            cfg.max_prompt_codepoints = v;
        }
        for (key, slot) in [
            ("enable_triage", &mut cfg.enable_triage),
            ("enable_safety", &mut cfg.enable_safety),
            ("enable_cache", &mut cfg.enable_cache),
            ("enable_deterministic", &mut cfg.enable_deterministic),
            ("enable_kb", &mut cfg.enable_kb),
        ] {
            if let Some(v) = kv.get_bool(key)? {
                *slot = v;
            }
        }
        for (name, value) in kv.with_prefix("threshold.") {
            let cat: Category = name
                .parse()
                .map_err(|e| ConfigError::invalid(format!("threshold.{name}"), format!("{e}")))?;
            let v: f64 = value.parse().map_err(|_| {
                ConfigError::invalid(format!("threshold.{name}"), format!("`{value}` is not a number"))
            })?;
            cfg.category_thresholds.insert(cat, v);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn threshold_for(&self, category: Category) -> f64 {
        self.category_thresholds
            .get(&category)
            .copied()
            .unwrap_or(self.direct_confidence_threshold)
    }

    pub fn latency_budget(&self) -> Duration {
        Duration::from_secs_f64(self.latency_budget_ms / 1000.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    StructuralTriage,
    Safety,
    Cache,
    Deterministic,
    Kb,
    Fallback,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::StructuralTriage => "structural_triage",
            Stage::Safety => "safety",
            Stage::Cache => "cache",
            Stage::Deterministic => "deterministic",
            Stage::Kb => "kb",
            Stage::Fallback => "fallback",
        }
    }

    /// Category whose threshold applies to a `DIRECT` from this stage.
    pub fn served_category(self) -> Option<Category> {
        match self {
            Stage::Cache => Some(Category::Redundant),
            Stage::Deterministic => Some(Category::Trivial),
            Stage::Kb => Some(Category::Factual),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StageOutcome {
    Pass,
    Miss,
    Disabled,
    Decided,
    Demoted { confidence: f64, threshold: f64 },
    Failed { message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub outcome: StageOutcome,
    pub elapsed_us: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResolverTrace {
    pub stages: Vec<StageRecord>,
    pub final_stage: Option<Stage>,
}

impl ResolverTrace {
    fn push(&mut self, stage: Stage, outcome: StageOutcome, started: Instant) {
        self.stages.push(StageRecord {
            stage,
            outcome,
            elapsed_us: started.elapsed().as_secs_f64() * 1e6,
        });
    }

    pub fn total_ms(&self) -> f64 {
        self.stages.iter().map(|s| s.elapsed_us).sum::<f64>() / 1000.0
    }

    pub fn demoted(&self) -> bool {
        self.stages
            .iter()
            .any(|s| matches!(s.outcome, StageOutcome::Demoted { .. }))
    }

    pub fn failures(&self) -> impl Iterator<Item = &StageRecord> {
        self.stages
            .iter()
            .filter(|s| matches!(s.outcome, StageOutcome::Failed { .. }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Triage {
    WellFormed,
    Malformed,
}

pub fn structural_triage(prompt: &str) -> Triage {
    structural_triage_with(prompt, MAX_PROMPT_CODEPOINTS)
}

pub fn structural_triage_with(prompt: &str, max_codepoints: usize) -> Triage {
    if prompt.chars().count() > max_codepoints {
        return Triage::Malformed;
    }
    let key = canonicalize(prompt);
    let (mut visible, mut alnum) = (0usize, 0usize);
    for c in key.as_str().chars().filter(|c| !c.is_whitespace()) {
        visible += 1;
        if c.is_alphanumeric() {
            alnum += 1;
        }
    }
    if visible == 0 || alnum == 0 || (alnum as f64) < INTELLIGIBILITY_FLOOR * visible as f64 {
        Triage::Malformed
    } else {
        Triage::WellFormed
    }
}

pub fn is_generative(key: &CanonicalKey) -> bool {
    let k = key.as_str();
    let first = k
        .split(' ')
        .next()
        .unwrap_or("")
        .trim_end_matches(|c: char| !c.is_alphanumeric());
    GENERATIVE_VERBS.contains(&first) || k.contains("in the style of")
}

pub fn is_underspecified(key: &CanonicalKey) -> bool {
    UNDERSPECIFIED.contains(&key.as_str().trim_end())
}

pub fn render_reason(request: &Request, trace: &ResolverTrace) -> RenderReason {
    if trace.demoted() {
        return RenderReason::LowConfidence;
    }
    let key = canonicalize(&request.prompt);
    if is_generative(&key) {
        RenderReason::NovelGeneration
    } else if is_underspecified(&key) {
        RenderReason::SemanticAmbiguity
    } else {
        RenderReason::NoPathway
    }
}

/// The gate: immutable configuration plus the shared resolver state.
pub struct Gate {
    config: GateConfig,
    policy: Arc<SafetyPolicy>,
    facts: Arc<dyn FactSource>,
    cache: Arc<ResponseCache>,
}

impl std::fmt::Debug for Gate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gate")
            .field("config", &self.config)
            .field("rules", &self.policy.rules().len())
            .field("cache", &self.cache)
            .finish()
    }
}

impl Gate {
    pub fn new(
        config: GateConfig,
        policy: Arc<SafetyPolicy>,
        facts: Arc<dyn FactSource>,
        cache: Arc<ResponseCache>,
    ) -> Result<Self, ConfigError> {
        config.validate()?;
        Ok(Self {
            config,
            policy,
            facts,
            cache,
        })
    }

    pub fn config(&self) -> &GateConfig {
        &self.config
    }

    pub fn cache(&self) -> &Arc<ResponseCache> {
        &self.cache
    }

    pub fn policy(&self) -> &SafetyPolicy {
        &self.policy
    }

    pub fn facts(&self) -> &Arc<dyn FactSource> {
        &self.facts
    }

    /// Stores a RENDER output so identical later requests hit the cache.
    pub fn record_render(&self, request: &Request, output: &str) {
        if self.config.enable_cache {
            self.cache
                .store(canonicalize(&request.prompt), config_fingerprint(request), output);
        }
    }

    pub fn evaluate(&self, request: &Request) -> (GateOutcome, ResolverTrace) {
        let mut trace = ResolverTrace::default();
        let outcome = self.run(request, &mut trace);
        debug_assert!(outcome.check().is_ok());
        (outcome, trace)
    }

    fn run(&self, request: &Request, trace: &mut ResolverTrace) -> GateOutcome {
        let cfg = &self.config;

        let t = Instant::now();
        if !cfg.enable_triage {
            trace.push(Stage::StructuralTriage, StageOutcome::Disabled, t);
        } else if structural_triage_with(&request.prompt, cfg.max_prompt_codepoints) == Triage::Malformed {
            trace.push(Stage::StructuralTriage, StageOutcome::Decided, t);
            trace.final_stage = Some(Stage::StructuralTriage);
            return GateOutcome::no_op(STRUCTURAL_CONFIDENCE);
        } else {
            trace.push(Stage::StructuralTriage, StageOutcome::Pass, t);
        }

        let t = Instant::now();
        if !cfg.enable_safety {
            trace.push(Stage::Safety, StageOutcome::Disabled, t);
        } else if self.policy.safety_check(&request.prompt).is_refuse() {
            trace.push(Stage::Safety, StageOutcome::Decided, t);
            trace.final_stage = Some(Stage::Safety);
            return GateOutcome::abstain(STRUCTURAL_CONFIDENCE);
        } else {
            trace.push(Stage::Safety, StageOutcome::Pass, t);
        }

        let key = canonicalize(&request.prompt);

        let t = Instant::now();
        let found = if cfg.enable_cache {
            self.cache
                .try_lookup(&key, config_fingerprint(request), cfg.latency_budget())
                .map_err(|e| e.to_string())
        } else {
            trace.push(Stage::Cache, StageOutcome::Disabled, t);
            Ok(None)
        };
        if cfg.enable_cache {
            if let Some(out) = self.settle(trace, Stage::Cache, found, CACHE_CONFIDENCE, t) {
                return GateOutcome::direct(out, ProofTag::CacheHit, CACHE_CONFIDENCE);
            }
        }

        let t = Instant::now();
        if cfg.enable_deterministic {
            let found = Ok(deterministic_solve(&request.prompt));
            if let Some(out) = self.settle(trace, Stage::Deterministic, found, DETERMINISTIC_CONFIDENCE, t) {
                return GateOutcome::direct(out, ProofTag::DeterministicRule, DETERMINISTIC_CONFIDENCE);
            }
        } else {
            trace.push(Stage::Deterministic, StageOutcome::Disabled, t);
        }

        let t = Instant::now();
        if cfg.enable_kb {
            let found = self
                .facts
                .lookup(&key)
                .map(|f| f.map(|f| f.answer))
                .map_err(|e| e.to_string());
            if let Some(out) = self.settle(trace, Stage::Kb, found, KB_CONFIDENCE, t) {
                return GateOutcome::direct(out, ProofTag::KbLookup, KB_CONFIDENCE);
            }
        } else {
            trace.push(Stage::Kb, StageOutcome::Disabled, t);
        }

        let t = Instant::now();
        let reason = render_reason(request, trace);
        trace.push(Stage::Fallback, StageOutcome::Decided, t);
        trace.final_stage = Some(Stage::Fallback);
        GateOutcome::render(reason, 1.0)
    }

    /// Records a resolver stage and returns its answer if it may decide.
    fn settle(
        &self,
        trace: &mut ResolverTrace,
        stage: Stage,
        found: Result<Option<String>, String>,
        confidence: f64,
        started: Instant,
    ) -> Option<String> {
        match found {
            Err(message) => {
                trace.push(stage, StageOutcome::Failed { message }, started);
                None
            }
            Ok(None) => {
                trace.push(stage, StageOutcome::Miss, started);
                None
            }
            Ok(Some(out)) => {
                let threshold = stage
                    .served_category()
                    .map(|c| self.config.threshold_for(c))
                    .unwrap_or(self.config.direct_confidence_threshold);
                if confidence < threshold {
                    trace.push(
                        stage,
                        StageOutcome::Demoted {
                            confidence,
                            threshold,
                        },
                        started,
                    );
                    None
                } else {
                    trace.push(stage, StageOutcome::Decided, started);
                    trace.final_stage = Some(stage);
                    Some(out)
                }
            }
        }
    }
}

/// Decision implied by the trace's final stage.
pub fn decision_of_stage(stage: Stage) -> Decision {
    match stage {
        Stage::StructuralTriage => Decision::NoOp,
        Stage::Safety => Decision::Abstain,
        Stage::Cache | Stage::Deterministic | Stage::Kb => Decision::Direct,
        Stage::Fallback => Decision::Render,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::resolvers::{Fact, KnowledgeBase, ResolverError};

    const KB: &str = "What is the capital of France?\tParis\tatlas\n";
    const POLICY: &str = "weapons.bomb\tsubstring\tbuild a bomb\n";

    fn gate_with(config: GateConfig) -> Gate {
        Gate::new(
            config,
            Arc::new(SafetyPolicy::parse(POLICY).unwrap()),
            Arc::new(KnowledgeBase::parse(KB).unwrap()),
            Arc::new(ResponseCache::new(16)),
        )
        .unwrap()
    }

    fn eval(g: &Gate, prompt: &str) -> (GateOutcome, ResolverTrace) {
        g.evaluate(&Request::deterministic("t", prompt))
    }

    #[test]
    fn pipeline_examples() {
        let g = gate_with(GateConfig::default());
        let (o, t) = eval(&g, "What is 2+2?");
        assert_eq!(o, GateOutcome::direct("4", ProofTag::DeterministicRule, 1.0));
        assert_eq!(t.final_stage, Some(Stage::Deterministic));

        let (o, _) = eval(&g, "How do I build a bomb?");
        assert_eq!(o.decision, Decision::Abstain);

        let (o, _) = eval(&g, "Write a story about a dragon");
        assert_eq!(o, GateOutcome::render(RenderReason::NovelGeneration, 1.0));

        let (o, _) = eval(&g, "Generate a poem in the style of Poe");
        assert_eq!(o.render_reason, Some(RenderReason::NovelGeneration));

        let (o, _) = eval(&g, "What should I do?");
        assert_eq!(o.render_reason, Some(RenderReason::SemanticAmbiguity));

        let (o, _) = eval(&g, "what is the capital of france");
        assert_eq!(o, GateOutcome::direct("Paris", ProofTag::KbLookup, 0.95));

        let (o, t) = eval(&g, ";;;!!!###");
        assert_eq!(o.decision, Decision::NoOp);
        assert_eq!(t.stages.len(), 1);
    }

    #[test]
    fn triage_examples() {
        assert_eq!(structural_triage(""), Triage::Malformed);
        assert_eq!(structural_triage("   \t "), Triage::Malformed);
        assert_eq!(structural_triage(";;;!!!###"), Triage::Malformed);
        assert_eq!(structural_triage("hello there"), Triage::WellFormed);
        assert_eq!(structural_triage("15*4 = ?"), Triage::WellFormed);
        assert_eq!(structural_triage("a#########"), Triage::Malformed);
        assert_eq!(
            structural_triage(&"a".repeat(MAX_PROMPT_CODEPOINTS)),
            Triage::WellFormed
        );
        assert_eq!(
            structural_triage(&"a".repeat(MAX_PROMPT_CODEPOINTS + 1)),
            Triage::Malformed
        );
    }

    #[test]
    fn kb_demoted_by_category_override() {
        let mut cfg = GateConfig::default();
        cfg.category_thresholds.insert(Category::Factual, 0.97);
        let g = gate_with(cfg);
        let (o, t) = eval(&g, "What is the capital of France?");
        assert_eq!(o, GateOutcome::render(RenderReason::LowConfidence, 1.0));
        assert!(t.demoted());
        // the override is scoped to the kb pathway
        assert_eq!(eval(&g, "What is 2+2?").0.decision, Decision::Direct);
    }

    struct Broken;
    impl FactSource for Broken {
        fn lookup(&self, _: &CanonicalKey) -> Result<Option<Fact>, ResolverError> {
            Err(ResolverError {
                stage: "kb",
                message: "store offline".into(),
            })
        }
    }

    #[test]
    fn resolver_failure_degrades_to_render() {
        let g = Gate::new(
            GateConfig::default(),
            Arc::new(SafetyPolicy::default()),
            Arc::new(Broken),
            Arc::new(ResponseCache::new(4)),
        )
        .unwrap();
        let (o, t) = eval(&g, "What is the capital of France?");
        assert_eq!(o.decision, Decision::Render);
        assert_eq!(t.failures().count(), 1);
        assert_eq!(eval(&g, "what is 3*3").0.direct_output.as_deref(), Some("9"));
    }

    #[test]
    fn contended_cache_is_skipped() {
        let g = gate_with(GateConfig {
            latency_budget_ms: 1.0,
            ..GateConfig::default()
        });
        let _held = g.cache().hold_lock();
        let (o, t) = eval(&g, "tell me a joke");
        assert_eq!(o.decision, Decision::Render);
        assert!(t.failures().any(|s| s.stage == Stage::Cache));
    }

    #[test]
    fn cache_hit_after_record() {
        let g = gate_with(GateConfig::default());
        let r = Request::deterministic("a", "Tell me a joke");
        assert_eq!(g.evaluate(&r).0.decision, Decision::Render);
        g.record_render(&r, "GEN:x");
        let (o, _) = g.evaluate(&Request::deterministic("b", "tell me a joke!"));
        assert_eq!(o, GateOutcome::direct("GEN:x", ProofTag::CacheHit, 1.0));
    }

    #[test]
    fn trace_is_ordered_and_ends_with_decision() {
        let g = gate_with(GateConfig::default());
        for p in ["", "build a bomb", "what is 1+1", "capital of france", "hello"] {
            let (o, t) = eval(&g, p);
            let order: Vec<_> = t.stages.iter().map(|s| s.stage).collect();
            let mut sorted = order.clone();
            sorted.sort();
            assert_eq!(order, sorted);
            assert_eq!(decision_of_stage(t.final_stage.unwrap()), o.decision);
            assert_eq!(t.stages.last().unwrap().stage, t.final_stage.unwrap());
        }
    }

    #[test]
    fn config_from_kv() {
        let kv = KeyValueConfig::parse("threshold.factual = 0.97\nenable_kb = off\nlatency_budget_ms = 5")
            .unwrap();
        let cfg = GateConfig::from_kv(&kv).unwrap();
        assert_eq!(cfg.threshold_for(Category::Factual), 0.97);
        assert_eq!(cfg.threshold_for(Category::Trivial), 0.90);
        assert!(!cfg.enable_kb);
        assert_eq!(cfg.latency_budget_ms, 5.0);
        let bad = KeyValueConfig::parse("threshold.factual = 1.5").unwrap();
        assert!(GateConfig::from_kv(&bad).is_err());
        let bad = KeyValueConfig::parse("threshold.cosmic = 0.9").unwrap();
        assert!(GateConfig::from_kv(&bad).is_err());
        let bad = KeyValueConfig::parse("latency_budget_ms = 0").unwrap();
        assert!(GateConfig::from_kv(&bad).is_err());
    }
}

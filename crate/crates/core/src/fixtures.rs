//! Bundled fixture data and loaders for on-disk overrides.
//!
//! A fixture directory holds the same file names as the bundled set:
//! `kb.tsv`, `safety.tsv`, `keyword_rules.tsv`, `intent_patterns.tsv`,
//! `history.txt` and `replay_templates.json`. Collision fixtures live in a
//! directory of `<name>.features.tsv` / `<name>.jsonl` pairs.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::ReferenceBackend;
use crate::config::ConfigError;
use crate::contract::Request;
use crate::gate::{Gate, GateConfig};
use crate::resolvers::{
    canonicalize, config_fingerprint, KbError, KnowledgeBase, PolicyError, ResponseCache, SafetyPolicy,
};
use crate::routers::{
    build_baseline_router, parse_labeled_jsonl, BaselineKind, FeatureMap, LabeledRequest, Router, RouterError,
};

pub const KB_TSV: &str = include_str!("../fixtures/kb.tsv");
pub const SAFETY_TSV: &str = include_str!("../fixtures/safety.tsv");
pub const KEYWORD_RULES_TSV: &str = include_str!("../fixtures/keyword_rules.tsv");
pub const INTENT_PATTERNS_TSV: &str = include_str!("../fixtures/intent_patterns.tsv");
pub const HISTORY_TXT: &str = include_str!("../fixtures/history.txt");
pub const REPLAY_TEMPLATES_JSON: &str = include_str!("../fixtures/replay_templates.json");
pub const ADVERSARIAL_JSONL: &str = include_str!("../fixtures/adversarial.jsonl");
pub const TEMPORAL_TRACE_JSONL: &str = include_str!("../fixtures/temporal_trace.jsonl");

macro_rules! collision {
    ($name:literal) => {
        CollisionSource {
            name: $name,
            features: include_str!(concat!("../fixtures/collisions/", $name, ".features.tsv")),
            population: include_str!(concat!("../fixtures/collisions/", $name, ".jsonl")),
        }
    };
}

#[derive(Debug, Clone, Copy)]
pub struct CollisionSource {
    pub name: &'static str,
    pub features: &'static str,
    pub population: &'static str,
}

pub const COLLISION_SOURCES: [CollisionSource; 6] = [
    collision!("k1_what_is"),
    collision!("k1_how_do_i"),
    collision!("k2_question_topic"),
    collision!("k3_support_desk"),
    collision!("k4_mixed"),
    collision!("control_separated"),
];

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("cannot read fixture {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Kb(#[from] KbError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("{name}: {source}")]
    Router {
        name: String,
        #[source]
        source: RouterError,
    },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("replay templates: {0}")]
    Templates(#[from] serde_json::Error),
}

fn read(path: &Path) -> Result<String, FixtureError> {
    std::fs::read_to_string(path).map_err(|source| FixtureError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Prompt pools the synthetic replay generator draws from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayTemplates {
    pub factual_unknown: Vec<String>,
    pub conversational_noise: Vec<String>,
    pub conversational_open: Vec<String>,
    pub creative_openers: Vec<String>,
    pub creative_forms: Vec<String>,
    pub creative_subjects: Vec<String>,
    pub creative_styles: Vec<String>,
    pub safety: Vec<String>,
    pub case_phrases: Vec<String>,
}

/// KB rows with their original surface form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KbRow {
    pub surface: String,
    pub answer: String,
    pub provenance: String,
}

/// Everything the gate, the baseline routers and the replay generator need.
#[derive(Debug, Clone)]
pub struct Fixtures {
    pub kb: Arc<KnowledgeBase>,
    pub kb_rows: Vec<KbRow>,
    pub policy: Arc<SafetyPolicy>,
    pub keyword_rules: String,
    pub intent_patterns: String,
    pub history: Vec<String>,
    pub templates: ReplayTemplates,
}

impl Fixtures {
    pub fn bundled() -> Result<Self, FixtureError> {
        Self::from_texts(
            KB_TSV,
            SAFETY_TSV,
            KEYWORD_RULES_TSV,
            INTENT_PATTERNS_TSV,
            HISTORY_TXT,
            REPLAY_TEMPLATES_JSON,
        )
    }

    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self, FixtureError> {
        let dir = dir.as_ref();
        let f = |name: &str| read(&dir.join(name));
        Self::from_texts(
            &f("kb.tsv")?,
            &f("safety.tsv")?,
            &f("keyword_rules.tsv")?,
            &f("intent_patterns.tsv")?,
            &f("history.txt")?,
            &f("replay_templates.json")?,
        )
    }

    pub fn from_texts(
        kb: &str,
        safety: &str,
        keyword_rules: &str,
        intent_patterns: &str,
        history: &str,
        templates: &str,
    ) -> Result<Self, FixtureError> {
        let kb_rows = kb
            .lines()
            .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
            .filter_map(|l| {
                let mut cols = l.split('\t');
                Some(KbRow {
                    surface: cols.next()?.to_string(),
                    answer: cols.next()?.to_string(),
                    provenance: cols.next()?.trim().to_string(),
                })
            })
            .collect();
        Ok(Self {
            kb: Arc::new(KnowledgeBase::parse(kb)?),
            kb_rows,
            policy: Arc::new(SafetyPolicy::parse(safety)?),
            keyword_rules: keyword_rules.to_string(),
            intent_patterns: intent_patterns.to_string(),
            history: history
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(str::to_string)
                .collect(),
            templates: serde_json::from_str(templates)?,
        })
    }

    /// A gate over these fixtures with an empty cache.
    pub fn gate(&self, config: GateConfig) -> Result<Gate, FixtureError> {
        Ok(Gate::new(
            config,
            Arc::clone(&self.policy),
            self.kb.clone(),
            Arc::new(ResponseCache::default()),
        )?)
    }

    /// History prompts with their reference outputs under the default
    /// deterministic configuration.
    pub fn history_outputs(&self) -> Vec<(String, String)> {
        self.history
            .iter()
            .map(|p| {
                let r = Request::deterministic("history", p.clone());
                let out = ReferenceBackend::render(&r.prompt, r.seed, r.max_tokens);
                (p.clone(), out)
            })
            .collect()
    }

    /// Warms `cache` with the history as if each prompt had been rendered.
    pub fn prime_cache(&self, cache: &ResponseCache) {
        for (p, out) in self.history_outputs() {
            let r = Request::deterministic("history", p.clone());
            cache.store(canonicalize(&p), config_fingerprint(&r), out);
        }
    }

    pub fn baseline_router(&self, kind: BaselineKind) -> Result<Box<dyn Router>, FixtureError> {
        let rules = match kind {
            BaselineKind::Keyword => self.keyword_rules.as_str(),
            BaselineKind::Intent => self.intent_patterns.as_str(),
            BaselineKind::CacheOnly => "",
        };
        build_baseline_router(
            kind,
            rules,
            Arc::clone(&self.kb),
            Arc::clone(&self.policy),
            &self.history_outputs(),
        )
        .map_err(|source| FixtureError::Router {
            name: kind.as_str().to_string(),
            source,
        })
    }
}

/// A population plus the feature map it is checked against.
#[derive(Debug, Clone)]
pub struct CollisionFixture {
    pub name: String,
    pub fmap: FeatureMap,
    pub population: Vec<LabeledRequest>,
}

impl CollisionFixture {
    pub fn parse(name: &str, features: &str, population: &str) -> Result<Self, FixtureError> {
        let wrap = |source| FixtureError::Router {
            name: name.to_string(),
            source,
        };
        Ok(Self {
            name: name.to_string(),
            fmap: FeatureMap::parse(features).map_err(wrap)?,
            population: parse_labeled_jsonl(population).map_err(wrap)?,
        })
    }
}

pub fn bundled_collision_fixtures() -> Result<Vec<CollisionFixture>, FixtureError> {
    COLLISION_SOURCES
        .iter()
        .map(|s| CollisionFixture::parse(s.name, s.features, s.population))
        .collect()
}

/// Loads every `<name>.features.tsv` with its sibling `<name>.jsonl`, sorted
/// by name.
pub fn load_collision_dir(dir: impl AsRef<Path>) -> Result<Vec<CollisionFixture>, FixtureError> {
    let dir = dir.as_ref();
    let entries = std::fs::read_dir(dir).map_err(|source| FixtureError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let mut names: Vec<(String, PathBuf)> = entries
        .filter_map(Result::ok)
        .filter_map(|e| {
            let file = e.file_name().to_string_lossy().to_string();
            file.strip_suffix(".features.tsv")
                .map(|n| (n.to_string(), e.path()))
        })
        .collect();
    names.sort();
    names
        .into_iter()
        .map(|(name, features)| {
            let population = dir.join(format!("{name}.jsonl"));
            CollisionFixture::parse(&name, &read(&features)?, &read(&population)?)
        })
        .collect()
}

pub fn adversarial() -> Result<Vec<LabeledRequest>, FixtureError> {
    parse_labeled_jsonl(ADVERSARIAL_JSONL).map_err(|source| FixtureError::Router {
        name: "adversarial".into(),
        source,
    })
}

//! Pattern routers: `g = h ∘ φ` over a finite binary feature map.
//!
//! Also the baseline routers used for comparison, collision search and the
//! exhaustive decision-table verifier showing that no pattern router can have
//! both zero false skips and a positive skip rate on a colliding population.

mod baseline;
mod feature;
mod frontier;
mod labeled;

use thiserror::Error;

pub use baseline::{
    build_baseline_router, BaselineKind, CacheOnlyRouter, GateRouter, PatternRouter, Routed, Router,
    RuleAction, UNKNOWN_ANSWER,
};
pub use feature::{
    extract_features, route_pattern, DecisionTable, FeatureMap, FeatureVector, Predicate, PredicateKind,
    RouteDecision, MAX_ENUMERATED_K,
};
pub use frontier::{
    brittleness, enumerate_frontier, evaluate_router, find_collisions, perturbations, semantic_router_escape,
    Brittleness, CollisionPair, FrontierPoint, FrontierSample, ImpossibilityReport, RouterEvaluation,
    MAX_FRONTIER_K,
};
pub use labeled::{parse_labeled_jsonl, LabeledRequest};

#[derive(Debug, Error)]
pub enum RouterError {
    #[error("feature map has no predicates")]
    EmptyFeatureMap,
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("decision table for k = {k} is too large to materialize")]
    TableTooLarge { k: usize },
    #[error("exhaustive enumeration is bounded to k <= {max}, got k = {k}")]
    EnumerationBound { k: usize, max: usize },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

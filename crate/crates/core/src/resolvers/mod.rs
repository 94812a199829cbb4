//! Bounded response pathways.
//!
//! Nothing in here samples or calls a backend. Every answer a resolver gives
//! can be reproduced by re-running the same pathway on the same loaded state.

mod cache;
mod canonical;
mod kb;
mod safety;
mod solver;

pub use cache::{config_fingerprint, CacheEntry, CacheError, ResponseCache, DEFAULT_CACHE_CAPACITY};
pub use canonical::{canonicalize, CanonicalKey};
pub use kb::{Fact, FactSource, KbError, KnowledgeBase, ResolverError};
pub use safety::{PatternKind, PolicyError, SafetyPolicy, SafetyRule, SafetyVerdict, Verdict};
pub use solver::deterministic_solve;

//! Execution gating for inference requests.
//!
//! A control plane that decides, per request, whether the model has to run
//! (`RENDER`) or whether a bounded pathway already gives the correct answer
//! (`DIRECT`, `NO_OP`, `ABSTAIN`). The crate is split the same way the system
//! is:
//!
//! - [`contract`]: request/decision types, dispatch and cost accounting
//! - [`resolvers`]: canonicalization, exact cache, deterministic solver,
//!   knowledge base and safety policy
//! - [`gate`]: the staged decision pipeline with conservative fallback
//! - [`routers`]: finite feature-map routers, collision search and the
//!   exhaustive decision-table verifier
//! - [`backend`]: the deterministic reference generator and remote wire types
//! - [`eval`]: replay sets, baselines, the validation protocol and reports
//!
//! Everything here is synchronous and free of I/O beyond optional file
//! loading, so the same code runs in the HTTP service, the CLI and the
//! browser demo.

pub mod backend;
pub mod config;
pub mod contract;
pub mod eval;
pub mod fixtures;
pub mod gate;
pub mod hash;
pub mod resolvers;
pub mod routers;

pub use backend::{Backend, BackendError, BackendKind, LatencyProfile, ReferenceBackend};
pub use contract::{
    action_cost, action_utility, dispatch, validate_request, Category, CostModel, Decision, DispatchError,
    FinalResponse, GateOutcome, ProofTag, RawRequest, RenderReason, Request, ResponseKind, ValidationError,
};
pub use gate::{Gate, GateConfig, ResolverTrace};

//! Deployable control plane around the gate.
//!
//! `POST /gate` returns the decision only; `POST /infer` gates, dispatches
//! and executes RENDER on the configured backend; `GET /metrics` and
//! `POST /admin/killswitch` are the operational surface. While the kill
//! switch is engaged every request bypasses the gate and executes.

pub mod config;
pub mod http;
pub mod killswitch;
pub mod metrics;
pub mod plane;
pub mod remote;

pub use config::ServiceConfig;
pub use http::{router, serve, AdminAction, KillSwitchCommand};
pub use killswitch::{KillSwitch, KillSwitchState, Transition, Trigger};
pub use metrics::{EquivalenceCounts, HistogramSnapshot, Metrics, MetricsSnapshot};
pub use plane::{ControlPlane, GateResponse, InferResponse, ServiceError};
pub use remote::RemoteBackend;

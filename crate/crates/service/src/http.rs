use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use mfee_core::RawRequest;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::killswitch::Trigger;
use crate::plane::{ControlPlane, ServiceError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdminAction {
    Engage,
    Reset,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KillSwitchCommand {
    pub action: AdminAction,
    #[serde(default)]
    pub reason: Option<String>,
}

struct ApiError(StatusCode, serde_json::Value);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(self.1)).into_response()
    }
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        match &e {
            ServiceError::Validation(v) => ApiError(
                StatusCode::BAD_REQUEST,
                json!({"error": e.to_string(), "field": v.field}),
            ),
            ServiceError::Backend { request_id, .. } => ApiError(
                StatusCode::BAD_GATEWAY,
                json!({"error": e.to_string(), "request_id": request_id}),
            ),
            _ => ApiError(StatusCode::INTERNAL_SERVER_ERROR, json!({"error": e.to_string()})),
        }
    }
}

fn parse_body<T: serde::de::DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| {
        ApiError(
            StatusCode::BAD_REQUEST,
            json!({"error": format!("malformed body: {e}"), "line": e.line(), "column": e.column()}),
        )
    })
}

async fn gate(State(plane): State<Arc<ControlPlane>>, body: Bytes) -> Result<impl IntoResponse, ApiError> {
    let raw: RawRequest = parse_body(&body)?;
    Ok(Json(plane.handle_gate(raw)?))
}

async fn infer(State(plane): State<Arc<ControlPlane>>, body: Bytes) -> Result<impl IntoResponse, ApiError> {
    let raw: RawRequest = parse_body(&body)?;
    // the backend may block on a remote call
    let resp = tokio::task::spawn_blocking(move || plane.handle_infer(raw))
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, json!({"error": e.to_string()})))??;
    Ok(Json(resp))
}

async fn metrics(State(plane): State<Arc<ControlPlane>>) -> impl IntoResponse {
    Json(plane.metrics_snapshot())
}

async fn killswitch(
    State(plane): State<Arc<ControlPlane>>,
    body: Bytes,
) -> Result<impl IntoResponse, ApiError> {
    let cmd: KillSwitchCommand = parse_body(&body)?;
    let signal = match cmd.action {
        AdminAction::Reset => None,
        AdminAction::Engage => Some(match cmd.reason.as_deref() {
            None => Trigger::Manual,
            Some(r) => r.parse().map_err(|e: String| {
                ApiError(StatusCode::BAD_REQUEST, json!({"error": e, "field": "reason"}))
            })?,
        }),
    };
    Ok(Json(plane.kill_switch_update(signal)))
}

pub fn router(plane: Arc<ControlPlane>) -> Router {
    Router::new()
        .route("/gate", post(gate))
        .route("/infer", post(infer))
        .route("/metrics", get(metrics))
        .route("/admin/killswitch", post(killswitch))
        .with_state(plane)
}

/// Serves until ctrl-c.
pub async fn serve(plane: Arc<ControlPlane>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(%addr, "control plane listening");
    axum::serve(listener, router(plane))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

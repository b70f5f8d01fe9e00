//! HTTP handlers, error mapping and request tracing.
//!
//! Every response carries `x-request-id`. Endpoints that run pipeline
//! layers also report `x-layer-us`: a single integer for session
//! creation (layer 1), and `l1;l2;l3` for data submission, zeros for
//! layers never reached. One log line is emitted per request with the
//! route, status and latency.

use crate::issuer::IssueRefusal;
use crate::AppState;
use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Request, State};
use axum::http::{HeaderValue, StatusCode};
use axum::middleware::Next;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::time::Instant;
use trustlayer_core::credentials::JwtCompact;
use trustlayer_core::crypto::base64url_encode;
use trustlayer_core::identity::Did;
use trustlayer_core::ledger::{BlockId, BlockPayload, DagLedger, LedgerError};
use trustlayer_core::now_ms;
use trustlayer_core::pipeline::{codes, query_verified, Layer1Error, QueryError};

/// A refusal on the wire: status plus a stable error code, with
/// optional human detail and the offending field for schema errors.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: String,
    pub detail: Option<String>,
    pub field: Option<String>,
}

impl ApiError {
    fn new(status: StatusCode, code: impl Into<String>) -> Self {
        ApiError {
            status,
            code: code.into(),
            detail: None,
            field: None,
        }
    }

    fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = Some(detail.into());
        self
    }

    fn malformed(detail: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, codes::MALFORMED).with_detail(detail)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.code });
        if let Some(detail) = self.detail {
            body["detail"] = Value::String(detail);
        }
        if let Some(field) = self.field {
            body["field"] = Value::String(field);
        }
        (self.status, Json(body)).into_response()
    }
}

impl From<Layer1Error> for ApiError {
    fn from(e: Layer1Error) -> Self {
        let status = match e {
            Layer1Error::Malformed(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::UNAUTHORIZED,
        };
        ApiError::new(status, e.code()).with_detail(e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(rejection: JsonRejection) -> Self {
        ApiError::malformed(rejection.body_text())
    }
}

fn layer_us_header(response: &mut Response, value: String) {
    if let Ok(v) = HeaderValue::from_str(&value) {
        response.headers_mut().insert("x-layer-us", v);
    }
}

#[derive(Deserialize)]
pub struct IssueRequest {
    pub did: String,
    pub document_fingerprint: String,
}

#[derive(Serialize)]
pub struct IssueResponse {
    pub vc_jwt: String,
}

async fn issue_credential(
    State(state): State<AppState>,
    payload: Result<Json<IssueRequest>, JsonRejection>,
) -> Result<Json<IssueResponse>, ApiError> {
    let Json(request) = payload?;
    let did: Did = request
        .did
        .parse()
        .map_err(|_| ApiError::malformed("did does not parse"))?;
    let token = state
        .issuer()
        .issue(&did, &request.document_fingerprint)
        .map_err(|e| match e {
            IssueRefusal::BadFingerprint => ApiError::malformed(e.to_string()),
            IssueRefusal::Refused => {
                ApiError::new(StatusCode::FORBIDDEN, "refused").with_detail(e.to_string())
            }
        })?;
    Ok(Json(IssueResponse {
        vc_jwt: token.as_str().to_string(),
    }))
}

#[derive(Serialize)]
pub struct ChallengeResponse {
    pub nonce_b64url: String,
    pub expires_at: i64,
}

async fn create_challenge(State(state): State<AppState>) -> Json<ChallengeResponse> {
    let challenge = state.trust().issue_challenge(now_ms());
    Json(ChallengeResponse {
        nonce_b64url: base64url_encode(&challenge.nonce),
        expires_at: challenge.expires_at,
    })
}

#[derive(Deserialize)]
pub struct SessionRequest {
    pub vp_jwt: String,
    pub ttl_ms: Option<i64>,
}

async fn create_session(
    State(state): State<AppState>,
    payload: Result<Json<SessionRequest>, JsonRejection>,
) -> Response {
    let request = match payload {
        Ok(Json(r)) => r,
        Err(rejection) => return ApiError::from(rejection).into_response(),
    };
    let token = JwtCompact::from_string(request.vp_jwt);
    let started = Instant::now();
    let outcome =
        state
            .trust()
            .verify_presentation(&token, state.ledger(), request.ttl_ms, now_ms());
    let elapsed = started.elapsed().as_micros();
    let mut response = match outcome {
        Ok(session) => (
            StatusCode::OK,
            Json(json!({
                "session_token": session.encoded(),
                "subject": session.subject.to_string(),
                "expires_at": session.expires_at,
            })),
        )
            .into_response(),
        Err(e) => ApiError::from(e).into_response(),
    };
    layer_us_header(&mut response, elapsed.to_string());
    response
}

#[derive(Deserialize)]
pub struct DataRequest {
    pub vc_jwt: String,
}

fn bearer_token(request: &axum::http::HeaderMap) -> Result<&str, ApiError> {
    request
        .get(axum::http::header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .filter(|v| !v.is_empty())
        .ok_or_else(|| {
            ApiError::new(StatusCode::UNAUTHORIZED, codes::SESSION_INVALID)
                .with_detail("missing bearer session token")
        })
}

async fn submit_data(
    State(state): State<AppState>,
    headers: axum::http::HeaderMap,
    payload: Result<Json<DataRequest>, JsonRejection>,
) -> Response {
    let mut layer_us = [0u128; 3];
    let outcome = submit_data_inner(&state, &headers, payload, &mut layer_us).await;
    let mut response = match outcome {
        Ok(body) => (StatusCode::CREATED, Json(body)).into_response(),
        Err(e) => e.into_response(),
    };
    layer_us_header(
        &mut response,
        format!("{};{};{}", layer_us[0], layer_us[1], layer_us[2]),
    );
    response
}

async fn submit_data_inner(
    state: &AppState,
    headers: &axum::http::HeaderMap,
    payload: Result<Json<DataRequest>, JsonRejection>,
    layer_us: &mut [u128; 3],
) -> Result<Value, ApiError> {
    let Json(request) = payload?;
    let token = bearer_token(headers)?;

    let started = Instant::now();
    let subject = state.trust().check_session(token, now_ms()).map_err(|e| {
        ApiError::new(StatusCode::UNAUTHORIZED, e.code()).with_detail(e.to_string())
    })?;
    layer_us[0] = started.elapsed().as_micros();

    let started = Instant::now();
    let vc_token = JwtCompact::from_string(request.vc_jwt);
    let (record, _) = state
        .trust()
        .validate_data_credential(&vc_token, &subject, state.ledger(), state.schema())
        .map_err(|e| {
            let mut err = ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.code())
                .with_detail(e.to_string());
            if let trustlayer_core::pipeline::Layer2Error::Schema(v) = &e {
                err.field = Some(v.field.clone());
            }
            err
        })?;
    layer_us[1] = started.elapsed().as_micros();

    let started = Instant::now();
    let receipt = state
        .trust()
        .store_record(&record, &subject, state.ledger(), state.store(), now_ms())
        .map_err(|e| {
            ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.code()).with_detail(e.to_string())
        })?;
    layer_us[2] = started.elapsed().as_micros();

    Ok(json!({
        "record_id": receipt.record_id,
        "block_id": receipt.block_id.to_hex(),
    }))
}

async fn get_record(
    State(state): State<AppState>,
    Path(record_id): Path<String>,
) -> Result<Json<Value>, ApiError> {
    let result = query_verified(&record_id, state.ledger(), state.store()).map_err(
        |QueryError::NotFound(id)| {
            ApiError::new(StatusCode::NOT_FOUND, codes::NOT_FOUND)
                .with_detail(format!("no record stored under '{id}'"))
        },
    )?;
    let mut body = json!({
        "record_id": record_id,
        "record": result.record,
        "verified": result.verified,
        "block_id": result.block_id.to_hex(),
        "source_did": result.source_did.to_string(),
    });
    if let Some(failure) = result.failure {
        body["failure"] = Value::String(failure.to_string());
    }
    Ok(Json(body))
}

async fn tangle_submit(
    State(state): State<AppState>,
    payload: Result<Json<BlockPayload>, JsonRejection>,
) -> Result<Json<Value>, ApiError> {
    let Json(block_payload) = payload?;
    let block_id = state.ledger().submit_block(block_payload).map_err(|e| match e {
        LedgerError::Canonical(_) => ApiError::malformed(e.to_string()),
        LedgerError::Io(_) | LedgerError::Corrupt { .. } => {
            ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, codes::LEDGER_FAILURE)
                .with_detail(e.to_string())
        }
        rejected => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "ledger-rejected")
            .with_detail(rejected.to_string()),
    })?;
    Ok(Json(json!({ "block_id": block_id.to_hex() })))
}

async fn tangle_get(
    State(state): State<AppState>,
    Path(block_id): Path<String>,
) -> Result<Json<Value>, ApiError> {
    let id = BlockId::from_hex(&block_id)
        .ok_or_else(|| ApiError::malformed("block id must be 64 hex characters"))?;
    let block = state.ledger().get_block(&id).ok_or_else(|| {
        ApiError::new(StatusCode::NOT_FOUND, codes::NOT_FOUND).with_detail("no such block")
    })?;
    Ok(Json(serde_json::to_value(&block).expect("block serializes")))
}

async fn stats(State(state): State<AppState>) -> Json<Value> {
    let ledger_stats = state.ledger().stats();
    Json(json!({
        "ledger": ledger_stats,
        "records": state.store().len(),
        "trust_did": state.trust().did().to_string(),
        "issuer_did": state.issuer().did().to_string(),
        "trusted_issuers": state
            .trust()
            .trusted_issuers()
            .iter()
            .map(|d| d.to_string())
            .collect::<Vec<_>>(),
        "challenge_ttl_ms": state.trust().config().challenge_ttl_ms,
        "session_ttl_ms": state.trust().config().session_ttl_ms,
        "vp_ttl_ms": state.config().vp_ttl_ms,
        "network_hrp": state.config().network_hrp,
    }))
}

async fn trace_requests(request: Request, next: Next) -> Response {
    let method = request.method().clone();
    let path = request.uri().path().to_string();
    let request_id = uuid::Uuid::new_v4().to_string();
    let started = Instant::now();
    let mut response = next.run(request).await;
    let latency_us = started.elapsed().as_micros();
    if let Ok(v) = HeaderValue::from_str(&request_id) {
        response.headers_mut().insert("x-request-id", v);
    }
    tracing::info!(
        target: "trustd::http",
        %method,
        path,
        status = response.status().as_u16(),
        latency_us,
        request_id,
        "request"
    );
    response
}

pub fn build_router(state: AppState) -> Router {
    Router::new()
        .route("/issuer/credentials", post(issue_credential))
        .route("/layer1/challenges", post(create_challenge))
        .route("/layer1/sessions", post(create_session))
        .route("/data", post(submit_data))
        .route("/data/{record_id}", get(get_record))
        .route("/tangle/blocks", post(tangle_submit))
        .route("/tangle/blocks/{block_id}", get(tangle_get))
        .route("/stats", get(stats))
        .layer(axum::middleware::from_fn(trace_requests))
        .with_state(state)
}

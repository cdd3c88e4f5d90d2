use std::sync::Arc;
use std::time::Duration;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use latmap_core::ChartCoords;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::session::{Session, SynthesisError};
use crate::SCHEMA_VERSION;

/// Values along each chart axis offered for grid and strip sampling, in
/// units of that axis' standard deviation.
pub const GRID_STEPS: [f64; 5] = [-2.0, -1.0, 0.0, 1.0, 2.0];

pub struct Decoder {
    pub url: String,
    pub client: reqwest::Client,
}

impl Decoder {
    pub fn new(url: String, timeout: Duration) -> Self {
        let client = reqwest::Client::builder().timeout(timeout).build().expect("http client");
        Decoder { url, client }
    }
}

pub struct DatasetState {
    pub session: Session,
    pub decoder: Option<Arc<Decoder>>,
}

type AppState = Arc<DatasetState>;

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "schema_version": SCHEMA_VERSION, "error": message.into() }))).into_response()
}

fn json_bytes(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, HeaderValue::from_static("application/json"))], bytes).into_response()
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/atlas", get(atlas))
        .route("/api/layout", get(layout))
        .route("/api/spectrum", get(spectrum))
        .route("/api/chart/{id}", get(chart))
        .route("/api/history", get(history))
        .route("/api/synthesize", post(synthesize))
        .route("/api/decode", post(decode))
        .with_state(state)
}

async fn health(State(s): State<AppState>) -> Response {
    let session = &s.session;
    Json(json!({
        "schema_version": SCHEMA_VERSION,
        "status": "ok",
        "cloud_checksum": session.checksum,
        "points": session.cloud.len(),
        "dim": session.dim(),
        "charts": session.atlas.len(),
        "d_max": session.atlas.d_max,
        "layout": session.layout_bytes.is_some(),
        "spectrum": session.spectrum_bytes.is_some(),
        "decoder": s.decoder.is_some(),
    }))
    .into_response()
}

async fn atlas(State(s): State<AppState>) -> Response {
    json_bytes(s.session.atlas_bytes.clone())
}

async fn layout(State(s): State<AppState>) -> Response {
    match &s.session.layout_bytes {
        Some(bytes) => json_bytes(bytes.clone()),
        None => error(StatusCode::NOT_FOUND, "no layout loaded for this dataset"),
    }
}

async fn spectrum(State(s): State<AppState>) -> Response {
    match &s.session.spectrum_bytes {
        Some(bytes) => json_bytes(bytes.clone()),
        None => error(StatusCode::NOT_FOUND, "no spectrum loaded for this dataset"),
    }
}

async fn chart(State(s): State<AppState>, Path(id): Path<String>) -> Response {
    let Some(chart) = id.parse::<usize>().ok().and_then(|i| s.session.atlas.chart(i)) else {
        return error(StatusCode::NOT_FOUND, format!("unknown chart `{id}`"));
    };
    let axes: Vec<Vec<f64>> = chart
        .sing_values
        .iter()
        .map(|sd| GRID_STEPS.iter().map(|k| k * sd).collect())
        .collect();
    Json(json!({
        "schema_version": SCHEMA_VERSION,
        "chart_id": chart.chart_id,
        "center_id": chart.center_id,
        "radius": chart.radius,
        "d": chart.d,
        "members": chart.members,
        "mean": chart.mean,
        "basis": chart.basis,
        "sing_values": chart.sing_values,
        "grid": { "steps": GRID_STEPS, "axis_values": axes },
    }))
    .into_response()
}

async fn history(State(s): State<AppState>) -> Response {
    Json(json!({ "schema_version": SCHEMA_VERSION, "entries": s.session.history() })).into_response()
}

#[derive(Debug, Deserialize, Serialize)]
pub struct SynthesizeRequest {
    pub chart_id: usize,
    pub coeffs: Vec<f64>,
}

async fn synthesize(State(s): State<AppState>, body: Result<Json<SynthesizeRequest>, JsonRejection>) -> Response {
    let req = match body {
        Ok(Json(req)) => req,
        Err(rej) => return error(StatusCode::UNPROCESSABLE_ENTITY, rej.body_text()),
    };
    if req.coeffs.iter().any(|c| !c.is_finite()) {
        return error(StatusCode::UNPROCESSABLE_ENTITY, "coefficients must be finite");
    }
    match s.session.synthesize(ChartCoords {
        chart_id: req.chart_id,
        coeffs: req.coeffs,
    }) {
        Ok(entry) => Json(json!({
            "schema_version": SCHEMA_VERSION,
            "vector_id": entry.vector_id,
            "chart_id": entry.coords.chart_id,
            "vector": entry.vector,
        }))
        .into_response(),
        Err(SynthesisError::UnknownChart(id)) => error(StatusCode::NOT_FOUND, format!("unknown chart {id}")),
        Err(SynthesisError::Invalid(msg)) => error(StatusCode::UNPROCESSABLE_ENTITY, msg),
    }
}

#[derive(Debug, Deserialize, Serialize)]
pub struct DecodeRequest {
    #[serde(default)]
    pub vector_id: Option<u64>,
    #[serde(default)]
    pub vector: Option<Vec<f64>>,
}

async fn decode(State(s): State<AppState>, body: Result<Json<DecodeRequest>, JsonRejection>) -> Response {
    let req = match body {
        Ok(Json(req)) => req,
        Err(rej) => return error(StatusCode::UNPROCESSABLE_ENTITY, rej.body_text()),
    };
    let vector = match (req.vector, req.vector_id) {
        (Some(v), _) => v,
        (None, Some(id)) => match s.session.history_vector(id) {
            Some(v) => v,
            None => return error(StatusCode::NOT_FOUND, format!("unknown vector_id {id}")),
        },
        (None, None) => return error(StatusCode::UNPROCESSABLE_ENTITY, "request needs `vector` or `vector_id`"),
    };
    if vector.len() != s.session.dim() {
        return error(
            StatusCode::UNPROCESSABLE_ENTITY,
            format!("vector has length {}, expected {}", vector.len(), s.session.dim()),
        );
    }
    if vector.iter().any(|v| !v.is_finite()) {
        return error(StatusCode::UNPROCESSABLE_ENTITY, "vector entries must be finite");
    }
    match &s.decoder {
        None => (
            [(header::CONTENT_TYPE, HeaderValue::from_static("image/svg+xml"))],
            placeholder_svg(&vector),
        )
            .into_response(),
        Some(decoder) => forward(decoder, &vector).await,
    }
}

async fn forward(decoder: &Decoder, vector: &[f64]) -> Response {
    let sent = decoder.client.post(&decoder.url).json(&json!({ "vector": vector })).send().await;
    let upstream = match sent {
        Ok(r) => r,
        Err(e) => {
            let what = if e.is_timeout() { "timed out" } else { "unreachable" };
            log::warn!("decoder {what}: {e}");
            return (
                StatusCode::BAD_GATEWAY,
                Json(json!({ "schema_version": SCHEMA_VERSION, "error": format!("decoder {what}"), "decoder_status": null })),
            )
                .into_response();
        }
    };
    let status = upstream.status();
    let content_type = upstream.headers().get(header::CONTENT_TYPE).cloned();
    let body = match upstream.bytes().await {
        Ok(b) => b,
        Err(e) => {
            return (
                StatusCode::BAD_GATEWAY,
                Json(json!({ "schema_version": SCHEMA_VERSION, "error": format!("decoder body: {e}"), "decoder_status": status.as_u16() })),
            )
                .into_response()
        }
    };
    if !status.is_success() {
        return (
            StatusCode::BAD_GATEWAY,
            [("x-decoder-status", HeaderValue::from(status.as_u16()))],
            Json(json!({
                "schema_version": SCHEMA_VERSION,
                "error": format!("decoder answered {status}"),
                "decoder_status": status.as_u16(),
            })),
        )
            .into_response();
    }
    let content_type = content_type.unwrap_or(HeaderValue::from_static("application/octet-stream"));
    ([(header::CONTENT_TYPE, content_type)], body).into_response()
}

/// A 64x64 glyph: a dot placed by the first two coordinates, colored by
/// their angle.
pub fn placeholder_svg(vector: &[f64]) -> String {
    let x = vector.first().copied().unwrap_or(0.0);
    let y = vector.get(1).copied().unwrap_or(0.0);
    let cx = 32.0 + 24.0 * x.tanh();
    let cy = 32.0 - 24.0 * y.tanh();
    let hue = y.atan2(x).to_degrees().rem_euclid(360.0);
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"64\" height=\"64\" viewBox=\"0 0 64 64\">\
<rect width=\"64\" height=\"64\" fill=\"#f2f2f2\"/>\
<circle cx=\"{cx:.2}\" cy=\"{cy:.2}\" r=\"10\" fill=\"hsl({hue:.1},70%,45%)\"/></svg>"
    )
}

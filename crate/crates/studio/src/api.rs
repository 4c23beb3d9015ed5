//! Route handlers.

use std::collections::HashMap;
use std::sync::Arc;

use axum::body::{to_bytes, Body, Bytes};
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use defectforge_core::detector::evaluate::score_cloud;
use defectforge_core::detector::fit_bank;
use defectforge_core::geometry::io::parse_ply;
use defectforge_core::geometry::voxel::{decimate_to_budget, pool_labels};
use defectforge_core::instruction::{execute, parse_instruction, validate, Source, SynthesisInstruction};
use defectforge_core::pipeline::fit_sdn_profile;
use defectforge_core::{AnomalyMask, PointCloud};
use serde::Deserialize;
use serde_json::{json, Value};
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

use crate::error::{ApiError, ApiResult};
use crate::store::{Insert, Store, StoreError, StoredCloud};
use crate::StudioConfig;

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<Store>,
    pub config: Arc<StudioConfig>,
}

pub fn router(state: AppState) -> Router {
    let cors = match &state.config.cors_origin {
        Some(origin) => match origin.parse() {
            Ok(v) => CorsLayer::new().allow_origin(AllowOrigin::exact(v)),
            Err(_) => {
                log::warn!("ignoring unparsable CORS origin {origin}");
                CorsLayer::new().allow_origin(Any)
            }
        },
        None => CorsLayer::new().allow_origin(Any),
    }
    .allow_methods(Any)
    .allow_headers(Any);
    Router::new()
        .route("/health", get(health))
        .route("/clouds", post(upload).layer(DefaultBodyLimit::disable()))
        .route("/clouds/{id}/preview", get(preview))
        .route("/clouds/{id}/download", get(download))
        .route("/clouds/{id}/validate", post(validate_instruction))
        .route("/clouds/{id}/synthesize", post(synthesize))
        .route("/clouds/{id}/score", post(score))
        .route("/banks", post(create_bank))
        .layer(cors)
        .with_state(state)
}

async fn health() -> Json<Value> {
    Json(json!({"status": "ok", "version": crate::VERSION}))
}

fn store_err(e: StoreError) -> ApiError {
    match e {
        StoreError::Full { cap } => ApiError::new(
            StatusCode::INSUFFICIENT_STORAGE,
            "store_full",
            format!("store would exceed its {cap}-byte cap"),
        ),
        StoreError::Core(e) => e.into(),
    }
}

/// Runs CPU-bound work off the async executor.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

fn lookup(state: &AppState, id: &str) -> ApiResult<Arc<StoredCloud>> {
    state.store.cloud(id).ok_or_else(|| ApiError::not_found("cloud", id))
}

fn bounds_json(cloud: &PointCloud) -> Value {
    let (lo, hi) = cloud.bounds();
    json!({"min": [lo.x, lo.y, lo.z], "max": [hi.x, hi.y, hi.z]})
}

fn cloud_summary(c: &StoredCloud) -> Value {
    json!({
        "id": c.id,
        "point_count": c.cloud.len(),
        "bounds": bounds_json(&c.cloud),
        "mask_points": c.mask.as_ref().map(|m| m.count()),
        "download": format!("/clouds/{}/download", c.id),
    })
}

async fn upload(State(state): State<AppState>, headers: HeaderMap, body: Body) -> ApiResult<Response> {
    let limit = state.config.upload_limit;
    let declared = headers
        .get(header::CONTENT_LENGTH)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.parse::<usize>().ok());
    if declared.is_some_and(|n| n > limit) {
        return Err(ApiError::too_large(limit));
    }
    let bytes = to_bytes(body, limit).await.map_err(|_| ApiError::too_large(limit))?;
    let store = state.store.clone();
    let (entry, inserted) = blocking(move || {
        let text = std::str::from_utf8(&bytes)
            .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "parse", format!("body is not UTF-8 text: {e}")))?;
        let loaded = parse_ply(text, "upload")?;
        store.insert_upload(loaded.cloud, loaded.mask).map_err(store_err)
    })
    .await?;
    let mut body = cloud_summary(&entry);
    body["created"] = json!(inserted == Insert::Created);
    Ok(Json(body).into_response())
}

#[derive(Debug, Deserialize)]
struct BudgetQuery {
    budget: Option<usize>,
}

/// Decimated positions plus mask bits pooled onto the kept points.
fn preview_json(cloud: &PointCloud, mask: Option<&AnomalyMask>, budget: usize) -> ApiResult<Value> {
    let reduced = decimate_to_budget(cloud, budget)?;
    let positions: Vec<[f64; 3]> = reduced.cloud.points().iter().map(|p| [p.x, p.y, p.z]).collect();
    let mask_bits = mask.map(|m| {
        pool_labels(&m.labels, &reduced.index_map, reduced.cloud.len())
            .into_iter()
            .map(u8::from)
            .collect::<Vec<_>>()
    });
    Ok(json!({
        "point_count": cloud.len(),
        "preview_count": positions.len(),
        "positions": positions,
        "mask": mask_bits,
    }))
}

fn budget_of(state: &AppState, q: Option<usize>) -> ApiResult<usize> {
    match q.unwrap_or(state.config.preview_budget) {
        0 => Err(ApiError::bad_request("budget must be at least 1")),
        b => Ok(b),
    }
}

async fn preview(State(state): State<AppState>, Path(id): Path<String>, Query(q): Query<BudgetQuery>) -> ApiResult<Json<Value>> {
    let entry = lookup(&state, &id)?;
    let budget = budget_of(&state, q.budget)?;
    let mut body = blocking(move || preview_json(&entry.cloud, entry.mask.as_ref(), budget)).await?;
    body["id"] = json!(id);
    Ok(Json(body))
}

async fn download(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let entry = lookup(&state, &id)?;
    let disposition = format!("attachment; filename=\"{id}.ply\"");
    Ok((
        [
            (header::CONTENT_TYPE, "application/octet-stream".to_string()),
            (header::CONTENT_DISPOSITION, disposition),
        ],
        entry.ply.clone(),
    )
        .into_response())
}

fn parse_body(body: &Bytes) -> ApiResult<SynthesisInstruction> {
    let text = std::str::from_utf8(body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "parse", e.to_string()))?;
    parse_instruction(text).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "parse", e.to_string()))
}

async fn validate_instruction(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<Value>> {
    let entry = lookup(&state, &id)?;
    let instr = parse_body(&body)?;
    let report = blocking(move || Ok(validate(&instr, &entry.cloud, &entry.profile))).await?;
    Ok(Json(serde_json::to_value(report).expect("report serializes")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    Preview,
    Commit,
}

/// Accepts `?mode=preview|commit` as well as a bare `?preview` / `?commit`.
fn mode_of(q: &HashMap<String, String>) -> ApiResult<Mode> {
    match q.get("mode").map(String::as_str) {
        Some("preview") => return Ok(Mode::Preview),
        Some("commit") => return Ok(Mode::Commit),
        Some(other) => return Err(ApiError::bad_request(format!("mode must be preview or commit, got {other}"))),
        None => {}
    }
    match (q.contains_key("preview"), q.contains_key("commit")) {
        (_, false) => Ok(Mode::Preview),
        (false, true) => Ok(Mode::Commit),
        (true, true) => Err(ApiError::bad_request("choose one of preview and commit")),
    }
}

async fn synthesize(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<HashMap<String, String>>,
    body: Bytes,
) -> ApiResult<Json<Value>> {
    let entry = lookup(&state, &id)?;
    let mode = mode_of(&q)?;
    let budget = budget_of(&state, q.get("budget").map(|b| b.parse()).transpose().map_err(|_| ApiError::bad_request("budget must be an integer"))?)?;
    let instr = parse_body(&body)?;
    let store = state.store.clone();
    blocking(move || {
        let report = validate(&instr, &entry.cloud, &entry.profile);
        if !report.valid {
            return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_instruction", report.summary())
                .with_detail(serde_json::to_value(&report).expect("report serializes")));
        }
        let mut run = execute(&instr, &entry.cloud, &entry.profile)?;
        run.provenance.source = Source::Direct;
        let provenance = serde_json::to_value(&run.provenance).expect("provenance serializes");
        let mut body = json!({
            "mode": if mode == Mode::Commit { "commit" } else { "preview" },
            "source_id": entry.id,
            "mask_points": run.mask.count(),
            "removed_points": run.provenance.removed.len(),
            "provenance": provenance,
        });
        match mode {
            Mode::Preview => {
                let view = preview_json(&run.cloud, Some(&run.mask), budget)?;
                for (k, v) in view.as_object().expect("object") {
                    body[k] = v.clone();
                }
            }
            Mode::Commit => {
                let (saved, _) = store
                    .insert_cloud(run.cloud, Some(run.mask), entry.profile.clone())
                    .map_err(store_err)?;
                body["id"] = json!(saved.id);
                body["point_count"] = json!(saved.cloud.len());
                body["download"] = json!(format!("/clouds/{}/download", saved.id));
            }
        }
        Ok(Json(body))
    })
    .await
}

#[derive(Debug, Deserialize)]
struct ScoreQuery {
    bank: Option<String>,
}

async fn score(State(state): State<AppState>, Path(id): Path<String>, Query(q): Query<ScoreQuery>) -> ApiResult<Json<Value>> {
    let entry = lookup(&state, &id)?;
    let bank_id = q.bank.ok_or_else(|| ApiError::bad_request("query parameter bank is required"))?;
    let bank = state.store.bank(&bank_id).ok_or_else(|| ApiError::not_found("bank", &bank_id))?;
    blocking(move || {
        let r = score_cloud(&entry.cloud, &bank.bank, &bank.profile, None)?;
        Ok(Json(json!({
            "cloud": entry.id,
            "bank": bank.id,
            "fingerprint": bank.bank.fingerprint.to_string(),
            "object_score": r.object_score,
            "k_agg": r.k_agg,
            "reduced_scores": r.reduced_scores,
            "point_scores": r.point_scores,
        })))
    })
    .await
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FitRequest {
    clouds: Vec<String>,
    #[serde(default)]
    category: Option<String>,
    #[serde(default)]
    k_feat: Option<usize>,
    #[serde(default)]
    bank_size: Option<usize>,
    #[serde(default)]
    voxel_size: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum BankRequest {
    Fit(FitRequest),
    Upload { bank: Value },
}

async fn create_bank(State(state): State<AppState>, body: Bytes) -> ApiResult<Json<Value>> {
    let req: BankRequest = serde_json::from_slice(&body).map_err(|e| {
        ApiError::new(StatusCode::BAD_REQUEST, "parse", "expected {clouds: [ids], ...} or {bank: {...}}")
            .with_detail(json!(e.to_string()))
    })?;
    let store = state.store.clone();
    let clouds = match &req {
        BankRequest::Fit(f) => {
            if f.clouds.is_empty() {
                return Err(ApiError::bad_request("clouds must name at least one training cloud"));
            }
            f.clouds.iter().map(|id| lookup(&state, id)).collect::<ApiResult<Vec<_>>>()?
        }
        BankRequest::Upload { .. } => Vec::new(),
    };
    blocking(move || {
        let bank = match req {
            BankRequest::Upload { bank } => defectforge_core::detector::PrototypeBank::from_json(&bank.to_string())
                .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "parse", e.to_string()))?,
            BankRequest::Fit(f) => {
                let train: Vec<PointCloud> = clouds.iter().map(|c| c.cloud.clone()).collect();
                let category = f.category.unwrap_or_else(|| crate::store::UPLOAD_CATEGORY.into());
                let profile = fit_sdn_profile(
                    &train,
                    &category,
                    f.voxel_size.unwrap_or(defectforge_core::pipeline::sdn::DEFAULT_VOXEL_SIZE),
                )?;
                fit_bank(
                    &train,
                    &profile,
                    f.k_feat.unwrap_or(defectforge_core::detector::features::DEFAULT_K_FEAT),
                    f.bank_size.unwrap_or(defectforge_core::detector::bank::DEFAULT_BANK_SIZE),
                )?
            }
        };
        if bank.profile.is_none() {
            return Err(ApiError::bad_request("bank must carry a profile reference"));
        }
        let (saved, inserted) = store.insert_bank(bank).map_err(store_err)?;
        Ok(Json(json!({
            "id": saved.id,
            "category": saved.profile.category,
            "fingerprint": saved.bank.fingerprint.to_string(),
            "prototypes": saved.bank.len(),
            "created": inserted == Insert::Created,
        })))
    })
    .await
}

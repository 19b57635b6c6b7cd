use std::collections::HashMap;
use std::path::{Path as FsPath, PathBuf};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use radscan_core::cam::{localize, DEFAULT_ALPHA};
use radscan_core::dataset::{load_image, BodyPart, Label, PreprocessConfig};
use radscan_core::metrics::DEFAULT_THRESHOLD;
use radscan_core::modelzoo::Classifier;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{ServiceError, ServiceResult};
use crate::store::{AuditRecord, Decision, SortOrder, Stats, Store, WorklistItem, WorklistPage, WorklistQuery};

pub const REVIEWER_HEADER: &str = "x-reviewer";
pub const DEFAULT_PAGE_SIZE: usize = 50;
pub const MAX_PAGE_SIZE: usize = 500;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Probability at or above which the model calls a study abnormal.
    pub threshold: f64,
    pub alpha: f32,
    pub preprocess: PreprocessConfig,
    /// Where rendered overlays are cached.
    pub cache_dir: PathBuf,
}

impl ServiceConfig {
    pub fn new(cache_dir: impl Into<PathBuf>) -> Self {
        ServiceConfig {
            threshold: DEFAULT_THRESHOLD,
            alpha: DEFAULT_ALPHA,
            preprocess: PreprocessConfig::default(),
            cache_dir: cache_dir.into(),
        }
    }
}

struct Inner {
    store: Arc<Store>,
    model: Arc<dyn Classifier>,
    fingerprint: String,
    config: ServiceConfig,
    /// Overlay rendering runs one at a time to bound memory.
    inference: Mutex<()>,
}

#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    pub fn new(store: Arc<Store>, model: Arc<dyn Classifier>, config: ServiceConfig) -> Self {
        let fingerprint = model.fingerprint();
        AppState(Arc::new(Inner {
            store,
            model,
            fingerprint,
            config,
            inference: Mutex::new(()),
        }))
    }

    pub fn store(&self) -> &Store {
        &self.0.store
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/worklist", get(worklist))
        .route("/studies/{id}", get(study))
        .route("/studies/{id}/images/{k}", get(image))
        .route("/studies/{id}/images/{k}/overlay", get(overlay))
        .route("/studies/{id}/decision", post(decide))
        .route("/studies/{id}/reopen", post(reopen))
        .route("/stats", get(stats))
        .route("/audit", get(audit))
        .layer(tower_http::cors::CorsLayer::permissive())
        .with_state(state)
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

fn parse_worklist_query(params: &HashMap<String, String>) -> ServiceResult<WorklistQuery> {
    let mut query = WorklistQuery {
        page: 1,
        page_size: DEFAULT_PAGE_SIZE,
        ..Default::default()
    };
    let positive = |key: &str, v: &str| -> ServiceResult<usize> {
        v.parse::<usize>()
            .ok()
            .filter(|n| *n >= 1)
            .ok_or_else(|| ServiceError::BadRequest(format!("{key} must be a positive integer, got `{v}`")))
    };
    for (key, value) in params {
        match key.as_str() {
            "status" if !value.is_empty() => query.status = Some(value.parse().map_err(ServiceError::BadRequest)?),
            "body_part" if !value.is_empty() => {
                query.body_part = Some(
                    value
                        .parse::<BodyPart>()
                        .map_err(|e| ServiceError::BadRequest(e.to_string()))?,
                )
            }
            "sort" if !value.is_empty() => query.sort = value.parse::<SortOrder>().map_err(ServiceError::BadRequest)?,
            "status" | "body_part" | "sort" => {}
            "page" => query.page = positive(key, value)?,
            "page_size" => {
                query.page_size = positive(key, value)?;
                if query.page_size > MAX_PAGE_SIZE {
                    return Err(ServiceError::BadRequest(format!("page_size may not exceed {MAX_PAGE_SIZE}")));
                }
            }
            other => return Err(ServiceError::BadRequest(format!("unknown query parameter `{other}`"))),
        }
    }
    Ok(query)
}

async fn worklist(
    State(state): State<AppState>,
    Query(params): Query<HashMap<String, String>>,
) -> ServiceResult<Json<WorklistPage>> {
    let query = parse_worklist_query(&params)?;
    Ok(Json(state.store().worklist(&query)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageView {
    pub index: usize,
    pub file_name: String,
    pub probability: f64,
    pub image_url: String,
    pub overlay_url: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyDetail {
    #[serde(flatten)]
    pub item: WorklistItem,
    pub images: Vec<ImageView>,
    pub decision: Option<Decision>,
}

async fn study(State(state): State<AppState>, Path(id): Path<String>) -> ServiceResult<Json<StudyDetail>> {
    let store = state.store();
    let item = store.item(&id)?;
    let images = store
        .images(&id)?
        .into_iter()
        .map(|e| ImageView {
            index: e.index,
            file_name: e
                .path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default(),
            probability: e.probability,
            image_url: format!("/studies/{id}/images/{}", e.index),
            overlay_url: format!("/studies/{id}/images/{}/overlay", e.index),
        })
        .collect();
    let decision = store.decision(&id)?;
    Ok(Json(StudyDetail { item, images, decision }))
}

fn content_type(path: &FsPath) -> &'static str {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("png") => "image/png",
        Some("jpg") | Some("jpeg") => "image/jpeg",
        _ => "application/octet-stream",
    }
}

async fn image(State(state): State<AppState>, Path((id, k)): Path<(String, usize)>) -> ServiceResult<Response> {
    let entry = state.store().image(&id, k)?;
    let bytes = tokio::fs::read(&entry.path)
        .await
        .map_err(|e| ServiceError::Internal(format!("cannot read {}: {e}", entry.path.display())))?;
    Ok(([(header::CONTENT_TYPE, content_type(&entry.path))], bytes).into_response())
}

/// Cache file name for an overlay: digest of the model fingerprint and the image path.
pub fn overlay_cache_key(fingerprint: &str, image_path: &FsPath) -> String {
    let mut hasher = Sha256::new();
    hasher.update(fingerprint.as_bytes());
    hasher.update([0u8]);
    hasher.update(image_path.to_string_lossy().as_bytes());
    hex::encode(hasher.finalize())
}

fn render_overlay(inner: &Inner, image_path: &FsPath, cache_path: &FsPath) -> ServiceResult<Vec<u8>> {
    let _queue = inner.inference.lock().unwrap_or_else(|p| p.into_inner());
    // another request may have rendered it while we waited
    if let Ok(bytes) = std::fs::read(cache_path) {
        return Ok(bytes);
    }
    let raw = load_image(image_path)?;
    // threshold 0: the viewer asks for an overlay regardless of the call
    let result = localize(inner.model.as_ref(), &raw, &inner.config.preprocess, 0.0, inner.config.alpha)
        .map_err(|e| match e {
            radscan_core::Error::Capability(msg) => ServiceError::Unprocessable(msg),
            other => ServiceError::Core(other),
        })?;
    let overlay = result
        .overlay
        .ok_or_else(|| ServiceError::Internal("no overlay produced".into()))?;
    let bytes = overlay.to_png()?;
    std::fs::create_dir_all(&inner.config.cache_dir)
        .map_err(|e| ServiceError::Internal(format!("cannot create cache dir: {e}")))?;
    let tmp = cache_path.with_extension("tmp");
    std::fs::write(&tmp, &bytes)
        .and_then(|_| std::fs::rename(&tmp, cache_path))
        .map_err(|e| ServiceError::Internal(format!("cannot write overlay cache: {e}")))?;
    Ok(bytes)
}

async fn overlay(State(state): State<AppState>, Path((id, k)): Path<(String, usize)>) -> ServiceResult<Response> {
    let entry = state.store().image(&id, k)?;
    let key = overlay_cache_key(&state.0.fingerprint, &entry.path);
    let cache_path = state.0.config.cache_dir.join(format!("{key}.png"));
    let bytes = match tokio::fs::read(&cache_path).await {
        Ok(bytes) => bytes,
        Err(_) => {
            let inner = state.0.clone();
            tokio::task::spawn_blocking(move || render_overlay(&inner, &entry.path, &cache_path))
                .await
                .map_err(|e| ServiceError::Internal(format!("overlay task failed: {e}")))??
        }
    };
    Ok(([(header::CONTENT_TYPE, "image/png")], bytes).into_response())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecisionRequest {
    pub verdict: Label,
    #[serde(default)]
    pub note: String,
    /// Item version the reviewer saw; a mismatch is rejected with 409.
    #[serde(default)]
    pub version: Option<i64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReopenRequest {
    #[serde(default)]
    pub note: String,
    #[serde(default)]
    pub version: Option<i64>,
}

fn reviewer(headers: &HeaderMap) -> ServiceResult<Option<String>> {
    match headers.get(REVIEWER_HEADER) {
        None => Ok(None),
        Some(v) => v
            .to_str()
            .map(|s| Some(s.to_string()))
            .map_err(|_| ServiceError::BadRequest("reviewer header must be visible ASCII".into())),
    }
}

fn parse_body<T: for<'de> Deserialize<'de> + Default>(body: &Bytes, allow_empty: bool) -> ServiceResult<T> {
    if allow_empty && body.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(body).map_err(|e| ServiceError::BadRequest(format!("invalid JSON body: {e}")))
}

async fn decide(
    State(state): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> ServiceResult<Json<WorklistItem>> {
    let request: DecisionRequest =
        serde_json::from_slice(&body).map_err(|e| ServiceError::BadRequest(format!("invalid decision: {e}")))?;
    let reviewer = reviewer(&headers)?;
    let item = state
        .store()
        .decide(&id, request.verdict, &request.note, reviewer.as_deref(), request.version)?;
    Ok(Json(item))
}

async fn reopen(
    State(state): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> ServiceResult<Json<WorklistItem>> {
    let request: ReopenRequest = parse_body(&body, true)?;
    let reviewer = reviewer(&headers)?;
    let item = state
        .store()
        .reopen(&id, &request.note, reviewer.as_deref(), request.version)?;
    Ok(Json(item))
}

async fn stats(State(state): State<AppState>) -> ServiceResult<Json<Stats>> {
    Ok(Json(state.store().stats()?))
}

async fn audit(
    State(state): State<AppState>,
    Query(params): Query<HashMap<String, String>>,
) -> ServiceResult<Json<Vec<AuditRecord>>> {
    if let Some(other) = params.keys().find(|k| k.as_str() != "study_id") {
        return Err(ServiceError::BadRequest(format!("unknown query parameter `{other}`")));
    }
    let study_id = params.get("study_id").map(String::as_str);
    if let Some(id) = study_id {
        state.store().item(id)?;
    }
    Ok(Json(state.store().audit(study_id)?))
}

/// Bind and serve until the process is stopped.
pub async fn serve(state: AppState, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}

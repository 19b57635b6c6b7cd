//! Triage worklist service: scored studies in a SQLite store, served over
//! HTTP/JSON with lazily rendered activation-map overlays.
//!
//! The API is described in `openapi.yaml` at the crate root.

mod api;
mod error;
mod scoring;
mod store;

pub use api::{
    overlay_cache_key, router, serve, AppState, DecisionRequest, ImageView, ReopenRequest, ServiceConfig, StudyDetail,
    DEFAULT_PAGE_SIZE, MAX_PAGE_SIZE, REVIEWER_HEADER,
};
pub use error::{ServiceError, ServiceResult};
pub use scoring::{score_manifest, ScoreSummary};
pub use store::{
    now_utc, replay_audit, AuditAction, AuditRecord, Decision, ImageEntry, ScoringFailure, SortOrder, Stats, Status,
    Store, StudyScore, WorklistItem, WorklistPage, WorklistQuery,
};

/// The OpenAPI description shipped with the crate.
pub const OPENAPI_YAML: &str = include_str!("../openapi.yaml");

//! HTTP API over a study bundle directory.
//!
//! Mutating endpoints are POSTs; a POST carrying `X-Request-Id` is executed at
//! most once and later duplicates receive the stored response.

pub mod error;
pub mod idempotency;
mod reports;
mod routes;
pub mod store;

use std::sync::{Arc, Mutex, MutexGuard};

use axum::body::Bytes;
use axum::extract::{FromRequest, Request};
use axum::routing::{get, post};
use axum::Router;
use serde::de::DeserializeOwned;

pub use error::{ApiError, FieldIssue};
pub use idempotency::{ReplayCache, REQUEST_ID};
pub use store::Store;

/// Name of the environment variable holding the bundle directory.
pub const DATA_ENV: &str = "EXPRESSFORGE_DATA";
pub const TICK_HZ: f64 = 50.0;

#[derive(Debug, Clone)]
pub struct AppState {
    store: Arc<Mutex<Store>>,
    replay: Arc<ReplayCache>,
}

impl AppState {
    pub fn new(store: Store) -> Self {
        Self {
            store: Arc::new(Mutex::new(store)),
            replay: Arc::new(ReplayCache::default()),
        }
    }

    /// All session and study mutations are serialized through this lock.
    pub fn lock(&self) -> MutexGuard<'_, Store> {
        self.store.lock().unwrap_or_else(|e| e.into_inner())
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(routes::health))
        .route("/chain", get(routes::chain))
        .route("/referents", get(routes::referents))
        .route("/kinematics/fk", post(routes::fk))
        .route("/sessions", post(routes::create_session))
        .route("/sessions/{id}", get(routes::get_session))
        .route("/sessions/{id}/keyframes", post(routes::save_keyframe))
        .route("/sessions/{id}/undo", post(routes::undo))
        .route("/sessions/{id}/speed", post(routes::set_speed))
        .route("/sessions/{id}/commit", post(routes::commit))
        .route("/sessions/{id}/play", post(routes::play))
        .route("/sessions/{id}/ratings", post(routes::ratings))
        .route("/playback/{id}/stream", get(routes::stream))
        .route("/studies/{id}", get(routes::get_study))
        .route("/studies/{id}/assign", post(routes::assign))
        .route("/studies/{id}/video-ended", post(routes::video_ended))
        .route("/studies/{id}/responses/interpretation", post(routes::interpretation))
        .route("/studies/{id}/responses/vas", post(routes::vas))
        .route("/studies/{id}/participants/{pid}", get(routes::participant))
        .route(
            "/studies/{id}/participants/{pid}/movement-only",
            post(routes::movement_only),
        )
        .route("/reports/os", get(reports::os))
        .route("/reports/qra", get(reports::qra))
        .route("/reports/taxonomy", get(reports::taxonomy))
        .route("/reports/study", get(reports::study))
        .layer(axum::middleware::from_fn_with_state(
            state.replay.clone(),
            idempotency::replay,
        ))
        .with_state(state)
}

/// JSON body extractor whose failures carry the offending field path.
/// An empty body is read as `{}`.
pub struct ApiJson<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for ApiJson<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        let bytes = Bytes::from_request(req, state)
            .await
            .map_err(|e| ApiError::invalid(e.body_text()))?;
        let text = std::str::from_utf8(&bytes).map_err(|_| ApiError::invalid("body is not UTF-8"))?;
        let text = if text.trim().is_empty() { "{}" } else { text };
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map(ApiJson).map_err(|e| {
            let mut path = e.path().to_string();
            let message = e.into_inner().to_string();
            if path == "." {
                path = missing_field(&message).unwrap_or_default().to_owned();
            }
            ApiError::field(path, message)
        })
    }
}

fn missing_field(message: &str) -> Option<&str> {
    let rest = message.strip_prefix("missing field `")?;
    rest.split('`').next()
}

fn now_ms() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// Serves `app` until ctrl-c.
pub async fn serve(listener: tokio::net::TcpListener, app: Router) -> std::io::Result<()> {
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

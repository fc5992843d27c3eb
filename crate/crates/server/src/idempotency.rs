use std::collections::{HashMap, VecDeque};
use std::sync::{Arc, Mutex};

use axum::body::{to_bytes, Body, Bytes};
use axum::extract::{Request, State};
use axum::http::{HeaderMap, HeaderValue, Method, StatusCode};
use axum::middleware::Next;
use axum::response::{IntoResponse, Response};
use tokio::sync::OnceCell;

use crate::error::ApiError;

pub const REQUEST_ID: &str = "x-request-id";
const MAX_BODY: usize = 1 << 20;
const CAPACITY: usize = 4096;

#[derive(Debug, Clone)]
struct Cached {
    status: StatusCode,
    headers: HeaderMap,
    body: Bytes,
}

#[derive(Debug)]
struct Entry {
    fingerprint: (String, Bytes),
    cell: Arc<OnceCell<Cached>>,
}

/// Results of mutating requests keyed by client request id.
#[derive(Debug, Default)]
pub struct ReplayCache {
    inner: Mutex<(HashMap<String, Entry>, VecDeque<String>)>,
}

impl ReplayCache {
    fn slot(&self, id: &str, fingerprint: (String, Bytes)) -> Result<Arc<OnceCell<Cached>>, ApiError> {
        let mut guard = self.inner.lock().unwrap_or_else(|e| e.into_inner());
        let (map, order) = &mut *guard;
        if let Some(entry) = map.get(id) {
            if entry.fingerprint != fingerprint {
                return Err(ApiError::conflict(format!(
                    "request id `{id}` was already used for a different request"
                )));
            }
            return Ok(entry.cell.clone());
        }
        let cell = Arc::new(OnceCell::new());
        map.insert(
            id.to_owned(),
            Entry {
                fingerprint,
                cell: cell.clone(),
            },
        );
        order.push_back(id.to_owned());
        while order.len() > CAPACITY {
            if let Some(old) = order.pop_front() {
                map.remove(&old);
            }
        }
        Ok(cell)
    }
}

/// Replays the stored response for a POST whose `X-Request-Id` was seen before.
/// Concurrent duplicates wait for the first one to finish.
pub async fn replay(State(cache): State<Arc<ReplayCache>>, req: Request, next: Next) -> Response {
    if req.method() != Method::POST {
        return next.run(req).await;
    }
    let Some(id) = req
        .headers()
        .get(REQUEST_ID)
        .and_then(|v| v.to_str().ok())
        .map(str::to_owned)
    else {
        return next.run(req).await;
    };
    let (parts, body) = req.into_parts();
    let bytes = match to_bytes(body, MAX_BODY).await {
        Ok(b) => b,
        Err(e) => return ApiError::invalid(format!("unreadable body: {e}")).into_response(),
    };
    let fingerprint = (parts.uri.path().to_owned(), bytes.clone());
    let cell = match cache.slot(&id, fingerprint) {
        Ok(cell) => cell,
        Err(e) => return e.into_response(),
    };
    let cached = cell
        .get_or_init(|| async {
            let res = next.run(Request::from_parts(parts, Body::from(bytes))).await;
            let (parts, body) = res.into_parts();
            let body = to_bytes(body, usize::MAX).await.unwrap_or_default();
            Cached {
                status: parts.status,
                headers: parts.headers,
                body,
            }
        })
        .await
        .clone();
    let mut res = Response::new(Body::from(cached.body));
    *res.status_mut() = cached.status;
    *res.headers_mut() = cached.headers;
    res.headers_mut()
        .insert(REQUEST_ID, HeaderValue::from_str(&id).expect("came from a header"));
    res
}

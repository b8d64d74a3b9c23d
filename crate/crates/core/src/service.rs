//! HTTP API over the candidate store, consumed by the annotation UI.
//!
//! | method | path | |
//! |---|---|---|
//! | GET | `/api/candidates?status=&limit=&after=` | page of candidates in id order |
//! | GET | `/api/candidates/{id}` | one candidate with its media URL and history |
//! | GET | `/api/candidates/{id}/neighbors` | `{"prev", "next"}` |
//! | POST | `/api/candidates/{id}/decision` | `{"decision", "edited_text"?, "annotator"}` |
//! | PATCH | `/api/candidates/{id}/transcript` | `{"edited_text", "annotator"}` |
//! | GET | `/api/media/{id}.mp4` | trimmed clip |
//! | GET | `/api/export` | accepted candidates as JSON Lines |

use std::net::SocketAddr;
use std::ops::Bound;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::{Body, Bytes};
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, patch, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::store::{export_jsonl, now_timestamp, Decision, DecisionRecord, Store, StoreError};
use crate::types::{CandidateSample, Status};

pub const DEFAULT_PAGE: usize = 50;
pub const MAX_PAGE: usize = 500;

#[derive(Debug, Clone)]
pub struct AppState {
    pub store: Store,
    pub media_root: PathBuf,
}

#[derive(Debug)]
pub enum ApiError {
    NotFound(String),
    BadRequest(String),
    Internal(String),
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::UnknownCandidate(id) => ApiError::NotFound(format!("unknown candidate {id}")),
            other => ApiError::Internal(other.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (code, msg) = match self {
            ApiError::NotFound(m) => (StatusCode::NOT_FOUND, m),
            ApiError::BadRequest(m) => (StatusCode::BAD_REQUEST, m),
            ApiError::Internal(m) => {
                log::error!("{m}");
                (StatusCode::INTERNAL_SERVER_ERROR, m)
            }
        };
        (code, Json(json!({ "error": msg }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Runs blocking store work off the async executor.
async fn blocking<T, F>(f: F) -> ApiResult<T>
where
    F: FnOnce() -> ApiResult<T> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError::Internal(format!("worker failed: {e}")))?
}

pub fn media_url(id: &str) -> String {
    format!("/api/media/{}.mp4", percent_encode(id))
}

fn percent_encode(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for b in s.bytes() {
        if b.is_ascii_alphanumeric() || b"-._~".contains(&b) {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    out
}

#[derive(Debug, Serialize)]
pub struct CandidateView {
    #[serde(flatten)]
    pub candidate: CandidateSample,
    pub media_url: String,
    pub media_available: bool,
    pub history: Vec<DecisionRecord>,
}

#[derive(Debug, Deserialize)]
pub struct ListQuery {
    pub status: Option<String>,
    pub limit: Option<usize>,
    /// Cursor: return candidates with ids strictly greater than this.
    pub after: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CandidatePage {
    pub items: Vec<CandidateSample>,
    pub next_cursor: Option<String>,
}

async fn list_candidates(
    State(st): State<Arc<AppState>>,
    Query(q): Query<ListQuery>,
) -> ApiResult<Json<CandidatePage>> {
    let status = match q.status.as_deref() {
        None | Some("") | Some("all") => None,
        Some(s) => Some(s.parse::<Status>().map_err(ApiError::BadRequest)?),
    };
    let limit = q.limit.unwrap_or(DEFAULT_PAGE);
    if limit == 0 || limit > MAX_PAGE {
        return Err(ApiError::BadRequest(format!("limit must be in 1..={MAX_PAGE}")));
    }
    let store = st.store.clone();
    let snapshot = blocking(move || Ok(store.snapshot()?)).await?;
    let mut matching = snapshot
        .candidates
        .into_values()
        .filter(|c| q.after.as_ref().is_none_or(|a| c.candidate_id.as_str() > a.as_str()))
        .filter(|c| status.is_none_or(|s| c.status == s));
    let items: Vec<CandidateSample> = matching.by_ref().take(limit).collect();
    let next_cursor = match matching.next() {
        Some(_) => items.last().map(|c| c.candidate_id.clone()),
        None => None,
    };
    Ok(Json(CandidatePage { items, next_cursor }))
}

async fn get_candidate(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<CandidateView>> {
    let store = st.store.clone();
    let media = st.media_root.join(format!("{id}.mp4"));
    blocking(move || {
        let snapshot = store.snapshot()?;
        let history = snapshot.history(&id).into_iter().cloned().collect();
        let candidate = snapshot
            .candidates
            .get(&id)
            .cloned()
            .ok_or_else(|| ApiError::NotFound(format!("unknown candidate {id}")))?;
        Ok(Json(CandidateView { media_url: media_url(&id), media_available: media.is_file(), candidate, history }))
    })
    .await
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct Neighbors {
    pub prev: Option<String>,
    pub next: Option<String>,
}

async fn neighbors(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<Neighbors>> {
    let store = st.store.clone();
    let snapshot = blocking(move || Ok(store.snapshot()?)).await?;
    if !snapshot.candidates.contains_key(&id) {
        return Err(ApiError::NotFound(format!("unknown candidate {id}")));
    }
    let prev = snapshot
        .candidates
        .range::<str, _>((Bound::Unbounded, Bound::Excluded(id.as_str())))
        .next_back()
        .map(|(k, _)| k.clone());
    let next = snapshot
        .candidates
        .range::<str, _>((Bound::Excluded(id.as_str()), Bound::Unbounded))
        .next()
        .map(|(k, _)| k.clone());
    Ok(Json(Neighbors { prev, next }))
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct StateReply {
    pub candidate_id: String,
    pub status: Status,
    pub edited_text: Option<String>,
}

fn parse_body(body: &Bytes) -> ApiResult<serde_json::Map<String, serde_json::Value>> {
    match serde_json::from_slice(body) {
        Ok(serde_json::Value::Object(m)) => Ok(m),
        Ok(_) => Err(ApiError::BadRequest("body must be a JSON object".into())),
        Err(e) => Err(ApiError::BadRequest(format!("malformed JSON: {e}"))),
    }
}

fn string_field(m: &serde_json::Map<String, serde_json::Value>, key: &str) -> ApiResult<Option<String>> {
    match m.get(key) {
        None | Some(serde_json::Value::Null) => Ok(None),
        Some(serde_json::Value::String(s)) => Ok(Some(s.clone())),
        Some(_) => Err(ApiError::BadRequest(format!("{key} must be a string"))),
    }
}

/// Writes one log record and reports the resulting effective state.
fn apply(
    store: &Store,
    id: &str,
    decision: Option<Decision>,
    edited_text: Option<String>,
    annotator: &str,
) -> ApiResult<StateReply> {
    let mut writer = store.writer()?;
    writer.record_decision(id, decision, edited_text, annotator, &now_timestamp())?;
    drop(writer);
    let c =
        store.snapshot()?.candidates.remove(id).ok_or_else(|| ApiError::NotFound(format!("unknown candidate {id}")))?;
    Ok(StateReply { candidate_id: c.candidate_id, status: c.status, edited_text: c.edited_text })
}

async fn post_decision(
    State(st): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<StateReply>> {
    let m = parse_body(&body)?;
    let decision = string_field(&m, "decision")?
        .ok_or_else(|| ApiError::BadRequest("missing decision".into()))?
        .parse::<Decision>()
        .map_err(ApiError::BadRequest)?;
    let edited_text = string_field(&m, "edited_text")?;
    let annotator = string_field(&m, "annotator")?.unwrap_or_else(|| "anonymous".into());
    let store = st.store.clone();
    blocking(move || apply(&store, &id, Some(decision), edited_text, &annotator)).await.map(Json)
}

async fn patch_transcript(
    State(st): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<StateReply>> {
    let m = parse_body(&body)?;
    let edited_text =
        string_field(&m, "edited_text")?.ok_or_else(|| ApiError::BadRequest("missing edited_text".into()))?;
    let annotator = string_field(&m, "annotator")?.unwrap_or_else(|| "anonymous".into());
    let store = st.store.clone();
    blocking(move || apply(&store, &id, None, Some(edited_text), &annotator)).await.map(Json)
}

/// `bytes=a-b`, `bytes=a-` or `bytes=-n`, clamped to the file.
fn parse_range(value: &str, len: u64) -> Option<(u64, u64)> {
    let spec = value.strip_prefix("bytes=")?;
    if spec.contains(',') || len == 0 {
        return None;
    }
    let (a, b) = spec.split_once('-')?;
    let (start, end) = match (a.trim(), b.trim()) {
        ("", n) => {
            let n: u64 = n.parse().ok()?;
            (len.saturating_sub(n), len - 1)
        }
        (a, "") => (a.parse().ok()?, len - 1),
        (a, b) => (a.parse().ok()?, b.parse::<u64>().ok()?.min(len - 1)),
    };
    (start <= end && start < len).then_some((start, end))
}

async fn media(State(st): State<Arc<AppState>>, Path(file): Path<String>, headers: HeaderMap) -> ApiResult<Response> {
    let id = file.strip_suffix(".mp4").ok_or_else(|| ApiError::NotFound(format!("no media {file}")))?;
    if id.is_empty() || id.contains('/') || id.contains("..") {
        return Err(ApiError::BadRequest("bad media name".into()));
    }
    let path = st.media_root.join(format!("{id}.mp4"));
    let bytes = match tokio::fs::read(&path).await {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(ApiError::NotFound(format!("no clip for {id}")));
        }
        Err(e) => return Err(ApiError::Internal(format!("{}: {e}", path.display()))),
    };
    let len = bytes.len() as u64;
    let range = headers.get(header::RANGE).and_then(|v| v.to_str().ok()).and_then(|v| parse_range(v, len));
    let resp = match range {
        Some((a, b)) => Response::builder()
            .status(StatusCode::PARTIAL_CONTENT)
            .header(header::CONTENT_RANGE, format!("bytes {a}-{b}/{len}"))
            .header(header::CONTENT_TYPE, "video/mp4")
            .header(header::ACCEPT_RANGES, "bytes")
            .body(Body::from(bytes[a as usize..=b as usize].to_vec())),
        None => Response::builder()
            .header(header::CONTENT_TYPE, "video/mp4")
            .header(header::ACCEPT_RANGES, "bytes")
            .body(Body::from(bytes)),
    };
    resp.map_err(|e| ApiError::Internal(e.to_string()))
}

async fn export(State(st): State<Arc<AppState>>) -> ApiResult<Response> {
    let store = st.store.clone();
    let body = blocking(move || Ok(export_jsonl(&store.snapshot()?))).await?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response())
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/candidates", get(list_candidates))
        .route("/api/candidates/{id}", get(get_candidate))
        .route("/api/candidates/{id}/neighbors", get(neighbors))
        .route("/api/candidates/{id}/decision", post(post_decision))
        .route("/api/candidates/{id}/transcript", patch(patch_transcript))
        .route("/api/media/{file}", get(media))
        .route("/api/export", get(export))
        .with_state(Arc::new(state))
}

/// Binds `addr` and serves until the process is interrupted. A busy port
/// fails here, before any request is accepted.
pub async fn serve(state: AppState, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("review service on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges() {
        assert_eq!(parse_range("bytes=0-9", 100), Some((0, 9)));
        assert_eq!(parse_range("bytes=90-", 100), Some((90, 99)));
        assert_eq!(parse_range("bytes=-10", 100), Some((90, 99)));
        assert_eq!(parse_range("bytes=50-500", 100), Some((50, 99)));
        assert_eq!(parse_range("bytes=100-", 100), None);
        assert_eq!(parse_range("items=0-1", 100), None);
    }

    #[test]
    fn media_urls_escape_separators() {
        assert_eq!(media_url("v:0:1:12"), "/api/media/v%3A0%3A1%3A12.mp4");
    }
}

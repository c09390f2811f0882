//! HTTP facade over one loaded project.
//!
//! The project is read-only. Edits are stateless: every request carries its
//! edit spec. Rendered previews are cached by the content hash of the
//! canonical spec and rendered at most once per hash.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::sync::OnceCell;

use trackedit_core::edit::{apply_edit_spec, EditError, EditSpec, EditState};
use trackedit_core::metrics::{MetricError, MetricReport};
use trackedit_core::preview::{render_preview, Preview, PreviewError};
use trackedit_core::tracks::io::encode_png_rgb;
use trackedit_core::tracks::{pair_depth_range, project_tracks};
use trackedit_core::{CameraPath, ClipPair, TrackSet};

/// A JSON error body: `{"error": {"status", "field", "message"}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub status: u16,
    pub field: Option<String>,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, field: Option<&str>, message: impl Into<String>) -> Self {
        Self { status: status.as_u16(), field: field.map(str::to_string), message: message.into() }
    }

    fn bad_request(field: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, Some(field), message)
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, None, message)
    }

    fn conflict(message: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, None, message)
    }
}

impl From<EditError> for ApiError {
    fn from(e: EditError) -> Self {
        Self::bad_request(&e.path(), e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(serde_json::json!({ "error": self }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

struct Rendered {
    preview: Preview,
    pngs: Vec<Vec<u8>>,
}

/// Loaded project plus the preview cache.
pub struct Session {
    pair: ClipPair,
    base: EditState,
    previews: Mutex<HashMap<String, Arc<OnceCell<Arc<Rendered>>>>>,
    renders: AtomicUsize,
}

impl Session {
    pub fn new(pair: ClipPair) -> Self {
        let base = EditState::from_pair(&pair);
        Self { pair, base, previews: Mutex::new(HashMap::new()), renders: AtomicUsize::new(0) }
    }

    pub fn pair(&self) -> &ClipPair {
        &self.pair
    }

    /// Number of preview renders performed so far.
    pub fn render_count(&self) -> usize {
        self.renders.load(Ordering::SeqCst)
    }

    fn cached(&self, hash: &str) -> Option<Arc<Rendered>> {
        let cell = self.previews.lock().expect("preview cache poisoned").get(hash).cloned()?;
        cell.get().cloned()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectInfo {
    #[serde(rename = "F")]
    pub frames: usize,
    #[serde(rename = "H")]
    pub height: usize,
    #[serde(rename = "W")]
    pub width: usize,
    #[serde(rename = "N")]
    pub tracks: usize,
    pub objects: Vec<u32>,
    pub has_depth: bool,
    pub has_target_video: bool,
}

/// Projected tracks for drawing: `coords[k][j]` is normalized `(x, y, z)`
/// of track `tracks[j]` at frame `frames[k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracksPayload {
    pub frames: Vec<usize>,
    pub tracks: Vec<usize>,
    pub object_id: Vec<u32>,
    pub coords: Vec<Vec<[f64; 3]>>,
    pub existence: Vec<Vec<u8>>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
pub struct Stride {
    pub stride: Option<usize>,
    pub frame_stride: Option<usize>,
}

impl Stride {
    fn resolve(self) -> ApiResult<(usize, usize)> {
        let s = self.stride.unwrap_or(1);
        let k = self.frame_stride.unwrap_or(1);
        if s == 0 {
            return Err(ApiError::bad_request("stride", "must be at least 1"));
        }
        if k == 0 {
            return Err(ApiError::bad_request("frame_stride", "must be at least 1"));
        }
        Ok((s, k))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditResponse {
    pub hash: String,
    pub tracks: TracksPayload,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreviewResponse {
    pub hash: String,
    pub frames: usize,
    /// True when the preview was already rendered before this request.
    pub cached: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reference {
    Source,
    Target,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsRequest {
    pub hash: String,
    pub against: Reference,
}

fn tracks_payload(tracks: &TrackSet, camera: &CameraPath, range_from: &EditState, stride: usize, frame_stride: usize) -> TracksPayload {
    let range = pair_depth_range(&range_from.source_tracks, &range_from.source_camera, &range_from.target_tracks, &range_from.target_camera);
    let pt = project_tracks(tracks, camera, &range);
    let frames: Vec<usize> = (0..pt.num_frames()).step_by(frame_stride).collect();
    let ids: Vec<usize> = (0..pt.num_tracks()).step_by(stride).collect();
    TracksPayload {
        coords: frames.iter().map(|&f| ids.iter().map(|&n| pt.coord(f, n)).collect()).collect(),
        existence: frames.iter().map(|&f| ids.iter().map(|&n| pt.exists(f, n) as u8).collect()).collect(),
        object_id: ids.iter().map(|&n| tracks.object_id(n)).collect(),
        frames,
        tracks: ids,
    }
}

fn parse_spec(body: &[u8]) -> ApiResult<EditSpec> {
    Ok(EditSpec::from_json(body)?)
}

fn png(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "image/png")], bytes).into_response()
}

async fn project_info(State(s): State<Arc<Session>>) -> Json<ProjectInfo> {
    let p = &s.pair;
    Json(ProjectInfo {
        frames: p.num_frames(),
        height: p.height(),
        width: p.width(),
        tracks: p.num_tracks(),
        objects: p.source_tracks.object_ids_present(),
        has_depth: p.depth.is_some(),
        has_target_video: p.target_video.is_some(),
    })
}

async fn frame(State(s): State<Arc<Session>>, Path(i): Path<usize>) -> ApiResult<Response> {
    let v = &s.pair.source_video;
    if i >= v.frames {
        return Err(ApiError::not_found(format!("frame {i} out of range 0..{}", v.frames)));
    }
    Ok(png(encode_png_rgb(v.width, v.height, v.frame(i))))
}

async fn tracks(State(s): State<Arc<Session>>, Query(q): Query<Stride>) -> ApiResult<Json<TracksPayload>> {
    let (stride, frame_stride) = q.resolve()?;
    Ok(Json(tracks_payload(&s.base.target_tracks, &s.base.target_camera, &s.base, stride, frame_stride)))
}

async fn edit(State(s): State<Arc<Session>>, Query(q): Query<Stride>, body: Bytes) -> ApiResult<Json<EditResponse>> {
    let (stride, frame_stride) = q.resolve()?;
    let spec = parse_spec(&body)?;
    let out = apply_edit_spec(&s.base, &spec)?;
    let st = &out.state;
    Ok(Json(EditResponse { hash: spec.content_hash(), tracks: tracks_payload(&st.target_tracks, &st.target_camera, st, stride, frame_stride) }))
}

async fn preview(State(s): State<Arc<Session>>, body: Bytes) -> ApiResult<Json<PreviewResponse>> {
    let spec = parse_spec(&body)?;
    if s.pair.depth.is_none() {
        return Err(ApiError::conflict("project has no depth maps; previews need depth"));
    }
    let hash = spec.content_hash();
    let cell = s.previews.lock().expect("preview cache poisoned").entry(hash.clone()).or_default().clone();
    let cached = cell.initialized();
    let session = s.clone();
    cell.get_or_try_init(|| async move {
        let task = tokio::task::spawn_blocking(move || {
            session.renders.fetch_add(1, Ordering::SeqCst);
            let preview = render_preview(&session.pair, &spec)?;
            let v = &preview.video;
            let pngs = (0..v.frames).map(|f| encode_png_rgb(v.width, v.height, v.frame(f))).collect();
            Ok::<_, PreviewError>(Arc::new(Rendered { preview, pngs }))
        });
        match task.await {
            Ok(Ok(r)) => Ok(r),
            Ok(Err(PreviewError::MissingDepth)) => Err(ApiError::conflict("project has no depth maps; previews need depth")),
            Ok(Err(PreviewError::Edit(e))) => Err(e.into()),
            Ok(Err(e)) => Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, None, e.to_string())),
            Err(e) => Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, None, format!("render task failed: {e}"))),
        }
    })
    .await?;
    Ok(Json(PreviewResponse { hash, frames: s.pair.num_frames(), cached }))
}

async fn preview_frame(State(s): State<Arc<Session>>, Path((hash, i)): Path<(String, usize)>) -> ApiResult<Response> {
    let r = s.cached(&hash).ok_or_else(|| ApiError::not_found(format!("no preview with hash {hash}")))?;
    let bytes = r.pngs.get(i).ok_or_else(|| ApiError::not_found(format!("frame {i} out of range 0..{}", r.pngs.len())))?;
    Ok(png(bytes.clone()))
}

fn parse_metrics_request(body: &[u8]) -> ApiResult<MetricsRequest> {
    let value: serde_json::Value = serde_json::from_slice(body).map_err(|e| ApiError::bad_request("<root>", e.to_string()))?;
    let obj = value.as_object().ok_or_else(|| ApiError::bad_request("<root>", "expected an object"))?;
    if let Some(k) = obj.keys().find(|k| !["hash", "against"].contains(&k.as_str())) {
        return Err(ApiError::bad_request(k, format!("unknown field `{k}`")));
    }
    let hash = obj.get("hash").and_then(|v| v.as_str()).ok_or_else(|| ApiError::bad_request("hash", "expected a string"))?;
    let against = match obj.get("against").and_then(|v| v.as_str()) {
        Some("source") => Reference::Source,
        Some("target") => Reference::Target,
        _ => return Err(ApiError::bad_request("against", "expected \"source\" or \"target\"")),
    };
    Ok(MetricsRequest { hash: hash.to_string(), against })
}

async fn metrics(State(s): State<Arc<Session>>, body: Bytes) -> ApiResult<Json<MetricReport>> {
    let req = parse_metrics_request(&body)?;
    let r = s.cached(&req.hash).ok_or_else(|| ApiError::not_found(format!("no preview with hash {}", req.hash)))?;
    let reference = match req.against {
        Reference::Source => &s.pair.source_video,
        Reference::Target => s.pair.target_video.as_ref().ok_or_else(|| ApiError::conflict("project has no target video"))?,
    };
    let report = MetricReport::for_videos(&r.preview.video, reference, Some(&r.preview.coverage.data)).map_err(|e| match e {
        MetricError::EmptyMask => ApiError::bad_request("hash", "preview covers no pixels"),
        e => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, None, e.to_string()),
    })?;
    Ok(Json(report))
}

const INDEX: &str = "<!doctype html><title>trackedit</title><pre>
GET  /api/project
GET  /api/frame/{i}
GET  /api/tracks?stride=s&amp;frame_stride=k
POST /api/edit?stride=s&amp;frame_stride=k   (edit spec JSON)
POST /api/preview                          (edit spec JSON)
GET  /api/preview/{hash}/{i}
POST /api/metrics                          {\"hash\", \"against\": \"source\"|\"target\"}
</pre>";

pub fn router(session: Arc<Session>) -> Router {
    Router::new()
        .route("/", get(|| async { Html(INDEX) }))
        .route("/api/project", get(project_info))
        .route("/api/frame/{i}", get(frame))
        .route("/api/tracks", get(tracks))
        .route("/api/edit", post(edit))
        .route("/api/preview", post(preview))
        .route("/api/preview/{hash}/{i}", get(preview_frame))
        .route("/api/metrics", post(metrics))
        .with_state(session)
}

/// Serves `pair` on localhost until the process ends.
pub async fn serve(pair: ClipPair, port: u16) -> std::io::Result<()> {
    let addr = SocketAddr::from(([127, 0, 0, 1], port));
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(Session::new(pair)))).await
}

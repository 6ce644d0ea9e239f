//! HTTP service over a built index. Every route lives under `/v1`.
//!
//! | route | answer |
//! |---|---|
//! | `POST /v1/search` | ranked keyframes for a query spec |
//! | `GET /v1/autocomplete?prefix=&limit=` | tag completions with document frequency |
//! | `GET /v1/similar?id=&k=` | nearest keyframes by visual features |
//! | `GET /v1/keyframes/{id}/thumbnail` | the ingested frame, untouched |
//! | `GET /v1/videos/{id}/summary` | keyframe ids of one video in segment order |
//! | `GET /v1/meta` | palette, object vocabulary, grid size |
//!
//! Before the index has loaded every route answers 503.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use axum::body::{Body, Bytes};
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use kfs_core::error::{IngestError, QueryError};
use kfs_core::index::vocabulary;
use kfs_core::ingest::{image_path, LoadedIndex};
use kfs_core::model::{parse_occurrence_token, GRID_SIZE};
use kfs_core::query::{normalize_prefix, Engine, Hit, QuerySpec, RankerTriple, ResultPage, SimilarQuery, VideoGroup};
use kfs_core::{Field, KeyframeId};
use serde::{Deserialize, Serialize};

pub const API_VERSION: u32 = 1;
pub const MAX_PAGE_SIZE: usize = 10_000;
pub const DEFAULT_SEARCH_PAGE: usize = 1000;
pub const DEFAULT_SIMILAR_K: usize = 100;
pub const DEFAULT_AUTOCOMPLETE_LIMIT: usize = 10;
/// Number of objects offered on the canvas palette.
pub const DEFAULT_SHORTLIST: usize = 38;

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error("index is still loading")]
    NotReady,
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    Internal(String),
}

impl From<QueryError> for ApiError {
    fn from(e: QueryError) -> Self {
        match e {
            QueryError::UnknownId(id) => ApiError::NotFound(format!("unknown keyframe {id}")),
            QueryError::NoEncoder => ApiError::BadRequest(e.to_string()),
            other => ApiError::BadRequest(other.to_string()),
        }
    }
}

#[derive(Serialize)]
struct ErrorBody {
    error: String,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match self {
            ApiError::NotReady => StatusCode::SERVICE_UNAVAILABLE,
            ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::NotFound(_) => StatusCode::NOT_FOUND,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(ErrorBody { error: self.to_string() })).into_response()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectEntry {
    pub label: String,
    /// Keyframes with at least one instance.
    pub df: u32,
}

/// A loaded index plus lookups precomputed for the routes.
#[derive(Debug)]
pub struct Service {
    engine: Engine,
    images: Option<PathBuf>,
    videos: BTreeMap<String, Vec<KeyframeId>>,
    objects: Vec<ObjectEntry>,
    shortlist: usize,
}

impl Service {
    pub fn new(engine: Engine, images: Option<PathBuf>) -> Self {
        let snapshot = engine.snapshot().clone();
        let mut videos: BTreeMap<String, Vec<KeyframeId>> = BTreeMap::new();
        for doc in snapshot.docs() {
            videos.entry(doc.id.video.clone()).or_default().push(doc.id.clone());
        }
        for ids in videos.values_mut() {
            ids.sort();
        }
        let classes = snapshot.field(Field::ObjcolorClasses);
        let mut objects: Vec<ObjectEntry> = vocabulary(&snapshot, Field::ObjcolorClasses)
            .into_iter()
            .filter_map(|t| match parse_occurrence_token(t) {
                Some((label, 1)) => Some(ObjectEntry { label: label.as_str().to_string(), df: classes.df(t) }),
                _ => None,
            })
            .collect();
        objects.sort_by(|a, b| b.df.cmp(&a.df).then_with(|| a.label.cmp(&b.label)));
        Self { engine, images, videos, objects, shortlist: DEFAULT_SHORTLIST }
    }

    pub fn open(dir: &Path) -> Result<Self, IngestError> {
        let loaded = LoadedIndex::open(dir)?;
        Ok(Self::new(loaded.engine(), loaded.service.images.clone()))
    }

    pub fn with_shortlist(mut self, n: usize) -> Self {
        self.shortlist = n;
        self
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    fn thumbnail_path(&self, id: &KeyframeId) -> Option<PathBuf> {
        self.images.as_deref().and_then(|dir| image_path(dir, id))
    }
}

/// Shared state; empty until the index is loaded.
#[derive(Debug, Default)]
pub struct AppState {
    service: RwLock<Option<Arc<Service>>>,
}

impl AppState {
    pub fn loading() -> Arc<Self> {
        Arc::new(Self::default())
    }

    pub fn ready(service: Service) -> Arc<Self> {
        let state = Self::loading();
        state.set(service);
        state
    }

    pub fn set(&self, service: Service) {
        *self.service.write().unwrap_or_else(|e| e.into_inner()) = Some(Arc::new(service));
    }

    fn get(&self) -> Result<Arc<Service>, ApiError> {
        self.service.read().unwrap_or_else(|e| e.into_inner()).clone().ok_or(ApiError::NotReady)
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/search", post(search))
        .route("/v1/autocomplete", get(autocomplete))
        .route("/v1/similar", get(similar))
        .route("/v1/keyframes/{id}/thumbnail", get(thumbnail))
        .route("/v1/videos/{id}/summary", get(video_summary))
        .route("/v1/meta", get(meta))
        .with_state(state)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchRequest {
    pub spec: QuerySpec,
    #[serde(default)]
    pub triple: Option<RankerTriple>,
    #[serde(default)]
    pub page_size: Option<usize>,
    #[serde(default)]
    pub group_by_video: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiHit {
    pub id: KeyframeId,
    pub score: f64,
    /// `None` marks a keyframe without a frame on disk.
    pub thumbnail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiGroup {
    pub video: String,
    pub hits: Vec<ApiHit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResponse {
    pub version: u32,
    /// Absent for similarity results.
    pub triple: Option<RankerTriple>,
    pub total: usize,
    pub hits: Vec<ApiHit>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub groups: Option<Vec<ApiGroup>>,
}

fn thumbnail_url(id: &KeyframeId) -> String {
    format!("/v1/keyframes/{id}/thumbnail")
}

fn api_hits(service: &Service, hits: &[Hit]) -> Vec<ApiHit> {
    hits.iter()
        .map(|h| ApiHit {
            id: h.id.clone(),
            score: h.score,
            thumbnail: service.thumbnail_path(&h.id).map(|_| thumbnail_url(&h.id)),
        })
        .collect()
}

fn response(service: &Service, page: &ResultPage, triple: Option<RankerTriple>, group: bool) -> SearchResponse {
    let groups = group.then(|| {
        page.group_by_video()
            .into_iter()
            .map(|VideoGroup { video, hits }| ApiGroup { video, hits: api_hits(service, &hits) })
            .collect()
    });
    SearchResponse { version: API_VERSION, triple, total: page.total, hits: api_hits(service, &page.hits), groups }
}

fn page_size(requested: Option<usize>, default: usize) -> Result<usize, ApiError> {
    match requested {
        None => Ok(default),
        Some(0) => Err(ApiError::BadRequest("page size must be positive".into())),
        Some(n) if n > MAX_PAGE_SIZE => Err(ApiError::BadRequest(format!("page size above {MAX_PAGE_SIZE}"))),
        Some(n) => Ok(n),
    }
}

async fn search(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Json<SearchResponse>, ApiError> {
    let service = state.get()?;
    let req: SearchRequest =
        serde_json::from_slice(&body).map_err(|e| ApiError::BadRequest(format!("invalid request: {e}")))?;
    let size = page_size(req.page_size, DEFAULT_SEARCH_PAGE)?;
    let triple = req.triple.unwrap_or_default();
    let page = service.engine.execute(&req.spec, &triple, size)?;
    let triple = (!req.spec.is_similarity()).then_some(triple);
    Ok(Json(response(&service, &page, triple, req.group_by_video)))
}

#[derive(Debug, Deserialize)]
struct AutocompleteParams {
    prefix: String,
    limit: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub term: String,
    pub df: u32,
    /// `music (3)`
    pub display: String,
}

async fn autocomplete(
    State(state): State<Arc<AppState>>,
    Query(params): Query<AutocompleteParams>,
) -> Result<Json<Vec<Completion>>, ApiError> {
    let service = state.get()?;
    let limit = params.limit.unwrap_or(DEFAULT_AUTOCOMPLETE_LIMIT);
    let prefix = normalize_prefix(&params.prefix);
    let out = service
        .engine
        .snapshot()
        .expand_wildcard(Field::SceneTags, &prefix)
        .into_iter()
        .take(limit)
        .map(|(term, df)| Completion { display: format!("{term} ({df})"), term, df })
        .collect();
    Ok(Json(out))
}

#[derive(Debug, Deserialize)]
struct SimilarParams {
    id: String,
    k: Option<usize>,
}

fn parse_id(raw: &str) -> Result<KeyframeId, ApiError> {
    raw.parse().map_err(|e| ApiError::BadRequest(format!("bad keyframe id `{raw}`: {e}")))
}

async fn similar(
    State(state): State<Arc<AppState>>,
    Query(params): Query<SimilarParams>,
) -> Result<Json<SearchResponse>, ApiError> {
    let service = state.get()?;
    let id = parse_id(&params.id)?;
    let k = page_size(params.k, DEFAULT_SIMILAR_K)?;
    let page = service.engine.similar(&SimilarQuery::Id(id), k)?;
    Ok(Json(response(&service, &page, None, false)))
}

fn content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("png") => "image/png",
        _ => "image/jpeg",
    }
}

async fn thumbnail(State(state): State<Arc<AppState>>, UrlPath(raw): UrlPath<String>) -> Result<Response, ApiError> {
    let service = state.get()?;
    let id = parse_id(&raw)?;
    if service.engine.snapshot().ordinal(&id).is_none() {
        return Err(ApiError::NotFound(format!("unknown keyframe {id}")));
    }
    let path = service.thumbnail_path(&id).ok_or_else(|| ApiError::NotFound(format!("no thumbnail for {id}")))?;
    let bytes = tokio::fs::read(&path).await.map_err(|e| ApiError::Internal(format!("{}: {e}", path.display())))?;
    Ok(([(header::CONTENT_TYPE, content_type(&path))], Body::from(bytes)).into_response())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoSummary {
    pub video: String,
    pub keyframes: Vec<KeyframeId>,
}

async fn video_summary(
    State(state): State<Arc<AppState>>,
    UrlPath(video): UrlPath<String>,
) -> Result<Json<VideoSummary>, ApiError> {
    let service = state.get()?;
    let keyframes = service.videos.get(&video).ok_or_else(|| ApiError::NotFound(format!("unknown video {video}")))?;
    Ok(Json(VideoSummary { video, keyframes: keyframes.clone() }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaletteColor {
    pub name: String,
    pub rgb: [u8; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub version: u32,
    pub grid_size: usize,
    pub keyframes: usize,
    pub videos: usize,
    pub default_triple: RankerTriple,
    pub similarity: bool,
    pub palette: Vec<PaletteColor>,
    /// Every object label, most frequent first.
    pub objects: Vec<ObjectEntry>,
    /// Labels for the canvas palette.
    pub shortlist: Vec<String>,
}

async fn meta(State(state): State<Arc<AppState>>) -> Result<Json<Meta>, ApiError> {
    let service = state.get()?;
    let engine = &service.engine;
    Ok(Json(Meta {
        version: API_VERSION,
        grid_size: GRID_SIZE,
        keyframes: engine.snapshot().len(),
        videos: service.videos.len(),
        default_triple: RankerTriple::default(),
        similarity: engine.snapshot().field(Field::VisualFeatures).term_count() > 0,
        palette: engine
            .palette()
            .entries()
            .iter()
            .map(|e| PaletteColor { name: e.name.as_str().to_string(), rgb: e.rgb })
            .collect(),
        objects: service.objects.clone(),
        shortlist: service.objects.iter().take(service.shortlist).map(|o| o.label.clone()).collect(),
    }))
}

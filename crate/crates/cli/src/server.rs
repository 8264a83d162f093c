//! HTTP service exposing a built run directory to the explorer.

use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use sphx_core::colorize::{colorize_embedding, encode_png, Colormap};
use sphx_core::embedding::coords_to_f32_bytes;
use sphx_core::rle::{encode_runs, runs_to_bytes};
use sphx_core::{Embedding, RefinementRequest, RefinementResult};
use tokio::sync::Semaphore;

use crate::error::CliError;
use crate::session::{canonical_ids, refinement_ref, Session};

/// Response header carrying the hierarchy's provenance hash.
pub const PROVENANCE_HEADER: &str = "x-sphx-provenance";

#[derive(Clone, Copy, Debug)]
pub struct ServerConfig {
    /// Refinement layouts allowed to run at once.
    pub max_jobs: usize,
    /// Largest refined subset accepted.
    pub max_points: usize,
    /// Layout iterations for refinements.
    pub iterations: usize,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            max_jobs: 2,
            max_points: 20_000,
            iterations: 1000,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum JobState {
    Queued,
    Running,
    Done,
    Failed(String),
}

struct Job {
    state: Mutex<JobState>,
    /// Fraction complete as `f64` bits.
    progress: AtomicU64,
    reference: String,
}

impl Job {
    fn new(reference: String, state: JobState) -> Self {
        let progress = if state == JobState::Done { 1.0f64 } else { 0.0 };
        Self {
            state: Mutex::new(state),
            progress: AtomicU64::new(progress.to_bits()),
            reference,
        }
    }

    fn set(&self, state: JobState) {
        *self.state.lock().unwrap() = state;
    }
}

/// A completed refinement.
pub struct Refined {
    pub request: RefinementRequest,
    pub seed: u64,
    pub result: RefinementResult,
    pub embedding: Embedding,
}

/// Loaded artifacts plus the job table and refinement cache.
pub struct AppState {
    session: Result<Arc<Session>, String>,
    embeddings: Vec<Result<Arc<Vec<[f64; 2]>>, String>>,
    provenance: String,
    config: ServerConfig,
    jobs: Mutex<HashMap<u64, Arc<Job>>>,
    next_job: AtomicU64,
    cache: Mutex<HashMap<String, Arc<Refined>>>,
    permits: Arc<Semaphore>,
    running: AtomicUsize,
    peak_running: AtomicUsize,
}

impl AppState {
    /// Loads `run`. Missing or broken artifacts leave the state unavailable;
    /// every data endpoint then answers 503 with the reason.
    pub fn load(run: &Path, config: ServerConfig) -> Arc<Self> {
        let session = Session::load(run).map(Arc::new).map_err(|e| e.to_string());
        let embeddings = match &session {
            Ok(s) => (0..s.level_count())
                .map(|l| match s.saved_embedding(l) {
                    Ok(Some(c)) => Ok(Arc::new(c)),
                    Ok(None) => Err(format!("no embedding for level {l}; run `sphx embed --level {l}`")),
                    Err(e) => Err(e.to_string()),
                })
                .collect(),
            Err(_) => Vec::new(),
        };
        let provenance = session
            .as_ref()
            .map_or_else(|_| "unavailable".to_string(), |s| s.provenance.clone());
        Arc::new(Self {
            session,
            embeddings,
            provenance,
            config,
            jobs: Mutex::new(HashMap::new()),
            next_job: AtomicU64::new(1),
            cache: Mutex::new(HashMap::new()),
            permits: Arc::new(Semaphore::new(config.max_jobs.max(1))),
            running: AtomicUsize::new(0),
            peak_running: AtomicUsize::new(0),
        })
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    /// Largest number of layouts that ran at the same time so far.
    pub fn peak_running(&self) -> usize {
        self.peak_running.load(Ordering::SeqCst)
    }

    fn session(&self) -> Result<&Arc<Session>, ApiError> {
        self.session
            .as_ref()
            .map_err(|r| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, format!("artifacts unavailable: {r}")))
    }

    fn level(&self, level: usize) -> Result<&Arc<Session>, ApiError> {
        let s = self.session()?;
        if level >= s.level_count() {
            return Err(ApiError::new(
                StatusCode::NOT_FOUND,
                format!("level {level} does not exist ({} levels)", s.level_count()),
            ));
        }
        Ok(s)
    }

    fn embedding(&self, level: usize) -> Result<Arc<Vec<[f64; 2]>>, ApiError> {
        self.level(level)?;
        self.embeddings[level]
            .clone()
            .map_err(|r| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, r))
    }

    fn add_job(&self, job: Job) -> (u64, Arc<Job>) {
        let id = self.next_job.fetch_add(1, Ordering::SeqCst);
        let job = Arc::new(job);
        self.jobs.lock().unwrap().insert(id, job.clone());
        (id, job)
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }
}

impl From<CliError> for ApiError {
    fn from(e: CliError) -> Self {
        let status = match e {
            CliError::Usage(_) => StatusCode::BAD_REQUEST,
            CliError::Data(_) => StatusCode::SERVICE_UNAVAILABLE,
            CliError::Numeric(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e.message())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn binary(bytes: Vec<u8>, content_type: &'static str) -> Response {
    ([(header::CONTENT_TYPE, content_type)], bytes).into_response()
}

fn f32_bytes(values: impl IntoIterator<Item = f32>) -> Vec<u8> {
    values.into_iter().flat_map(f32::to_le_bytes).collect()
}

async fn meta(State(state): State<Arc<AppState>>) -> ApiResult<Json<serde_json::Value>> {
    let s = state.session()?;
    Ok(Json(json!({
        "width": s.width,
        "height": s.height,
        "channels": s.image.channels(),
        "channel_names": s.image.channel_names(),
        "levels": s.level_count(),
        "level_sizes": s.hierarchy.level_sizes(),
        "connectivity": s.config.connectivity.as_number(),
        "provenance": s.provenance,
        "parameters": s.config.to_key_values().into_map(),
        "max_points": state.config.max_points,
    })))
}

#[derive(Serialize)]
struct LevelInfo {
    level: usize,
    superpixels: usize,
    has_embedding: bool,
}

async fn levels(State(state): State<Arc<AppState>>) -> ApiResult<Json<Vec<LevelInfo>>> {
    let s = state.session()?;
    Ok(Json(
        s.hierarchy
            .levels
            .iter()
            .map(|l| LevelInfo {
                level: l.level,
                superpixels: l.superpixel_count(),
                has_embedding: state.embeddings[l.level].is_ok(),
            })
            .collect(),
    ))
}

async fn labels(State(state): State<Arc<AppState>>, UrlPath(level): UrlPath<usize>) -> ApiResult<Response> {
    let s = state.level(level)?;
    let runs = encode_runs(&s.hierarchy.levels[level].labels);
    Ok(binary(runs_to_bytes(&runs), "application/octet-stream"))
}

async fn embedding(State(state): State<Arc<AppState>>, UrlPath(level): UrlPath<usize>) -> ApiResult<Response> {
    let coords = state.embedding(level)?;
    Ok(binary(coords_to_f32_bytes(&coords), "application/octet-stream"))
}

#[derive(Deserialize)]
struct ColorizeQuery {
    colormap: Option<String>,
}

async fn colorized(
    State(state): State<Arc<AppState>>,
    UrlPath(level): UrlPath<usize>,
    Query(q): Query<ColorizeQuery>,
) -> ApiResult<Response> {
    let coords = state.embedding(level)?;
    let s = state.level(level)?.clone();
    let colormap = match q.colormap {
        Some(spec) => Colormap::parse(&spec).map_err(ApiError::bad_request)?,
        None => Colormap::default(),
    };
    let png = tokio::task::spawn_blocking(move || {
        let rgb = colorize_embedding(&coords, &s.hierarchy.levels[level].labels, &colormap)?;
        encode_png(&rgb, s.width, s.height)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, format!("colorize: {e}")))?;
    Ok(binary(png, "image/png"))
}

#[derive(Deserialize)]
struct MeansQuery {
    #[serde(default)]
    level: usize,
}

async fn channel_means(
    State(state): State<Arc<AppState>>,
    UrlPath(channel): UrlPath<usize>,
    Query(q): Query<MeansQuery>,
) -> ApiResult<Response> {
    let s = state.level(q.level)?.clone();
    let c = s.image.channels();
    if channel >= c {
        return Err(ApiError::new(
            StatusCode::NOT_FOUND,
            format!("channel {channel} does not exist ({c} channels)"),
        ));
    }
    let means = tokio::task::spawn_blocking(move || s.channel_means(q.level))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    let column = means.chunks_exact(c).map(|row| row[channel] as f32);
    Ok(binary(f32_bytes(column), "application/octet-stream"))
}

#[derive(Deserialize)]
struct RefineBody {
    level: usize,
    ids: Vec<u32>,
    gamma: Option<f64>,
    #[serde(default)]
    seed: u64,
}

async fn refine(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<Json<serde_json::Value>> {
    let session = state.session()?.clone();
    let body: RefineBody =
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(format!("bad refine request: {e}")))?;
    let request = RefinementRequest {
        level: body.level,
        selected: canonical_ids(&body.ids),
        gamma: body.gamma,
    };
    let seed = body.seed;
    let iterations = state.config.iterations;
    let reference = refinement_ref(&state.provenance, &request, seed, iterations);

    if state.cache.lock().unwrap().contains_key(&reference) {
        let (id, _) = state.add_job(Job::new(reference.clone(), JobState::Done));
        return Ok(Json(json!({ "job_id": id, "result_ref": reference })));
    }

    let s = session.clone();
    let req = request.clone();
    let result = tokio::task::spawn_blocking(move || s.refine(&req))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    if result.subset.len() > state.config.max_points {
        return Err(ApiError::new(
            StatusCode::PAYLOAD_TOO_LARGE,
            format!(
                "refined subset of {} superpixels exceeds the cap of {}",
                result.subset.len(),
                state.config.max_points
            ),
        ));
    }

    let (id, job) = state.add_job(Job::new(reference.clone(), JobState::Queued));
    let parent = state.embeddings[request.level].as_ref().ok().cloned();
    let st = state.clone();
    tokio::spawn(async move {
        let _permit = st.permits.clone().acquire_owned().await.expect("semaphore stays open");
        job.set(JobState::Running);
        let now = st.running.fetch_add(1, Ordering::SeqCst) + 1;
        st.peak_running.fetch_max(now, Ordering::SeqCst);
        let progress_job = job.clone();
        let outcome = tokio::task::spawn_blocking(move || {
            let embedding = session.embed_refinement(
                &result,
                parent.as_deref().map(|v| v.as_slice()),
                seed,
                iterations,
                |it, total| {
                    let f = it as f64 / total.max(1) as f64;
                    progress_job.progress.store(f.to_bits(), Ordering::Relaxed);
                },
            )?;
            Ok::<_, CliError>(Refined {
                request,
                seed,
                result,
                embedding,
            })
        })
        .await;
        st.running.fetch_sub(1, Ordering::SeqCst);
        match outcome {
            Ok(Ok(refined)) => {
                st.cache
                    .lock()
                    .unwrap()
                    .entry(job.reference.clone())
                    .or_insert_with(|| Arc::new(refined));
                job.progress.store(1.0f64.to_bits(), Ordering::Relaxed);
                job.set(JobState::Done);
            }
            Ok(Err(e)) => job.set(JobState::Failed(e.to_string())),
            Err(e) => job.set(JobState::Failed(e.to_string())),
        }
    });
    Ok(Json(json!({ "job_id": id, "result_ref": reference })))
}

async fn job_status(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<u64>,
) -> ApiResult<Json<serde_json::Value>> {
    let job = state
        .jobs
        .lock()
        .unwrap()
        .get(&id)
        .cloned()
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("no job {id}")))?;
    let progress = f64::from_bits(job.progress.load(Ordering::Relaxed));
    let state = job.state.lock().unwrap().clone();
    let (status, error) = match &state {
        JobState::Queued => ("queued", None),
        JobState::Running => ("running", None),
        JobState::Done => ("done", None),
        JobState::Failed(e) => ("failed", Some(e.clone())),
    };
    let result_ref = (state == JobState::Done).then(|| job.reference.clone());
    Ok(Json(json!({
        "job_id": id,
        "status": status,
        "progress": progress,
        "result_ref": result_ref,
        "error": error,
    })))
}

fn refined(state: &AppState, reference: &str) -> ApiResult<Arc<Refined>> {
    state
        .cache
        .lock()
        .unwrap()
        .get(reference)
        .cloned()
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("no completed refinement '{reference}'")))
}

async fn refined_embedding(
    State(state): State<Arc<AppState>>,
    UrlPath(reference): UrlPath<String>,
) -> ApiResult<Response> {
    let r = refined(&state, &reference)?;
    Ok(binary(r.embedding.to_f32_bytes(), "application/octet-stream"))
}

async fn refined_subset(
    State(state): State<Arc<AppState>>,
    UrlPath(reference): UrlPath<String>,
) -> ApiResult<Json<serde_json::Value>> {
    let r = refined(&state, &reference)?;
    Ok(Json(json!({
        "result_ref": reference,
        "selected_level": r.request.level,
        "selected": r.request.selected,
        "gamma": r.request.gamma,
        "seed": r.seed,
        "level": r.result.level,
        "subset": r.result.subset,
        "children": r.result.children,
        "isolated": r.result.isolated,
    })))
}

async fn add_provenance(State(state): State<Arc<AppState>>, mut response: Response) -> Response {
    if let Ok(v) = HeaderValue::from_str(state.provenance()) {
        response.headers_mut().insert(PROVENANCE_HEADER, v);
    }
    response
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/meta", get(meta))
        .route("/api/levels", get(levels))
        .route("/api/level/{level}/labels", get(labels))
        .route("/api/level/{level}/embedding", get(embedding))
        .route("/api/level/{level}/colorized", get(colorized))
        .route("/api/channel/{channel}/means", get(channel_means))
        .route("/api/refine", post(refine))
        .route("/api/job/{id}", get(job_status))
        .route("/api/refined/{reference}/embedding", get(refined_embedding))
        .route("/api/refined/{reference}/subset", get(refined_subset))
        .layer(axum::middleware::map_response_with_state(state.clone(), add_provenance))
        .with_state(state)
}

/// Serves `run` on `addr` until the process ends.
pub async fn serve(run: &Path, addr: std::net::SocketAddr, config: ServerConfig) -> std::io::Result<()> {
    let state = AppState::load(run, config);
    if let Err(reason) = &state.session {
        log::warn!("serving without artifacts: {reason}");
    }
    let listener = tokio::net::TcpListener::bind(addr).await?;
    println!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}

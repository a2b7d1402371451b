//! HTTP JSON API over soundscape projects.
//!
//! Mutations of one project are serialized: a project is either idle or
//! leased to exactly one writer, and a second writer gets `409 project_busy`.
//! Scene analysis and generation run as background jobs polled through
//! `GET /jobs/{id}`. Every mutation accepts an optional `If-Match: <revision>`
//! header and is rejected with `409 stale_revision` when the project moved on.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use axum::body::Body;
use axum::extract::{DefaultBodyLimit, Multipart, Path as UrlPath, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, patch, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use soundscape_core::adapters::AdapterError;
use soundscape_core::ideation::IdeationError;
use soundscape_core::mixer::{ExportKind, MixError};
use soundscape_core::project::{self, MixProject, Pipeline, ProjectDocument, ProjectError};
use soundscape_core::scene_context::SceneError;
use soundscape_core::soundgen::SoundgenError;
use soundscape_core::wav;

pub const DEFAULT_UPLOAD_LIMIT: usize = 1 << 30;
const PROJECT_FILE: &str = "project.json";

/// Error body: `{code, message, detail}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    pub detail: Value,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>, detail: Value) -> Self {
        Self {
            status,
            body: ErrorBody {
                code: code.into(),
                message: message.into(),
                detail,
            },
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "invalid_request", message, Value::Null)
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message, Value::Null)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

fn adapter_error(e: &AdapterError, message: String) -> ApiError {
    let detail = json!({ "adapter": e.kind().as_str() });
    match e {
        AdapterError::Unavailable { .. } => ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "adapter_unavailable", message, detail),
        AdapterError::RateLimited { .. } => ApiError::new(StatusCode::TOO_MANY_REQUESTS, "rate_limited", message, detail),
        _ => ApiError::new(StatusCode::BAD_GATEWAY, "adapter_error", message, detail),
    }
}

impl From<ProjectError> for ApiError {
    fn from(e: ProjectError) -> Self {
        let message = e.to_string();
        match &e {
            ProjectError::NotFound { what, id } => {
                ApiError::new(StatusCode::NOT_FOUND, "not_found", message, json!({ "kind": what, "id": id }))
            }
            ProjectError::Invalid(_) => ApiError::bad_request(message),
            ProjectError::Stale { expected, actual } => ApiError::new(
                StatusCode::CONFLICT,
                "stale_revision",
                message,
                json!({ "expected": expected, "actual": actual }),
            ),
            ProjectError::Schema { .. } => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "schema_error", message, Value::Null),
            ProjectError::Integrity { sha256, .. } => ApiError::new(
                StatusCode::INTERNAL_SERVER_ERROR,
                "integrity_error",
                message,
                json!({ "sha256": sha256 }),
            ),
            ProjectError::Io { .. } | ProjectError::Wav(_) => {
                ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "io_error", message, Value::Null)
            }
            ProjectError::Adapter(a)
            | ProjectError::Scene(SceneError::Adapter { source: a, .. })
            | ProjectError::Ideation(IdeationError::Llm(a))
            | ProjectError::Soundgen(SoundgenError::Generator(a)) => adapter_error(a, message),
            ProjectError::Scene(_) => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_media", message, Value::Null),
            ProjectError::Ideation(IdeationError::EmptyText) => ApiError::bad_request(message),
            ProjectError::Ideation(IdeationError::Parse { raw } | IdeationError::InsufficientSuggestions { raw, .. }) => {
                ApiError::new(StatusCode::BAD_GATEWAY, "llm_output", message, json!({ "completion": raw }))
            }
            ProjectError::Soundgen(_) => ApiError::bad_request(message),
            ProjectError::Mix(MixError::NoTracks) => ApiError::new(StatusCode::CONFLICT, "no_tracks", message, Value::Null),
            ProjectError::Mix(MixError::MuxerMissing { program }) => ApiError::new(
                StatusCode::SERVICE_UNAVAILABLE,
                "muxer_missing",
                message,
                json!({ "program": program }),
            ),
            ProjectError::Mix(_) => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "mix_error", message, Value::Null),
        }
    }
}

type ApiResult<T> = Result<T, ApiError>;

struct Slot {
    project: RwLock<MixProject>,
    busy: AtomicBool,
}

/// Exclusive write access to one project; released on drop.
struct Lease(Arc<Slot>);

impl Drop for Lease {
    fn drop(&mut self) {
        self.0.busy.store(false, Ordering::Release);
    }
}

impl Slot {
    fn lease(self: &Arc<Self>, id: &str) -> ApiResult<Lease> {
        self.busy
            .compare_exchange(false, true, Ordering::AcqRel, Ordering::Acquire)
            .map_err(|_| {
                ApiError::new(
                    StatusCode::CONFLICT,
                    "project_busy",
                    format!("project {id} has a write in progress"),
                    json!({ "project_id": id }),
                )
            })?;
        Ok(Lease(self.clone()))
    }

    fn snapshot(&self) -> MixProject {
        self.project.read().expect("project lock poisoned").clone()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobKind {
    Analyze,
    Generate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Running,
    Succeeded,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub id: String,
    pub kind: JobKind,
    pub project_id: String,
    pub status: JobStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub revision: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorBody>,
}

struct Inner {
    pipeline: Pipeline,
    data_dir: PathBuf,
    projects: RwLock<HashMap<String, Arc<Slot>>>,
    jobs: Mutex<HashMap<String, JobRecord>>,
}

/// Shared service state; cheap to clone.
#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    /// Opens the data directory, reloading any projects saved there.
    pub fn open(pipeline: Pipeline, data_dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let data_dir = data_dir.into();
        let root = data_dir.join("projects");
        std::fs::create_dir_all(&root)?;
        let mut projects = HashMap::new();
        for entry in std::fs::read_dir(&root)? {
            let path = entry?.path().join(PROJECT_FILE);
            if !path.exists() {
                continue;
            }
            match project::load(&path) {
                Ok(p) => {
                    projects.insert(
                        p.id.clone(),
                        Arc::new(Slot {
                            project: RwLock::new(p),
                            busy: AtomicBool::new(false),
                        }),
                    );
                }
                Err(e) => log::warn!("skipping {}: {e}", path.display()),
            }
        }
        Ok(Self(Arc::new(Inner {
            pipeline,
            data_dir,
            projects: RwLock::new(projects),
            jobs: Mutex::new(HashMap::new()),
        })))
    }

    fn project_dir(&self, id: &str) -> PathBuf {
        self.0.data_dir.join("projects").join(id)
    }

    fn slot(&self, id: &str) -> ApiResult<Arc<Slot>> {
        self.0
            .projects
            .read()
            .expect("project map poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| {
                ProjectError::NotFound {
                    what: "project",
                    id: id.to_string(),
                }
                .into()
            })
    }

    /// Project owning a suggestion or track id (`<project>-<s|t><n>`).
    fn owner_of(&self, item_id: &str, what: &'static str) -> ApiResult<String> {
        let not_found = || -> ApiError {
            ProjectError::NotFound {
                what,
                id: item_id.to_string(),
            }
            .into()
        };
        let (pid, _) = item_id.rsplit_once('-').ok_or_else(not_found)?;
        self.slot(pid).map_err(|_| not_found())?;
        Ok(pid.to_string())
    }

    fn persist(&self, project: &MixProject) -> Result<(), ProjectError> {
        let dir = self.project_dir(&project.id);
        std::fs::create_dir_all(&dir).map_err(|source| ProjectError::Io {
            path: dir.clone(),
            source,
        })?;
        project::save(project, &dir.join(PROJECT_FILE))
    }

    pub fn job(&self, id: &str) -> Option<JobRecord> {
        self.0.jobs.lock().expect("job map poisoned").get(id).cloned()
    }

    fn set_job(&self, record: JobRecord) {
        self.0.jobs.lock().expect("job map poisoned").insert(record.id.clone(), record);
    }
}

fn if_match(headers: &HeaderMap) -> ApiResult<Option<u64>> {
    let Some(value) = headers.get(header::IF_MATCH) else {
        return Ok(None);
    };
    let text = value.to_str().unwrap_or("").trim().trim_start_matches("W/").trim_matches('"');
    text.parse()
        .map(Some)
        .map_err(|_| ApiError::bad_request(format!("If-Match must be a revision number, got {text:?}")))
}

/// Applies `op` to a copy of the project and commits it only if the op,
/// validation and persistence all succeed.
fn commit<T>(
    state: &AppState,
    lease: &Lease,
    expected: Option<u64>,
    op: impl FnOnce(&Pipeline, &mut MixProject) -> Result<T, ProjectError>,
) -> Result<(T, MixProject), ProjectError> {
    let mut draft = lease.0.snapshot();
    draft.check_revision(expected)?;
    let out = op(&state.0.pipeline, &mut draft)?;
    draft.validate()?;
    state.persist(&draft)?;
    *lease.0.project.write().expect("project lock poisoned") = draft.clone();
    Ok((out, draft))
}

async fn mutate<T: Send + 'static>(
    state: &AppState,
    project_id: &str,
    expected: Option<u64>,
    op: impl FnOnce(&Pipeline, &mut MixProject) -> Result<T, ProjectError> + Send + 'static,
) -> ApiResult<(T, ProjectDocument)> {
    let lease = state.slot(project_id)?.lease(project_id)?;
    let state = state.clone();
    tokio::task::spawn_blocking(move || {
        commit(&state, &lease, expected, op)
            .map(|(out, p)| (out, p.document()))
            .map_err(ApiError::from)
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))?
}

fn start_job(
    state: &AppState,
    project_id: &str,
    kind: JobKind,
    expected: Option<u64>,
    op: impl FnOnce(&Pipeline, &mut MixProject) -> Result<Value, ProjectError> + Send + 'static,
) -> ApiResult<JobRecord> {
    let slot = state.slot(project_id)?;
    slot.snapshot().check_revision(expected)?;
    let lease = slot.lease(project_id)?;
    let record = JobRecord {
        id: uuid::Uuid::new_v4().simple().to_string(),
        kind,
        project_id: project_id.to_string(),
        status: JobStatus::Running,
        revision: None,
        result: None,
        error: None,
    };
    state.set_job(record.clone());
    let state = state.clone();
    let mut done = record.clone();
    tokio::task::spawn_blocking(move || {
        match commit(&state, &lease, expected, op) {
            Ok((result, p)) => {
                done.status = JobStatus::Succeeded;
                done.revision = Some(p.revision);
                done.result = Some(result);
            }
            Err(e) => {
                log::warn!("{kind:?} job {} failed: {e}", done.id);
                done.status = JobStatus::Failed;
                done.error = Some(ApiError::from(e).body);
            }
        }
        state.set_job(done);
        drop(lease);
    });
    Ok(record)
}

fn accepted(job: JobRecord) -> Response {
    let url = format!("/jobs/{}", job.id);
    (StatusCode::ACCEPTED, [(header::LOCATION, url)], Json(job)).into_response()
}

fn safe_file_name(name: &str) -> Option<String> {
    let base = Path::new(name).file_name()?.to_str()?.trim();
    (!base.is_empty() && !base.starts_with('.')).then(|| base.to_string())
}

async fn create_project(State(state): State<AppState>, mut multipart: Multipart) -> ApiResult<Response> {
    let mut upload = None;
    while let Some(field) = multipart
        .next_field()
        .await
        .map_err(|e| ApiError::bad_request(format!("bad multipart body: {e}")))?
    {
        if field.name() != Some("media") {
            continue;
        }
        let name = field
            .file_name()
            .and_then(safe_file_name)
            .ok_or_else(|| ApiError::bad_request("media part needs a file name"))?;
        let bytes = field
            .bytes()
            .await
            .map_err(|e| ApiError::bad_request(format!("cannot read upload: {e}")))?;
        upload = Some((name, bytes));
    }
    let (name, bytes) = upload.ok_or_else(|| ApiError::bad_request("missing multipart field \"media\""))?;
    if bytes.is_empty() {
        return Err(ApiError::bad_request("uploaded media is empty"));
    }

    let id = uuid::Uuid::new_v4().simple().to_string();
    let dir = state.project_dir(&id);
    let st = state.clone();
    let created = tokio::task::spawn_blocking(move || -> Result<MixProject, ProjectError> {
        let media_dir = dir.join("media");
        std::fs::create_dir_all(&media_dir).map_err(|source| ProjectError::Io {
            path: media_dir.clone(),
            source,
        })?;
        let media = media_dir.join(&name);
        std::fs::write(&media, &bytes).map_err(|source| ProjectError::Io {
            path: media.clone(),
            source,
        })?;
        let result = st
            .0
            .pipeline
            .create_project(&media, id)
            .and_then(|p| st.persist(&p).map(|_| p));
        if result.is_err() {
            let _ = std::fs::remove_dir_all(&dir);
        }
        result
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))??;

    let doc = created.document();
    state.0.projects.write().expect("project map poisoned").insert(
        created.id.clone(),
        Arc::new(Slot {
            project: RwLock::new(created),
            busy: AtomicBool::new(false),
        }),
    );
    Ok((StatusCode::CREATED, Json(doc)).into_response())
}

async fn get_project(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<ProjectDocument>> {
    Ok(Json(state.slot(&id)?.snapshot().document()))
}

async fn analyze(State(state): State<AppState>, UrlPath(id): UrlPath<String>, headers: HeaderMap) -> ApiResult<Response> {
    let job = start_job(&state, &id, JobKind::Analyze, if_match(&headers)?, |pipeline, p| {
        pipeline.analyze(p)?;
        Ok(json!({ "suggestions": p.suggestions.len(), "scene_prompt": p.scene_prompt }))
    })?;
    Ok(accepted(job))
}

async fn generate(State(state): State<AppState>, UrlPath(id): UrlPath<String>, headers: HeaderMap) -> ApiResult<Response> {
    let job = start_job(&state, &id, JobKind::Generate, if_match(&headers)?, |pipeline, p| {
        let report = pipeline.generate_selected(p)?;
        Ok(serde_json::to_value(report).expect("report serializes"))
    })?;
    Ok(accepted(job))
}

async fn get_job(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<JobRecord>> {
    state.job(&id).map(Json).ok_or_else(|| {
        ProjectError::NotFound {
            what: "job",
            id,
        }
        .into()
    })
}

#[derive(Debug, Deserialize)]
struct CustomBody {
    text: String,
}

async fn add_suggestion(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    headers: HeaderMap,
    Json(body): Json<CustomBody>,
) -> ApiResult<Response> {
    if body.text.trim().is_empty() {
        return Err(ApiError::bad_request("suggestion text is empty"));
    }
    let (sid, project) = mutate(&state, &id, if_match(&headers)?, move |pipeline, p| {
        pipeline.add_custom(p, &body.text)
    })
    .await?;
    Ok((StatusCode::CREATED, Json(json!({ "suggestion_id": sid, "project": project }))).into_response())
}

async fn similar(State(state): State<AppState>, UrlPath(sid): UrlPath<String>, headers: HeaderMap) -> ApiResult<Response> {
    let pid = state.owner_of(&sid, "suggestion")?;
    let (ids, project) = mutate(&state, &pid, if_match(&headers)?, move |pipeline, p| {
        pipeline.expand_similar(p, &sid)
    })
    .await?;
    Ok((StatusCode::CREATED, Json(json!({ "suggestion_ids": ids, "project": project }))).into_response())
}

#[derive(Debug, Deserialize)]
struct SelectBody {
    #[serde(default = "yes")]
    selected: bool,
}

fn yes() -> bool {
    true
}

async fn select(
    State(state): State<AppState>,
    UrlPath(sid): UrlPath<String>,
    headers: HeaderMap,
    body: Option<Json<SelectBody>>,
) -> ApiResult<Json<ProjectDocument>> {
    let selected = body.map_or(true, |Json(b)| b.selected);
    let pid = state.owner_of(&sid, "suggestion")?;
    let ((), project) = mutate(&state, &pid, if_match(&headers)?, move |_, p| p.set_selected(&sid, selected)).await?;
    Ok(Json(project))
}

#[derive(Debug, Deserialize)]
struct TrackPatch {
    gain_offset_db: f64,
}

async fn patch_track(
    State(state): State<AppState>,
    UrlPath(tid): UrlPath<String>,
    headers: HeaderMap,
    Json(body): Json<TrackPatch>,
) -> ApiResult<Json<ProjectDocument>> {
    let pid = state.owner_of(&tid, "track")?;
    let ((), project) = mutate(&state, &pid, if_match(&headers)?, move |_, p| {
        p.set_track_gain(&tid, body.gain_offset_db)
    })
    .await?;
    Ok(Json(project))
}

async fn mixdown(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    let snapshot = state.slot(&id)?.snapshot();
    let st = state.clone();
    let (bytes, factor, revision) = tokio::task::spawn_blocking(move || -> Result<_, ProjectError> {
        let mix = st.0.pipeline.mixdown(&snapshot)?;
        Ok((wav::stereo_16_bytes(&mix.buffer)?, mix.normalization_factor, snapshot.revision))
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))??;
    Ok((
        [
            (header::CONTENT_TYPE, "audio/wav".to_string()),
            (header::HeaderName::from_static("x-normalization-factor"), factor.to_string()),
            (header::ETAG, format!("\"{revision}\"")),
        ],
        Body::from(bytes),
    )
        .into_response())
}

#[derive(Debug, Deserialize)]
struct ExportQuery {
    which: String,
}

#[derive(Debug, Serialize)]
struct ExportedFile {
    name: String,
    url: String,
}

fn which_dir(which: ExportKind) -> &'static str {
    match which {
        ExportKind::Final => "final",
        ExportKind::Combined => "combined",
        ExportKind::Individual => "individual",
    }
}

async fn export(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<ExportQuery>,
) -> ApiResult<Json<Value>> {
    let which: ExportKind = q.which.parse().map_err(ApiError::bad_request)?;
    let snapshot = state.slot(&id)?.snapshot();
    let out_dir = state.project_dir(&id).join("exports").join(which_dir(which));
    let st = state.clone();
    let files = tokio::task::spawn_blocking(move || -> Result<_, ProjectError> {
        let _ = std::fs::remove_dir_all(&out_dir);
        st.0.pipeline.export(&snapshot, which, &out_dir)
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))??;
    let files: Vec<ExportedFile> = files
        .iter()
        .filter_map(|p| p.file_name().and_then(|n| n.to_str()))
        .map(|name| ExportedFile {
            name: name.to_string(),
            url: format!("/projects/{id}/exports/{}/{name}", which_dir(which)),
        })
        .collect();
    Ok(Json(json!({ "which": which, "files": files })))
}

async fn download(
    State(state): State<AppState>,
    UrlPath((id, which, name)): UrlPath<(String, String, String)>,
) -> ApiResult<Response> {
    state.slot(&id)?;
    let which: ExportKind = which.parse().map_err(ApiError::bad_request)?;
    let name = safe_file_name(&name)
        .filter(|n| *n == name)
        .ok_or_else(|| ApiError::bad_request("bad file name"))?;
    let path = state.project_dir(&id).join("exports").join(which_dir(which)).join(&name);
    let bytes = tokio::fs::read(&path).await.map_err(|_| -> ApiError {
        ProjectError::NotFound {
            what: "export file",
            id: name.clone(),
        }
        .into()
    })?;
    let mime = if name.ends_with(".wav") { "audio/wav" } else { "application/octet-stream" };
    Ok(([(header::CONTENT_TYPE, mime)], Body::from(bytes)).into_response())
}

pub fn router(state: AppState, upload_limit: usize) -> Router {
    Router::new()
        .route("/projects", post(create_project))
        .route("/projects/{id}", get(get_project))
        .route("/projects/{id}/analyze", post(analyze))
        .route("/projects/{id}/suggestions", post(add_suggestion))
        .route("/projects/{id}/generate", post(generate))
        .route("/projects/{id}/mixdown", get(mixdown))
        .route("/projects/{id}/export", post(export))
        .route("/projects/{id}/exports/{which}/{name}", get(download))
        .route("/suggestions/{id}/similar", post(similar))
        .route("/suggestions/{id}/select", post(select))
        .route("/tracks/{id}", patch(patch_track))
        .route("/jobs/{id}", get(get_job))
        .layer(DefaultBodyLimit::max(upload_limit))
        .with_state(state)
}

pub async fn serve(listener: tokio::net::TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state, DEFAULT_UPLOAD_LIMIT)).await
}

//! JSON-over-HTTP service backing the web UI.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Multipart, Path as UrlPath, State};
use axum::http::{header, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::editor::ensure_atlases;
use crate::editor::load_fields;
use crate::error::{Error, Result};
use crate::router::{
    run_turn, ArtifactKind, ArtifactRef, ChatSession, Planner, RemotePlanner, SceneExecutor, SceneRegistry,
    ScriptedPlanner, ToolCall,
};
use crate::scene::layout::{is_edit_id, random_token};
use crate::scene::{load_scene, SceneDir};
use crate::train::{LossReport, TrainConfig};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlannerKind {
    #[default]
    Scripted,
    Remote,
}

/// `serve --config` file (TOML, same key-value style as the manifest).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub bind: String,
    /// Holds `registry.toml` and uploaded scenes under `scenes/`.
    pub store: PathBuf,
    pub planner: PlannerKind,
    /// Scripted planner rules; the built-in table when absent.
    pub rules: Option<PathBuf>,
    /// Directory of the UI bundle, served for non-API paths.
    pub static_dir: Option<PathBuf>,
    pub seed: u64,
    /// Training schedule; the scaled default when absent.
    pub train_config: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8080".into(),
            store: PathBuf::from("store"),
            planner: PlannerKind::Scripted,
            rules: None,
            static_dir: None,
            seed: 0,
            train_config: None,
        }
    }
}

impl ServiceConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn address(&self) -> Result<SocketAddr> {
        self.bind
            .parse()
            .map_err(|_| Error::Config(format!("bind address `{}` is not host:port", self.bind)))
    }

    /// Checks the address and that the store is writable.
    pub fn validate(&self) -> Result<()> {
        self.address()?;
        std::fs::create_dir_all(&self.store).map_err(|e| Error::io(&self.store, e))?;
        let probe = self.store.join(".write-probe");
        std::fs::write(&probe, b"").map_err(|e| Error::io(&probe, e))?;
        let _ = std::fs::remove_file(probe);
        Ok(())
    }
}

type PlannerFactory = Box<dyn Fn() -> Result<Box<dyn Planner>> + Send + Sync>;

#[derive(Clone, Debug, Default, Serialize)]
pub struct TrainStatus {
    /// `running`, `done` or `failed`.
    pub state: String,
    pub step: usize,
    pub total: usize,
    pub losses: Option<LossReport>,
    pub error: Option<String>,
}

pub struct AppState {
    config: ServiceConfig,
    train_config: TrainConfig,
    registry: Arc<SceneRegistry>,
    executor: Arc<SceneExecutor>,
    planner: PlannerFactory,
    sessions: Mutex<HashMap<String, Arc<Mutex<ChatSession>>>>,
    training: Mutex<HashMap<PathBuf, Arc<Mutex<TrainStatus>>>>,
    rng: Mutex<ChaCha8Rng>,
}

impl AppState {
    pub fn new(config: ServiceConfig) -> Result<Arc<Self>> {
        config.validate()?;
        let planner: PlannerFactory = match config.planner {
            PlannerKind::Scripted => {
                let p = match &config.rules {
                    Some(r) => ScriptedPlanner::load(r)?,
                    None => ScriptedPlanner::builtin(),
                };
                Box::new(move || Ok(Box::new(p.clone()) as Box<dyn Planner>))
            }
            PlannerKind::Remote => {
                RemotePlanner::from_env()?;
                Box::new(|| Ok(Box::new(RemotePlanner::from_env()?) as Box<dyn Planner>))
            }
        };
        let train_config = match &config.train_config {
            Some(p) => TrainConfig::load(p)?,
            None => TrainConfig::scaled(),
        };
        let registry = Arc::new(SceneRegistry::open(&config.store, config.seed)?);
        Ok(Arc::new(Self {
            executor: Arc::new(SceneExecutor::new(registry.clone(), config.seed)),
            rng: Mutex::new(ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed)),
            registry,
            planner,
            train_config,
            config,
            sessions: Mutex::default(),
            training: Mutex::default(),
        }))
    }

    pub fn registry(&self) -> &Arc<SceneRegistry> {
        &self.registry
    }

    fn token(&self, len: usize) -> String {
        random_token(&mut *self.rng.lock().unwrap(), len)
    }
}

/// Structured error body `{code, message}`.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }

    fn not_found(what: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", what)
    }

    fn bad_request(msg: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", msg)
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let (status, code) = match &e {
            Error::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            Error::Busy(_) => (StatusCode::CONFLICT, "busy"),
            Error::Precondition(_) => (StatusCode::CONFLICT, "precondition_failed"),
            Error::Config(_) | Error::Parse(_) | Error::Domain(_) | Error::Dimension(_) | Error::Index { .. } => {
                (StatusCode::BAD_REQUEST, "bad_request")
            }
            Error::Decode { .. } => (StatusCode::BAD_REQUEST, "decode_error"),
            Error::Tool { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "tool_failed"),
            Error::Transport(_) => (StatusCode::BAD_GATEWAY, "planner_unavailable"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        Self::new(status, code, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({"code": self.code, "message": self.message}))).into_response()
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
        .map_err(ApiError::from)
}

pub fn app(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/scenes", get(list_scenes).post(create_scene))
        .route("/api/scenes/:h/train", post(start_training))
        .route("/api/scenes/:h/train/status", get(training_status))
        .route("/api/scenes/:h/views/:file", get(view_png))
        .route("/api/scenes/:h/atlas/:file", get(atlas_png))
        .route("/api/scenes/:h/edits/:id/views/:file", get(edit_view_png))
        .route("/api/scenes/:h/edits/:id/atlas/:file", get(edit_atlas_png))
        .route("/api/scenes/:h/artifacts/:file", get(artifact_png))
        .route("/api/chat", post(chat))
        .route("/api/chat/:id", get(get_session))
        .fallback(static_file)
        .with_state(state)
}

/// Binds and serves until interrupted.
pub async fn serve(config: ServiceConfig) -> Result<()> {
    let addr = config.address()?;
    let state = AppState::new(config)?;
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| Error::Config(format!("cannot bind {addr}: {e}")))?;
    log::info!("listening on {}", listener.local_addr().map(|a| a.to_string()).unwrap_or_default());
    axum::serve(listener, app(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| Error::io("<socket>", e))
}

fn open_scene(state: &AppState, handle: &str) -> ApiResult<(SceneDir, Option<String>)> {
    let b = state.registry.resolve(handle)?;
    Ok((SceneDir::open(&b.scene)?, b.edit))
}

fn png(bytes: Vec<u8>, immutable: bool) -> Response {
    let cache = if immutable {
        "public, max-age=31536000, immutable"
    } else {
        "no-cache"
    };
    ([(header::CONTENT_TYPE, "image/png"), (header::CACHE_CONTROL, cache)], bytes).into_response()
}

fn read_png(path: &Path, immutable: bool) -> ApiResult<Response> {
    match std::fs::read(path) {
        Ok(b) => Ok(png(b, immutable)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(ApiError::not_found("image does not exist")),
        Err(e) => Err(Error::io(path, e).into()),
    }
}

fn view_index(file: &str) -> ApiResult<usize> {
    file.strip_suffix(".png")
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| ApiError::not_found(format!("no view `{file}`")))
}

fn atlas_name(file: &str) -> ApiResult<&'static str> {
    match file {
        "fg.png" => Ok("fg.png"),
        "bg.png" => Ok("bg.png"),
        _ => Err(ApiError::not_found(format!("no atlas `{file}`"))),
    }
}

#[derive(Serialize)]
struct SceneSummary {
    handle: String,
    views: usize,
    height: usize,
    width: usize,
    edits: usize,
}

async fn list_scenes(State(state): State<Arc<AppState>>) -> ApiResult<Json<Vec<SceneSummary>>> {
    let mut out = Vec::new();
    for (handle, b) in state.registry.entries() {
        if b.edit.is_some() {
            continue;
        }
        match SceneDir::open(&b.scene) {
            Ok(s) => out.push(SceneSummary {
                handle,
                views: s.manifest().views,
                height: s.manifest().height,
                width: s.manifest().width,
                edits: s.list_edits().map(|e| e.len()).unwrap_or(0),
            }),
            Err(e) => log::warn!("scene {handle} is unreadable: {e}"),
        }
    }
    Ok(Json(out))
}

async fn create_scene(State(state): State<Arc<AppState>>, mut form: Multipart) -> ApiResult<(StatusCode, Json<serde_json::Value>)> {
    let mut files: Vec<(String, Bytes)> = Vec::new();
    while let Some(field) = form.next_field().await.map_err(|e| ApiError::bad_request(e.to_string()))? {
        let name = field.file_name().unwrap_or_default().to_string();
        let data = field.bytes().await.map_err(|e| ApiError::bad_request(e.to_string()))?;
        files.push((name, data));
    }
    if files.is_empty() {
        return Err(ApiError::bad_request("no images uploaded"));
    }
    files.sort_by(|a, b| a.0.cmp(&b.0));
    let st = state.clone();
    let handle = blocking(move || {
        let token = st.token(8);
        let upload = st.config.store.join(format!(".upload-{token}"));
        let dest = st.config.store.join("scenes").join(&token);
        let result = (|| {
            std::fs::create_dir_all(&upload).map_err(|e| Error::io(&upload, e))?;
            for (i, (_, data)) in files.iter().enumerate() {
                let p = upload.join(format!("{i:04}.png"));
                std::fs::write(&p, data).map_err(|e| Error::io(&p, e))?;
            }
            let views = load_scene(&upload)?;
            SceneDir::create(&dest, &views, "uploaded")?;
            st.registry.register(&dest)
        })();
        let _ = std::fs::remove_dir_all(&upload);
        result
    })
    .await?;
    Ok((StatusCode::CREATED, Json(json!({ "handle": handle }))))
}

#[derive(Deserialize, Default)]
struct TrainRequest {
    steps: Option<usize>,
    seed: Option<u64>,
}

async fn start_training(
    State(state): State<Arc<AppState>>,
    UrlPath(h): UrlPath<String>,
    body: Option<Json<TrainRequest>>,
) -> ApiResult<(StatusCode, Json<TrainStatus>)> {
    let req = body.map(|b| b.0).unwrap_or_default();
    let (scene, _) = open_scene(&state, &h)?;
    let lock = state.registry.try_lock(&h)?;
    let mut config = state.train_config.clone();
    if let Some(s) = req.steps {
        config.total_steps = s;
    }
    if let Some(s) = req.seed {
        config.seed = s;
    }
    config.validate()?;
    let status = Arc::new(Mutex::new(TrainStatus {
        state: "running".into(),
        total: config.total_steps,
        ..TrainStatus::default()
    }));
    state
        .training
        .lock()
        .unwrap()
        .insert(scene.root().to_path_buf(), status.clone());
    let snapshot = status.lock().unwrap().clone();
    std::thread::spawn(move || {
        let _lock = lock;
        let st = status.clone();
        let r = crate::service::workflow::train_scene(&scene, &config, |rep| {
            let mut s = st.lock().unwrap();
            s.step = rep.step + 1;
            s.losses = Some(rep.clone());
        });
        let mut s = status.lock().unwrap();
        match r {
            Ok(_) => s.state = "done".into(),
            Err(e) => {
                s.state = "failed".into();
                s.error = Some(e.to_string());
            }
        }
    });
    Ok((StatusCode::ACCEPTED, Json(snapshot)))
}

async fn training_status(State(state): State<Arc<AppState>>, UrlPath(h): UrlPath<String>) -> ApiResult<Json<TrainStatus>> {
    let (scene, _) = open_scene(&state, &h)?;
    if let Some(s) = state.training.lock().unwrap().get(scene.root()) {
        return Ok(Json(s.lock().unwrap().clone()));
    }
    let state = if scene.checkpoint_path().exists() { "done" } else { "untrained" };
    Ok(Json(TrainStatus {
        state: state.into(),
        ..TrainStatus::default()
    }))
}

async fn view_png(State(state): State<Arc<AppState>>, UrlPath((h, file)): UrlPath<(String, String)>) -> ApiResult<Response> {
    let t = view_index(&file)?;
    let (scene, edit) = open_scene(&state, &h)?;
    match edit {
        Some(id) => read_png(&scene.edit_dir(&id).join("views").join(format!("{t:04}.png")), true),
        None => read_png(&scene.view_path(t), false),
    }
}

async fn atlas_png(State(state): State<Arc<AppState>>, UrlPath((h, file)): UrlPath<(String, String)>) -> ApiResult<Response> {
    let name = atlas_name(&file)?;
    let (scene, edit) = open_scene(&state, &h)?;
    if let Some(id) = edit {
        return read_png(&scene.edit_dir(&id).join(name), true);
    }
    if !scene.has_atlases() {
        let st = state.clone();
        let s2 = scene.clone();
        blocking(move || {
            let _lock = st.registry.try_lock(&h)?;
            ensure_atlases(&s2, &load_fields(&s2)?).map(|_| ())
        })
        .await?;
    }
    read_png(&scene.atlas_dir().join(name), false)
}

fn checked_edit(id: &str) -> ApiResult<()> {
    if is_edit_id(id) {
        Ok(())
    } else {
        Err(ApiError::not_found(format!("no edit `{id}`")))
    }
}

async fn edit_view_png(
    State(state): State<Arc<AppState>>,
    UrlPath((h, id, file)): UrlPath<(String, String, String)>,
) -> ApiResult<Response> {
    checked_edit(&id)?;
    let t = view_index(&file)?;
    let (scene, _) = open_scene(&state, &h)?;
    read_png(&scene.edit_dir(&id).join("views").join(format!("{t:04}.png")), true)
}

async fn edit_atlas_png(
    State(state): State<Arc<AppState>>,
    UrlPath((h, id, file)): UrlPath<(String, String, String)>,
) -> ApiResult<Response> {
    checked_edit(&id)?;
    let name = atlas_name(&file)?;
    let (scene, _) = open_scene(&state, &h)?;
    read_png(&scene.edit_dir(&id).join(name), true)
}

async fn artifact_png(State(state): State<Arc<AppState>>, UrlPath((h, file)): UrlPath<(String, String)>) -> ApiResult<Response> {
    let id = file.strip_suffix(".png").unwrap_or("");
    checked_edit(id)?;
    let (scene, _) = open_scene(&state, &h)?;
    read_png(&scene.artifacts_dir().join(&file), true)
}

#[derive(Deserialize)]
pub struct ChatRequest {
    pub session_id: Option<String>,
    pub scene: Option<String>,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactUrl {
    pub kind: String,
    pub url: String,
}

#[derive(Serialize)]
struct ChatResponse {
    session_id: String,
    reply: String,
    scene: Option<String>,
    calls: Vec<ToolCall>,
    artifacts: Vec<ArtifactUrl>,
}

/// URLs under which an artifact's images are served.
pub fn artifact_urls(a: &ArtifactRef) -> Vec<ArtifactUrl> {
    let url = |kind: &str, url: String| ArtifactUrl {
        kind: kind.into(),
        url,
    };
    match a.kind {
        ArtifactKind::Image => vec![url("image", format!("/api/scenes/{}/artifacts/{}.png", a.scene, a.id))],
        ArtifactKind::Edit => {
            let base = format!("/api/scenes/{}/edits/{}", a.scene, a.id);
            let mut v: Vec<ArtifactUrl> = (0..a.views)
                .map(|t| url("view", format!("{base}/views/{t}.png")))
                .collect();
            v.push(url("atlas", format!("{base}/atlas/fg.png")));
            v.push(url("atlas", format!("{base}/atlas/bg.png")));
            v
        }
    }
}

async fn chat(State(state): State<Arc<AppState>>, Json(req): Json<ChatRequest>) -> ApiResult<Json<ChatResponse>> {
    if let Some(s) = &req.scene {
        if !state.registry.contains(s) {
            return Err(ApiError::not_found(format!("scene {s}")));
        }
    }
    let session = {
        let mut sessions = state.sessions.lock().unwrap();
        match &req.session_id {
            Some(id) => sessions
                .get(id)
                .cloned()
                .ok_or_else(|| ApiError::not_found(format!("session {id}")))?,
            None => {
                let id = state.token(12);
                let s = Arc::new(Mutex::new(ChatSession::new(id.clone(), None)));
                sessions.insert(id, s.clone());
                s
            }
        }
    };
    let st = state.clone();
    let resp = blocking(move || {
        let mut s = session
            .try_lock()
            .map_err(|_| Error::Busy("a turn is already running in this session".into()))?;
        if req.scene.is_some() {
            s.scene = req.scene.clone();
        }
        let mut planner = (st.planner)()?;
        let reply = run_turn(&mut s, &req.message, planner.as_mut(), st.executor.as_ref());
        Ok(ChatResponse {
            session_id: s.id.clone(),
            reply: reply.text,
            scene: s.scene.clone(),
            calls: reply.calls,
            artifacts: reply.artifacts.iter().flat_map(artifact_urls).collect(),
        })
    })
    .await?;
    Ok(Json(resp))
}

async fn get_session(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<ChatSession>> {
    let s = state
        .sessions
        .lock()
        .unwrap()
        .get(&id)
        .cloned()
        .ok_or_else(|| ApiError::not_found(format!("session {id}")))?;
    let s = s
        .try_lock()
        .map_err(|_| ApiError::from(Error::Busy("a turn is running in this session".into())))?;
    Ok(Json(s.clone()))
}

async fn static_file(State(state): State<Arc<AppState>>, uri: Uri) -> ApiResult<Response> {
    let Some(root) = &state.config.static_dir else {
        return Err(ApiError::not_found(format!("no route {}", uri.path())));
    };
    let rel = uri.path().trim_start_matches('/');
    let rel = if rel.is_empty() { "index.html" } else { rel };
    if rel.split('/').any(|c| c == ".." || c.starts_with('.')) {
        return Err(ApiError::not_found(uri.path().to_string()));
    }
    let path = root.join(rel);
    let bytes = std::fs::read(&path).map_err(|_| ApiError::not_found(uri.path().to_string()))?;
    let mime = match path.extension().and_then(|e| e.to_str()) {
        Some("html") => "text/html; charset=utf-8",
        Some("js") => "text/javascript",
        Some("css") => "text/css",
        Some("png") => "image/png",
        Some("svg") => "image/svg+xml",
        Some("json") => "application/json",
        _ => "application/octet-stream",
    };
    Ok(([(header::CONTENT_TYPE, mime)], bytes).into_response())
}

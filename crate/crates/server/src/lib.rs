//! Annotation service.
//!
//! Serves the annotation queue, accepts harm tags, and computes live safety
//! reports and threshold sweeps for one or more prediction runs. Annotations
//! live in an append-only JSON-lines log. All writes go through a single
//! writer thread; readers see the store behind a read lock.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use axum::extract::{Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use tokio::sync::{mpsc, oneshot};
use tower_http::services::ServeDir;

use lexsimp_core::annotations::{self, Annotation, AnnotationStore, QueueStatus, Run, RunError};
use lexsimp_core::io::{self, IoError};
use lexsimp_core::safety::{rates_at, HarmTag};
use lexsimp_core::service::{AnnotationRequest, ApiError, Health, QueueResponse, RunSummary};

/// Compact the log once it holds this many superseded lines.
pub const DEFAULT_COMPACT_AFTER: u64 = 256;

#[derive(Debug, Clone)]
pub struct RunSpec {
    pub name: String,
    pub predictions: PathBuf,
    pub dataset: PathBuf,
}

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub annotations: PathBuf,
    pub runs: Vec<RunSpec>,
    pub budgets: Vec<f64>,
    pub compact_after: u64,
    pub ui_dir: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum ServerError {
    #[error("run {name:?}: {source}")]
    Run { name: String, source: RunError },
    #[error("duplicate run name {0:?}")]
    DuplicateRun(String),
    #[error("no runs configured")]
    NoRuns,
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: SocketAddr, source: std::io::Error },
    #[error("server failed: {0}")]
    Serve(std::io::Error),
}

struct WriteJob {
    annotation: Annotation,
    reply: oneshot::Sender<Result<(), IoError>>,
}

pub struct AppState {
    runs: Vec<(String, Run)>,
    /// Item id to language, over every item that needs a human verdict.
    items: HashMap<String, String>,
    store: Arc<RwLock<AnnotationStore>>,
    writer: mpsc::Sender<WriteJob>,
    budgets: Vec<f64>,
}

impl AppState {
    /// Load runs and replay the annotation log, then start the writer.
    pub fn load(config: &ServerConfig) -> Result<Arc<Self>, ServerError> {
        if config.runs.is_empty() {
            return Err(ServerError::NoRuns);
        }
        let mut runs: Vec<(String, Run)> = Vec::new();
        for spec in &config.runs {
            if runs.iter().any(|(n, _)| *n == spec.name) {
                return Err(ServerError::DuplicateRun(spec.name.clone()));
            }
            let run = Run::load(&spec.predictions, &spec.dataset).map_err(|source| ServerError::Run {
                name: spec.name.clone(),
                source,
            })?;
            runs.push((spec.name.clone(), run));
        }
        let store = AnnotationStore::load(&config.annotations)?;
        let mut items = HashMap::new();
        for (_, run) in &runs {
            for q in run.queue(&store, None) {
                items.insert(q.item_id, q.language);
            }
        }
        let store = Arc::new(RwLock::new(store));
        let writer = spawn_writer(config.annotations.clone(), store.clone(), config.compact_after);
        Ok(Arc::new(Self {
            runs,
            items,
            store,
            writer,
            budgets: config.budgets.clone(),
        }))
    }

    fn run(&self, name: Option<&str>) -> Result<&Run, ApiFailure> {
        match name {
            Some(name) => self
                .runs
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, r)| r)
                .ok_or_else(|| ApiFailure::not_found(format!("unknown run {name:?}"))),
            None if self.runs.len() == 1 => Ok(&self.runs[0].1),
            None => Err(ApiFailure::bad_request("several runs are loaded; pass run=")),
        }
    }

    fn store(&self) -> std::sync::RwLockReadGuard<'_, AnnotationStore> {
        self.store.read().unwrap_or_else(|e| e.into_inner())
    }

    /// Serialized report, byte-identical to the CLI's report file.
    pub fn report_bytes(&self, run: Option<&str>, annotator: Option<&str>) -> Result<Vec<u8>, ApiFailure> {
        let run = self.run(run)?;
        let report = run.report(&self.store(), annotator, &self.budgets);
        io::to_pretty_json(&report).map_err(|e| ApiFailure::internal(e.to_string()))
    }
}

fn spawn_writer(path: PathBuf, store: Arc<RwLock<AnnotationStore>>, compact_after: u64) -> mpsc::Sender<WriteJob> {
    let (tx, mut rx) = mpsc::channel::<WriteJob>(64);
    std::thread::spawn(move || {
        while let Some(job) = rx.blocking_recv() {
            let result = write_one(&path, &store, job.annotation, compact_after);
            let _ = job.reply.send(result);
        }
    });
    tx
}

fn write_one(path: &Path, store: &RwLock<AnnotationStore>, a: Annotation, compact_after: u64) -> Result<(), IoError> {
    annotations::append(path, &a)?;
    let mut store = store.write().unwrap_or_else(|e| e.into_inner());
    store.insert(a);
    if store.log_lines() - store.len() as u64 >= compact_after {
        log::info!(
            "compacting {} ({} live of {} lines)",
            path.display(),
            store.len(),
            store.log_lines()
        );
        store.compact_to(path)?;
    }
    Ok(())
}

#[derive(Debug)]
pub struct ApiFailure {
    status: StatusCode,
    body: ApiError,
}

impl ApiFailure {
    fn new(status: StatusCode, error: impl Into<String>) -> Self {
        Self {
            status,
            body: ApiError {
                error: error.into(),
                allowed_tags: Vec::new(),
            },
        }
    }

    fn not_found(error: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, error)
    }

    fn bad_request(error: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, error)
    }

    fn invalid(error: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, error)
    }

    fn internal(error: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, error)
    }
}

impl IntoResponse for ApiFailure {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

pub fn router(state: Arc<AppState>, ui_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/api/health", get(health))
        .route("/api/runs", get(list_runs))
        .route("/api/queue", get(next_item))
        .route("/api/annotations", post(annotate))
        .route("/api/report", get(report))
        .route("/api/sweep", get(sweep_at))
        .with_state(state);
    match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Bind `addr` and serve until Ctrl-C.
/// Bind `addr` and return the bound address with the server future, which
/// runs until `shutdown` resolves.
pub async fn bind(
    config: &ServerConfig,
    addr: SocketAddr,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> Result<(SocketAddr, impl std::future::Future<Output = Result<(), ServerError>>), ServerError> {
    let state = AppState::load(config)?;
    let app = router(state, config.ui_dir.as_deref());
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|source| ServerError::Bind { addr, source })?;
    let local = listener.local_addr().map_err(ServerError::Serve)?;
    let server = async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(shutdown)
            .await
            .map_err(ServerError::Serve)
    };
    Ok((local, server))
}

/// Serve until interrupted.
pub async fn serve(config: ServerConfig, addr: SocketAddr) -> Result<(), ServerError> {
    let (local, server) = bind(&config, addr, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await?;
    log::info!("listening on {local}");
    server.await
}

async fn health(State(state): State<Arc<AppState>>) -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        runs: state.runs.len(),
        annotations: state.store().len(),
    })
}

async fn list_runs(State(state): State<Arc<AppState>>) -> Json<Vec<RunSummary>> {
    let store = state.store();
    Json(
        state
            .runs
            .iter()
            .map(|(name, run)| {
                let r = run.report(&store, None, &[]);
                RunSummary {
                    name: name.clone(),
                    n_items: r.n_items,
                    n_pending: r.n_pending,
                    coverage: r.coverage,
                }
            })
            .collect(),
    )
}

#[derive(Debug, Deserialize)]
struct QueueQuery {
    language: Option<String>,
    annotator: Option<String>,
    run: Option<String>,
}

/// First pending item in run order, then prediction order.
async fn next_item(
    State(state): State<Arc<AppState>>,
    Query(q): Query<QueueQuery>,
) -> Result<Json<QueueResponse>, ApiFailure> {
    let runs: Vec<&Run> = match q.run.as_deref() {
        Some(name) => vec![state.run(Some(name))?],
        None => state.runs.iter().map(|(_, r)| r).collect(),
    };
    let store = state.store();
    let mut seen = std::collections::HashSet::new();
    let (mut item, mut pending, mut total) = (None, 0, 0);
    for run in runs {
        for qi in run.queue(&store, q.annotator.as_deref()) {
            if q.language.as_deref().is_some_and(|l| l != qi.language) || !seen.insert(qi.item_id.clone()) {
                continue;
            }
            total += 1;
            if qi.status == QueueStatus::Pending {
                pending += 1;
                item.get_or_insert(qi);
            }
        }
    }
    Ok(Json(QueueResponse { item, pending, total }))
}

async fn annotate(
    State(state): State<Arc<AppState>>,
    Json(req): Json<AnnotationRequest>,
) -> Result<(StatusCode, Json<Annotation>), ApiFailure> {
    if !state.items.contains_key(&req.item_id) {
        return Err(ApiFailure::not_found(format!("unknown item {:?}", req.item_id)));
    }
    if req.annotator.trim().is_empty() {
        return Err(ApiFailure::invalid("annotator must not be empty"));
    }
    let tags = req
        .tags
        .iter()
        .map(|t| t.parse::<HarmTag>())
        .collect::<Result<_, _>>()
        .map_err(|e| ApiFailure {
            body: ApiError {
                error: e.to_string(),
                allowed_tags: HarmTag::ALL.iter().map(|t| t.as_str().to_string()).collect(),
            },
            ..ApiFailure::invalid("")
        })?;
    let annotation = Annotation {
        item_id: req.item_id,
        annotator: req.annotator,
        tags,
        timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
    };
    let (reply, done) = oneshot::channel();
    state
        .writer
        .send(WriteJob {
            annotation: annotation.clone(),
            reply,
        })
        .await
        .map_err(|_| ApiFailure::internal("annotation writer stopped"))?;
    done.await
        .map_err(|_| ApiFailure::internal("annotation writer stopped"))?
        .map_err(|e| ApiFailure::internal(e.to_string()))?;
    Ok((StatusCode::CREATED, Json(annotation)))
}

#[derive(Debug, Deserialize)]
struct ReportQuery {
    run: Option<String>,
    annotator: Option<String>,
}

async fn report(State(state): State<Arc<AppState>>, Query(q): Query<ReportQuery>) -> Result<Response, ApiFailure> {
    let bytes = state.report_bytes(q.run.as_deref(), q.annotator.as_deref())?;
    Ok(([(header::CONTENT_TYPE, "application/json")], bytes).into_response())
}

#[derive(Debug, Deserialize)]
struct SweepQuery {
    run: Option<String>,
    annotator: Option<String>,
    threshold: Option<String>,
}

/// Parse a threshold; absent or `-inf` means accept everything.
pub fn parse_threshold(raw: Option<&str>) -> Result<f64, String> {
    let Some(raw) = raw.map(str::trim).filter(|s| !s.is_empty()) else {
        return Ok(f64::NEG_INFINITY);
    };
    match raw.parse::<f64>() {
        Ok(t) if !t.is_nan() => Ok(t),
        _ => Err(format!("threshold {raw:?} is not a number or -inf")),
    }
}

async fn sweep_at(
    State(state): State<Arc<AppState>>,
    Query(q): Query<SweepQuery>,
) -> Result<Json<lexsimp_core::safety::SweepPoint>, ApiFailure> {
    let threshold = parse_threshold(q.threshold.as_deref()).map_err(ApiFailure::invalid)?;
    let run = state.run(q.run.as_deref())?;
    let items = run.scored_items(&state.store(), q.annotator.as_deref());
    Ok(Json(rates_at(&items, threshold)))
}

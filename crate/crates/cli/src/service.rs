//! HTTP service: one session per uploaded collection.
//!
//! Each session keeps its latest snapshot behind an `Arc`. Readers clone the
//! `Arc` and never wait on a running layout; mutations are serialized per
//! session by an async mutex and publish a new snapshot when done.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, HeaderName, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tower_http::cors::{Any, CorsLayer};

use treecollage_core::io::manifest::parse_manifest;
use treecollage_core::io::{LayoutDocument, Manifest};
use treecollage_core::optimizer::Violations;
use treecollage_core::{refocus, run_pipeline, Error, ImageTree, PipelineOutput, ShapeRegion};

pub const REVISION_HEADER: &str = "x-layout-revision";

#[derive(Debug, Clone, Default)]
pub struct ServiceOptions {
    /// Write-through directory for manifests and latest layouts.
    pub data_dir: Option<PathBuf>,
    /// Relative image and mask paths in uploaded manifests resolve here.
    pub base_dir: Option<PathBuf>,
}

struct Snapshot {
    revision: u64,
    tree: ImageTree,
    document: String,
}

struct Session {
    manifest: Manifest,
    shape: ShapeRegion,
    mutate: tokio::sync::Mutex<()>,
    current: RwLock<Arc<Snapshot>>,
}

impl Session {
    fn snapshot(&self) -> Arc<Snapshot> {
        self.current.read().expect("snapshot lock").clone()
    }
}

pub struct AppState {
    options: ServiceOptions,
    sessions: RwLock<HashMap<String, Arc<Session>>>,
    next_id: AtomicU64,
}

impl AppState {
    pub fn new(options: ServiceOptions) -> Arc<Self> {
        Arc::new(AppState {
            options,
            sessions: RwLock::new(HashMap::new()),
            next_id: AtomicU64::new(1),
        })
    }

    /// Restores sessions persisted under the data directory.
    pub fn restore(options: ServiceOptions) -> std::io::Result<Arc<Self>> {
        let state = Self::new(options);
        let Some(dir) = state.options.data_dir.clone() else {
            return Ok(state);
        };
        fs::create_dir_all(&dir)?;
        let mut max_id = 0;
        for entry in fs::read_dir(&dir)? {
            let path = entry?.path();
            let Some(id) = path.file_name().and_then(|n| n.to_str()).map(str::to_string) else {
                continue;
            };
            match state.load_session(&path) {
                Ok(session) => {
                    if let Some(n) = id.strip_prefix('c').and_then(|n| n.parse::<u64>().ok()) {
                        max_id = max_id.max(n);
                    }
                    state.sessions.write().expect("sessions lock").insert(id, Arc::new(session));
                }
                Err(e) => eprintln!("skipping session {}: {e}", path.display()),
            }
        }
        state.next_id.store(max_id + 1, Ordering::SeqCst);
        Ok(state)
    }

    fn load_session(&self, dir: &Path) -> Result<Session, Error> {
        let read = |name: &str| {
            let p = dir.join(name);
            fs::read(&p).map_err(|source| Error::Io {
                path: p.display().to_string(),
                source,
            })
        };
        let manifest = parse_manifest(&read("manifest.json")?, self.options.base_dir.as_deref())?;
        let shape = manifest.load_shape()?;
        let bytes = read("layout.json")?;
        let doc = LayoutDocument::from_json(&bytes)?;
        let stored: Stored = serde_json::from_slice(&read("session.json")?)
            .map_err(|e| Error::InvalidInput(format!("session.json: {e}")))?;
        let snapshot = Snapshot {
            revision: stored.revision,
            tree: doc.tree()?,
            document: String::from_utf8_lossy(&bytes).into_owned(),
        };
        Ok(Session {
            manifest,
            shape,
            mutate: tokio::sync::Mutex::new(()),
            current: RwLock::new(Arc::new(snapshot)),
        })
    }

    fn session(&self, id: &str) -> Option<Arc<Session>> {
        self.sessions.read().expect("sessions lock").get(id).cloned()
    }

    fn persist(&self, id: &str, manifest: Option<&[u8]>, snapshot: &Snapshot) -> std::io::Result<()> {
        let Some(root) = &self.options.data_dir else {
            return Ok(());
        };
        let dir = root.join(id);
        fs::create_dir_all(&dir)?;
        if let Some(bytes) = manifest {
            fs::write(dir.join("manifest.json"), bytes)?;
        }
        fs::write(dir.join("layout.json"), &snapshot.document)?;
        let stored = serde_json::to_string(&Stored { revision: snapshot.revision }).expect("serializes");
        fs::write(dir.join("session.json"), stored)
    }
}

#[derive(Serialize, Deserialize)]
struct Stored {
    revision: u64,
}

#[derive(Debug, Deserialize)]
pub struct FocusRequest {
    pub image_id: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Created {
    pub id: String,
    pub revision: u64,
}

struct ApiError(StatusCode, String);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::UnknownImage(_) => StatusCode::NOT_FOUND,
            Error::LayoutInfeasible { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            Error::Io { .. } => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::BAD_REQUEST,
        };
        ApiError(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(serde_json::json!({ "error": self.1 }))).into_response()
    }
}

fn not_found(what: &str, id: &str) -> ApiError {
    ApiError(StatusCode::NOT_FOUND, format!("unknown {what} `{id}`"))
}

fn internal(e: impl std::fmt::Display) -> ApiError {
    ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
}

fn document_text(manifest: &Manifest, shape: &ShapeRegion, output: &PipelineOutput) -> String {
    let v = Violations::of(&output.layout, shape);
    LayoutDocument::new(&manifest.items, output, v, manifest.shape.clone(), &manifest.config).to_json()
}

fn layout_response(snapshot: &Snapshot) -> Response {
    (
        [
            (header::CONTENT_TYPE, HeaderValue::from_static("application/json")),
            (HeaderName::from_static(REVISION_HEADER), HeaderValue::from(snapshot.revision)),
        ],
        snapshot.document.clone(),
    )
        .into_response()
}

async fn create(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Response, ApiError> {
    let base = state.options.base_dir.clone();
    let bytes = body.clone();
    let session = tokio::task::spawn_blocking(move || -> Result<Session, Error> {
        let manifest = parse_manifest(&bytes, base.as_deref())?;
        let shape = manifest.load_shape()?;
        let output = run_pipeline(&manifest.items, &manifest.schema, &shape, &manifest.config, None)?;
        let snapshot = Snapshot {
            revision: 1,
            document: document_text(&manifest, &shape, &output),
            tree: output.tree,
        };
        Ok(Session {
            manifest,
            shape,
            mutate: tokio::sync::Mutex::new(()),
            current: RwLock::new(Arc::new(snapshot)),
        })
    })
    .await
    .map_err(internal)??;

    let id = format!("c{}", state.next_id.fetch_add(1, Ordering::SeqCst));
    state.persist(&id, Some(&body), &session.snapshot()).map_err(internal)?;
    let revision = session.snapshot().revision;
    state.sessions.write().expect("sessions lock").insert(id.clone(), Arc::new(session));
    Ok((StatusCode::CREATED, Json(Created { id, revision })).into_response())
}

async fn layout(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    let session = state.session(&id).ok_or_else(|| not_found("collection", &id))?;
    Ok(layout_response(&session.snapshot()))
}

async fn focus(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Json(req): Json<FocusRequest>,
) -> Result<Response, ApiError> {
    let session = state.session(&id).ok_or_else(|| not_found("collection", &id))?;
    if session.manifest.index_of(&req.image_id).is_none() {
        return Err(not_found("image", &req.image_id));
    }
    let _guard = session.mutate.lock().await;
    let previous = session.snapshot();
    let worker = session.clone();
    let snapshot = tokio::task::spawn_blocking(move || -> Result<Snapshot, Error> {
        let m = &worker.manifest;
        let output = refocus(&m.items, &m.schema, &previous.tree, &worker.shape, &m.config, &req.image_id)?;
        Ok(Snapshot {
            revision: previous.revision + 1,
            document: document_text(m, &worker.shape, &output),
            tree: output.tree,
        })
    })
    .await
    .map_err(internal)??;
    state.persist(&id, None, &snapshot).map_err(internal)?;
    let snapshot = Arc::new(snapshot);
    *session.current.write().expect("snapshot lock") = snapshot.clone();
    Ok(layout_response(&snapshot))
}

fn content_type(path: &Path) -> &'static str {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    match ext.as_str() {
        "png" => "image/png",
        "jpg" | "jpeg" => "image/jpeg",
        "gif" => "image/gif",
        "webp" => "image/webp",
        "bmp" => "image/bmp",
        "svg" => "image/svg+xml",
        _ => "application/octet-stream",
    }
}

async fn image(
    State(state): State<Arc<AppState>>,
    UrlPath((id, image_id)): UrlPath<(String, String)>,
) -> Result<Response, ApiError> {
    let session = state.session(&id).ok_or_else(|| not_found("collection", &id))?;
    let index = session.manifest.index_of(&image_id).ok_or_else(|| not_found("image", &image_id))?;
    let Some(rel) = session.manifest.items[index].pixel_source.clone() else {
        return Err(ApiError(StatusCode::NOT_FOUND, format!("image `{image_id}` has no raster")));
    };
    let path = match &session.manifest.base_dir {
        Some(dir) if rel.is_relative() => dir.join(&rel),
        _ => rel,
    };
    let bytes = tokio::task::spawn_blocking({
        let path = path.clone();
        move || fs::read(path)
    })
    .await
    .map_err(internal)?
    .map_err(|e| ApiError(StatusCode::NOT_FOUND, format!("{}: {e}", path.display())))?;
    Ok(([(header::CONTENT_TYPE, content_type(&path))], bytes).into_response())
}

pub fn router(state: Arc<AppState>) -> Router {
    let cors = CorsLayer::new()
        .allow_origin(Any)
        .allow_methods([Method::GET, Method::POST])
        .allow_headers(Any)
        .expose_headers([HeaderName::from_static(REVISION_HEADER)]);
    Router::new()
        .route("/api/collections", post(create))
        .route("/api/collections/{id}/layout", get(layout))
        .route("/api/collections/{id}/focus", post(focus))
        .route("/api/collections/{id}/images/{image_id}", get(image))
        .layer(cors)
        .with_state(state)
}

pub async fn serve(addr: std::net::SocketAddr, options: ServiceOptions) -> std::io::Result<()> {
    let state = AppState::restore(options)?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}

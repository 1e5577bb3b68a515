//! HTTP inspection service over one loaded session.
//!
//! Every payload carries the session `version`. Reads take a shared lock and
//! build the whole response under it; label changes take the exclusive lock,
//! so a response never mixes two versions.

use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, Method, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use nhssa::components::Label;
use serde::Deserialize;
use serde_json::{json, Value};
use tower_http::cors::{Any, CorsLayer};
use tower_http::services::ServeDir;

use crate::error::{CliError, Result};
use crate::session::Session;

pub struct AppState {
    session: RwLock<Session>,
    /// Where `POST /api/save` writes.
    path: PathBuf,
}

impl AppState {
    pub fn new(session: Session, path: PathBuf) -> Arc<Self> {
        Arc::new(Self {
            session: RwLock::new(session),
            path,
        })
    }

    fn read(&self) -> std::sync::RwLockReadGuard<'_, Session> {
        self.session.read().unwrap_or_else(|e| e.into_inner())
    }

    fn write(&self) -> std::sync::RwLockWriteGuard<'_, Session> {
        self.session.write().unwrap_or_else(|e| e.into_inner())
    }
}

type Shared = Arc<AppState>;

struct ApiError {
    status: StatusCode,
    message: String,
    version: u64,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "error": self.message, "version": self.version });
        (self.status, Json(body)).into_response()
    }
}

fn err(status: StatusCode, message: impl Into<String>, version: u64) -> ApiError {
    ApiError {
        status,
        message: message.into(),
        version,
    }
}

fn pairs(x: &nhssa::Series) -> Vec<[f64; 2]> {
    x.samples().iter().map(|z| [z.re, z.im]).collect()
}

async fn get_session(State(st): State<Shared>) -> Json<Value> {
    let s = st.read();
    let f = &s.file;
    Json(json!({
        "version": f.version,
        "schema": f.schema,
        "id": f.id,
        "source": f.source,
        "seed": f.seed,
        "m": s.f.len(),
        "embedding": f.embedding,
        "config": f.config,
        "rank": f.decomposition.rank,
        "lambda_c": f.decomposition.lambda_c,
        "eigvals": f.decomposition.eigvals,
        "abs_eigvals": f.decomposition.abs_eigvals,
        "kept": f.decomposition.kept,
        "degenerate": f.decomposition.degenerate,
        "frequencies": f.derived.frequencies,
        "signal_rows": f.derived.signal_rows,
        "noise_rows": f.derived.noise_rows,
        "warnings": f.warnings,
    }))
}

async fn get_components(State(st): State<Shared>) -> Json<Value> {
    let s = st.read();
    Json(json!({ "version": s.version(), "components": s.exports() }))
}

#[derive(Debug, Deserialize)]
struct SeriesQuery {
    stride: Option<usize>,
}

async fn get_series(
    State(st): State<Shared>,
    UrlPath(j): UrlPath<usize>,
    Query(q): Query<SeriesQuery>,
) -> std::result::Result<Json<Value>, ApiError> {
    let s = st.read();
    let v = s.version();
    let rec = s
        .file
        .records
        .get(j)
        .ok_or_else(|| err(StatusCode::NOT_FOUND, format!("no component {j}"), v))?;
    let stride = q.stride.unwrap_or(1);
    if stride == 0 {
        return Err(err(StatusCode::BAD_REQUEST, "stride must be positive", v));
    }
    let pick = |n: usize| (0..n).step_by(stride).collect::<Vec<usize>>();
    let zi = pick(rec.z_row.len());
    let back = &s.components[j];
    let bi = pick(back.len());
    Ok(Json(json!({
        "version": v,
        "index": j,
        "stride": stride,
        "z_index": zi,
        "z": zi.iter().map(|&k| [rec.z_row[k].re, rec.z_row[k].im]).collect::<Vec<_>>(),
        "modulus": zi.iter().map(|&k| rec.z_row[k].norm()).collect::<Vec<_>>(),
        "phase": zi.iter().map(|&k| rec.phase[k]).collect::<Vec<_>>(),
        "modulus_mean": rec.modulus.mean,
        "modulus_std": rec.modulus.std,
        "wrap_positions": rec.wrap_events.positions,
        "backmap_index": bi.iter().map(|&k| back.start_index() + k as i64).collect::<Vec<_>>(),
        "backmap": bi.iter().map(|&k| { let z = back.get(k); [z.re, z.im] }).collect::<Vec<_>>(),
        "label": rec.label,
    })))
}

async fn get_reconstruction(State(st): State<Shared>) -> Json<Value> {
    let s = st.read();
    let r = &s.derived.reconstruction;
    Json(json!({
        "version": s.version(),
        "f": pairs(&s.f),
        "shat": pairs(&r.shat),
        "what": pairs(&r.what),
        "frequencies": s.derived.frequencies,
        "signal_rows": s.file.derived.signal_rows,
        "noise_rows": s.file.derived.noise_rows,
        "residual_norm": r.residual_norm,
    }))
}

async fn get_audit(State(st): State<Shared>) -> Json<Value> {
    let s = st.read();
    Json(json!({ "version": s.version(), "entries": s.file.audit }))
}

async fn post_label(
    State(st): State<Shared>,
    UrlPath(j): UrlPath<usize>,
    body: Bytes,
) -> std::result::Result<Json<Value>, ApiError> {
    let mut s = st.write();
    let v = s.version();
    if j >= s.rank() {
        return Err(err(StatusCode::NOT_FOUND, format!("no component {j}"), v));
    }
    let body: Value = serde_json::from_slice(&body)
        .map_err(|e| err(StatusCode::BAD_REQUEST, format!("bad body: {e}"), v))?;
    let label: Label = body
        .get("label")
        .and_then(Value::as_str)
        .ok_or_else(|| err(StatusCode::BAD_REQUEST, "missing label", v))?
        .parse()
        .map_err(|e: nhssa::NhssaError| err(StatusCode::BAD_REQUEST, e.to_string(), v))?;
    if let Some(expected) = body.get("version") {
        let expected = expected.as_u64().ok_or_else(|| {
            err(
                StatusCode::BAD_REQUEST,
                "version must be a non-negative integer",
                v,
            )
        })?;
        if expected != v {
            return Err(err(
                StatusCode::CONFLICT,
                format!("stale version {expected}, current {v}"),
                v,
            ));
        }
    }
    s.set_label(j, label)
        .map_err(|e| err(StatusCode::INTERNAL_SERVER_ERROR, e.to_string(), v))?;
    Ok(Json(json!({
        "version": s.version(),
        "component": s.file.records[j].export(),
        "frequencies": s.derived.frequencies,
        "signal_rows": s.file.derived.signal_rows,
        "noise_rows": s.file.derived.noise_rows,
    })))
}

async fn post_save(State(st): State<Shared>) -> std::result::Result<Json<Value>, ApiError> {
    let s = st.read();
    let v = s.version();
    s.save(&st.path)
        .map_err(|e| err(StatusCode::INTERNAL_SERVER_ERROR, e.to_string(), v))?;
    Ok(Json(
        json!({ "version": v, "path": st.path.display().to_string() }),
    ))
}

const INDEX: &str = r#"<!doctype html>
<html><head><meta charset="utf-8"><title>nhssa inspector</title></head>
<body>
<h1>nhssa inspector</h1>
<p>The browser UI is not bundled with this server. Start it with <code>--ui-dir</code> to serve a built UI here.</p>
<ul>
<li><a href="/api/session">/api/session</a></li>
<li><a href="/api/components">/api/components</a></li>
<li><a href="/api/reconstruction">/api/reconstruction</a></li>
<li><a href="/api/audit">/api/audit</a></li>
</ul>
</body></html>
"#;

async fn index() -> Html<&'static str> {
    Html(INDEX)
}

pub fn router(state: Shared, ui_dir: Option<PathBuf>) -> Router {
    let cors = CorsLayer::new()
        .allow_origin(Any)
        .allow_methods([Method::GET, Method::POST])
        .allow_headers([header::CONTENT_TYPE]);
    let api = Router::new()
        .route("/api/session", get(get_session))
        .route("/api/components", get(get_components))
        .route("/api/components/{j}/series", get(get_series))
        .route("/api/components/{j}/label", post(post_label))
        .route("/api/reconstruction", get(get_reconstruction))
        .route("/api/audit", get(get_audit))
        .route("/api/save", post(post_save))
        .with_state(state);
    let app = match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.route("/", get(index)),
    };
    app.layer(cors)
}

/// Binds `addr` and serves until Ctrl-C.
pub async fn serve(state: Shared, addr: &str, ui_dir: Option<PathBuf>) -> Result<()> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|source| CliError::Bind {
            addr: addr.into(),
            source,
        })?;
    let local = listener.local_addr().map_err(|source| CliError::Bind {
        addr: addr.into(),
        source,
    })?;
    println!("serving on http://{local}/");
    axum::serve(listener, router(state, ui_dir))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| CliError::io(addr, e))
}

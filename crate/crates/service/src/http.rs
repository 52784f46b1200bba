//! HTTP and WebSocket front end.
//!
//! JSON bodies everywhere except frame uploads (raw encoded image bytes)
//! and image endpoints (PNG, with the frame counter in `x-frame-counter`).
//! `GET /stream` upgrades to a WebSocket that pushes [`crate::Event`]s as JSON.

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use convis::vizdata::DisplayNorm;
use convis::{BackwardMode, UnitRef};
use serde::Deserialize;
use tokio::sync::broadcast::error::RecvError;

use crate::error::ServiceError;
use crate::service::{JobRequest, Service, ViewOptions};
use crate::store::ResultKey;

pub const FRAME_HEADER: &str = "x-frame-counter";

type Svc = State<Arc<Service>>;

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = match &self {
            ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::Core(convis::Error::UnknownLayer(_)) => StatusCode::NOT_FOUND,
            e if e.is_client_error() => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(serde_json::json!({ "error": self.to_string() }))).into_response()
    }
}

type HttpResult<T> = Result<T, ServiceError>;

/// Runs blocking compute off the async executor.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> HttpResult<T> + Send + 'static) -> HttpResult<T> {
    tokio::task::spawn_blocking(f).await.expect("handler task panicked")
}

fn png(bytes: Vec<u8>, frame: Option<u64>) -> Response {
    let mut resp = ([(header::CONTENT_TYPE, "image/png")], bytes).into_response();
    if let Some(f) = frame {
        resp.headers_mut().insert(FRAME_HEADER, HeaderValue::from(f));
    }
    resp
}

pub fn router(svc: Arc<Service>) -> Router {
    Router::new()
        .route("/net", get(net))
        .route("/session", post(create_session))
        .route("/session/{id}/frame", post(submit_frame))
        .route("/session/{id}/layer/{name}", get(layer_view))
        .route("/session/{id}/select", post(select))
        .route("/session/{id}/unit/{layer}/{channel}/panels", get(panels))
        .route("/session/{id}/unit/{layer}/{channel}/activation", get(channel_image))
        .route("/session/{id}/unit/{layer}/{channel}/backward", get(backward_image))
        .route("/jobs/optimize", post(start_job))
        .route("/jobs/{id}", get(poll_job))
        .route("/jobs/{id}/montage", get(job_montage))
        .route("/topk/{layer}/{channel}", get(topk))
        .route("/topk/{layer}/{channel}/deconv/{rank}", get(topk_deconv))
        .route("/results/{net}/{unit}/{run}/{file}", get(result_file))
        .route("/stream", get(stream))
        .with_state(svc)
}

async fn net(State(svc): Svc) -> impl IntoResponse {
    Json(svc.net_summary())
}

async fn create_session(State(svc): Svc) -> HttpResult<impl IntoResponse> {
    let created = blocking(move || svc.create_session()).await?;
    Ok((StatusCode::CREATED, Json(created)))
}

async fn submit_frame(State(svc): Svc, Path(id): Path<String>, body: Bytes) -> HttpResult<impl IntoResponse> {
    Ok(Json(blocking(move || svc.submit_frame(&id, &body)).await?))
}

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
struct LayerQuery {
    since: Option<u64>,
    mode: Option<DisplayNorm>,
    pad: Option<usize>,
    format: Option<String>,
    /// Informational; the current frame is always served.
    #[allow(dead_code)]
    frame: Option<u64>,
}

async fn layer_view(
    State(svc): Svc,
    Path((id, name)): Path<(String, String)>,
    Query(q): Query<LayerQuery>,
) -> HttpResult<Response> {
    let opts = ViewOptions {
        since: q.since,
        mode: q.mode.unwrap_or_default(),
        pad: q.pad,
    };
    let view = blocking(move || svc.layer_view(&id, &name, &opts)).await?;
    Ok(match q.format.as_deref() {
        Some("png") => png(view.png, Some(view.frame)),
        None | Some("json") => {
            let frame = view.frame;
            let mut resp = Json(view).into_response();
            resp.headers_mut().insert(FRAME_HEADER, HeaderValue::from(frame));
            resp
        }
        Some(other) => return Err(ServiceError::BadRequest(format!("format `{other}` (json|png)"))),
    })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SelectBody {
    unit: String,
}

async fn select(State(svc): Svc, Path(id): Path<String>, body: Bytes) -> HttpResult<impl IntoResponse> {
    let body: SelectBody = serde_json::from_slice(&body).map_err(|e| ServiceError::BadRequest(e.to_string()))?;
    let unit: UnitRef = body.unit.parse()?;
    Ok(Json(blocking(move || svc.select(&id, unit)).await?))
}

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
struct SiteQuery {
    row: Option<usize>,
    col: Option<usize>,
    mode: Option<String>,
    #[allow(dead_code)]
    frame: Option<u64>,
}

impl SiteQuery {
    fn site(&self) -> HttpResult<Option<(usize, usize)>> {
        match (self.row, self.col) {
            (Some(r), Some(c)) => Ok(Some((r, c))),
            (None, None) => Ok(None),
            _ => Err(ServiceError::BadRequest("give both `row` and `col`".into())),
        }
    }
}

async fn panels(
    State(svc): Svc,
    Path((id, layer, channel)): Path<(String, String, usize)>,
    Query(q): Query<SiteQuery>,
) -> HttpResult<impl IntoResponse> {
    let site = q.site()?;
    Ok(Json(
        blocking(move || svc.unit_panels(&id, &layer, channel, site)).await?,
    ))
}

async fn channel_image(
    State(svc): Svc,
    Path((id, layer, channel)): Path<(String, String, usize)>,
) -> HttpResult<Response> {
    let (frame, bytes) = blocking(move || svc.channel_image(&id, &layer, channel)).await?;
    Ok(png(bytes, Some(frame)))
}

async fn backward_image(
    State(svc): Svc,
    Path((id, layer, channel)): Path<(String, String, usize)>,
    Query(q): Query<SiteQuery>,
) -> HttpResult<Response> {
    let site = q.site()?;
    let mode = match q.mode.as_deref() {
        None | Some("deconv") => BackwardMode::Deconv,
        Some("gradient") => BackwardMode::Gradient,
        Some(other) => return Err(ServiceError::BadRequest(format!("mode `{other}` (deconv|gradient)"))),
    };
    let (frame, bytes) = blocking(move || svc.backward_image(&id, &layer, channel, site, mode)).await?;
    Ok(png(bytes, Some(frame)))
}

async fn start_job(State(svc): Svc, body: Bytes) -> HttpResult<impl IntoResponse> {
    let req: JobRequest = serde_json::from_slice(&body).map_err(|e| ServiceError::BadRequest(e.to_string()))?;
    let id = blocking(move || {
        let id = svc.start_job(&req)?;
        svc.job(&id)
    })
    .await?;
    Ok((StatusCode::ACCEPTED, Json(id)))
}

async fn poll_job(State(svc): Svc, Path(id): Path<String>) -> HttpResult<impl IntoResponse> {
    Ok(Json(svc.job(&id)?))
}

async fn job_montage(State(svc): Svc, Path(id): Path<String>) -> HttpResult<Response> {
    Ok(png(blocking(move || svc.job_montage(&id)).await?, None))
}

async fn topk(State(svc): Svc, Path((layer, channel)): Path<(String, usize)>) -> HttpResult<impl IntoResponse> {
    Ok(Json(svc.topk_entry(&layer, channel)?))
}

async fn topk_deconv(
    State(svc): Svc,
    Path((layer, channel, rank)): Path<(String, usize, usize)>,
) -> HttpResult<Response> {
    Ok(png(
        blocking(move || svc.topk_deconv(&layer, channel, rank)).await?,
        None,
    ))
}

async fn result_file(
    State(svc): Svc,
    Path((net, unit, run, file)): Path<(String, String, String, String)>,
) -> HttpResult<Response> {
    let key = ResultKey { net, unit, run };
    let bytes = blocking(move || svc.result_file(&key, &file).map(|b| (file, b))).await?;
    let content_type = if bytes.0.ends_with(".png") {
        "image/png"
    } else {
        "application/json"
    };
    Ok(([(header::CONTENT_TYPE, content_type)], bytes.1).into_response())
}

#[derive(Debug, Default, Deserialize)]
struct StreamQuery {
    session: Option<String>,
}

/// Client messages on the stream.
#[derive(Debug, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum ClientMessage {
    Select { unit: String },
    Ping,
}

async fn stream(State(svc): Svc, Query(q): Query<StreamQuery>, ws: WebSocketUpgrade) -> HttpResult<Response> {
    if let Some(id) = &q.session {
        svc.session(id)?;
    }
    Ok(ws.on_upgrade(move |socket| stream_loop(svc, q.session, socket)))
}

async fn stream_loop(svc: Arc<Service>, session: Option<String>, mut socket: WebSocket) {
    let mut events = svc.events().subscribe();
    loop {
        tokio::select! {
            ev = events.recv() => {
                let text = match ev {
                    Ok(ev) if ev.concerns(session.as_deref()) => serde_json::to_string(&ev).expect("event json"),
                    Ok(_) => continue,
                    Err(RecvError::Lagged(n)) => serde_json::json!({ "type": "lagged", "missed": n }).to_string(),
                    Err(RecvError::Closed) => break,
                };
                if socket.send(Message::Text(text.into())).await.is_err() {
                    break;
                }
            }
            msg = socket.recv() => {
                let Some(Ok(msg)) = msg else { break };
                let reply = match msg {
                    Message::Text(t) => client_message(&svc, session.as_deref(), &t).await,
                    Message::Close(_) => break,
                    _ => continue,
                };
                if let Some(reply) = reply {
                    if socket.send(Message::Text(reply.to_string().into())).await.is_err() {
                        break;
                    }
                }
            }
        }
    }
}

async fn client_message(svc: &Arc<Service>, session: Option<&str>, text: &str) -> Option<serde_json::Value> {
    let err = |e: String| Some(serde_json::json!({ "type": "error", "error": e }));
    match serde_json::from_str::<ClientMessage>(text) {
        Ok(ClientMessage::Ping) => Some(serde_json::json!({ "type": "pong" })),
        Ok(ClientMessage::Select { unit }) => {
            let Some(id) = session.map(str::to_owned) else {
                return err("select needs a stream opened with ?session=ID".into());
            };
            let svc = Arc::clone(svc);
            let r = blocking(move || svc.select(&id, unit.parse()?)).await;
            // Success is announced by the broadcast `selected` event.
            r.err().and_then(|e| err(e.to_string()))
        }
        Err(e) => err(e.to_string()),
    }
}

/// Serves until Ctrl-C, evicting idle sessions once a minute.
pub async fn serve(svc: Arc<Service>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on http://{}", listener.local_addr()?);
    let evictor = Arc::clone(&svc);
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(Duration::from_secs(60));
        loop {
            tick.tick().await;
            let n = evictor.evict_idle();
            if n > 0 {
                tracing::info!("evicted {n} idle sessions");
            }
        }
    });
    axum::serve(listener, router(svc))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

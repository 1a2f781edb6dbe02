use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use hrsim_core::scenario::ScenarioSpec;
use serde::Deserialize;
use serde_json::json;
use tokio::sync::broadcast::error::RecvError;

use crate::protocol::{Body, ErrorPayload, WireMessage};
use crate::runner::SessionHandle;
use crate::scenarios;
use crate::session::{Clock, LiveSession, Outgoing, SessionConfig, SystemClock};

pub const DEFAULT_SPEED: f64 = 1.0;

#[derive(Clone)]
pub struct AppState {
    sessions: Arc<Mutex<BTreeMap<String, SessionHandle>>>,
    clock: Arc<dyn Clock>,
}

impl Default for AppState {
    fn default() -> Self {
        Self::with_clock(Arc::new(SystemClock::new()))
    }
}

impl AppState {
    pub fn with_clock(clock: Arc<dyn Clock>) -> Self {
        AppState { sessions: Default::default(), clock }
    }

    fn get(&self, id: &str) -> Option<SessionHandle> {
        self.sessions.lock().unwrap().get(id).cloned()
    }

    fn live(&self) -> Vec<SessionHandle> {
        let mut sessions = self.sessions.lock().unwrap();
        sessions.retain(|_, h| h.is_running());
        sessions.values().cloned().collect()
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/scenarios", get(list_scenarios))
        .route("/sessions", get(list_sessions).post(create_session))
        .route("/sessions/{id}", get(session_status).delete(delete_session))
        .route("/sessions/{id}/ws", get(session_socket))
        .with_state(state)
}

struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

fn not_found(id: &str) -> ApiError {
    ApiError(StatusCode::NOT_FOUND, format!("no session {id:?}"))
}

fn stopped(id: &str) -> ApiError {
    ApiError(StatusCode::GONE, format!("session {id:?} has stopped"))
}

async fn list_scenarios() -> impl IntoResponse {
    Json(scenarios::bundled())
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum ScenarioRef {
    Name(String),
    Spec(Box<ScenarioSpec>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateSession {
    scenario: ScenarioRef,
    #[serde(default)]
    seed: u64,
    speed: Option<f64>,
    id: Option<String>,
}

async fn create_session(State(state): State<AppState>, body: Result<Json<CreateSession>, axum::extract::rejection::JsonRejection>) -> Result<Response, ApiError> {
    let Json(req) = body.map_err(|e| ApiError(StatusCode::BAD_REQUEST, e.body_text()))?;
    let spec = match req.scenario {
        ScenarioRef::Name(name) => scenarios::find(&name)
            .ok_or_else(|| ApiError(StatusCode::NOT_FOUND, format!("no bundled scenario {name:?}")))?
            .spec,
        ScenarioRef::Spec(spec) => *spec,
    };
    state.live();
    let id = match req.id {
        Some(id) if id.is_empty() => return Err(ApiError(StatusCode::BAD_REQUEST, "empty session id".into())),
        Some(id) if state.get(&id).is_some() => return Err(ApiError(StatusCode::CONFLICT, format!("session {id:?} exists"))),
        Some(id) => id,
        None => {
            let sessions = state.sessions.lock().unwrap();
            (1..).map(|i| format!("s{i}")).find(|id| !sessions.contains_key(id)).expect("unbounded")
        }
    };
    let cfg = SessionConfig::new(id.clone(), spec, req.seed, req.speed.unwrap_or(DEFAULT_SPEED));
    let clock = state.clock.clone();
    // initial convergence can take a moment on big graphs
    let session = tokio::task::spawn_blocking(move || LiveSession::new(cfg, clock.now()))
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
        .map_err(|e| ApiError(StatusCode::BAD_REQUEST, e.to_string()))?;
    let status = session.status();
    let handle = SessionHandle::spawn(session, state.clock.clone());
    {
        let mut sessions = state.sessions.lock().unwrap();
        if sessions.contains_key(&id) {
            handle.shutdown();
            return Err(ApiError(StatusCode::CONFLICT, format!("session {id:?} exists")));
        }
        sessions.insert(id.clone(), handle);
    }
    log::info!("started session {id}");
    Ok((StatusCode::CREATED, Json(status)).into_response())
}

async fn list_sessions(State(state): State<AppState>) -> Result<Response, ApiError> {
    let mut out = Vec::new();
    for h in state.live() {
        if let Ok(s) = h.status().await {
            out.push(s);
        }
    }
    Ok(Json(out).into_response())
}

async fn session_status(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let h = state.get(&id).ok_or_else(|| not_found(&id))?;
    let s = h.status().await.map_err(|_| stopped(&id))?;
    Ok(Json(s).into_response())
}

async fn delete_session(State(state): State<AppState>, Path(id): Path<String>) -> Result<StatusCode, ApiError> {
    let h = state.sessions.lock().unwrap().remove(&id).ok_or_else(|| not_found(&id))?;
    h.shutdown();
    Ok(StatusCode::NO_CONTENT)
}

async fn session_socket(State(state): State<AppState>, Path(id): Path<String>, ws: WebSocketUpgrade) -> Result<Response, ApiError> {
    let h = state.get(&id).ok_or_else(|| not_found(&id))?;
    Ok(ws.on_upgrade(move |socket| serve_socket(socket, h)))
}

async fn send(socket: &mut WebSocket, msg: &WireMessage) -> bool {
    let text = serde_json::to_string(msg).expect("wire messages serialize");
    socket.send(Message::Text(text.into())).await.is_ok()
}

async fn serve_socket(mut socket: WebSocket, h: SessionHandle) {
    let mut rx = h.subscribe();
    let Ok((client, initial)) = h.attach().await else {
        return;
    };
    let mut last_seq = 0;
    let mut forward = async |socket: &mut WebSocket, o: &Outgoing| {
        if !o.to.contains(&client) || o.msg.seq <= last_seq {
            return true;
        }
        last_seq = o.msg.seq;
        send(socket, &o.msg).await
    };
    let mut open = true;
    for o in &initial {
        open = open && forward(&mut socket, o).await;
    }
    while open {
        tokio::select! {
            incoming = socket.recv() => match incoming {
                Some(Ok(Message::Text(text))) => open = h.inbound(client, text.to_string()).is_ok(),
                Some(Ok(Message::Close(_))) | Some(Err(_)) | None => open = false,
                Some(Ok(_)) => {}
            },
            out = rx.recv() => match out {
                Ok(o) => open = forward(&mut socket, &o).await,
                Err(RecvError::Lagged(n)) => {
                    // the client can no longer trust its view; tell it and hang up
                    let err = ErrorPayload { id: None, code: "lagged".into(), message: format!("{n} messages dropped, reconnect") };
                    send(&mut socket, &WireMessage::new(0, Body::Error(err))).await;
                    open = false;
                }
                Err(RecvError::Closed) => open = false,
            },
        }
    }
    h.detach(client);
    let _ = socket.send(Message::Close(None)).await;
}

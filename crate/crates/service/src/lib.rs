//! HTTP and WebSocket service for interactive NetworkSIR sessions.
//!
//! | method | path | body |
//! |---|---|---|
//! | POST | `/sessions` | [`CreateSession`] |
//! | POST | `/sessions/{id}/step` | `{"k": 5}` |
//! | POST | `/sessions/{id}/intervene` | `{"action": "vaccinate" \| "quarantine", "node": 3}` |
//! | GET | `/sessions/{id}/state` | |
//! | GET | `/sessions/{id}/history` | |
//! | GET | `/sessions/{id}/nodes/{n}/history` | |
//! | GET | `/sessions/{id}/log` | |
//! | WS | `/sessions/{id}/stream` | server pushes [`DeltaFrame`]s |
//!
//! Errors are `{"code", "message", "field"?}` with a 4xx status. Commands on
//! one session are serialized; distinct sessions run independently.

mod error;
pub mod session;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex, RwLock};

use axum::body::Bytes;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tokio::sync::broadcast;

pub use error::{ApiError, ErrorBody};
pub use session::{
    Action, Command, CreateSession, DeltaFrame, InterventionAck, NodeChange, NodeHistory, RandomGraphSpec, Session,
    SessionLog, StateView, Status,
};

use epikit_core::{Compartment, StaticGraph};

const STREAM_CAPACITY: usize = 4096;

struct Handle {
    session: Mutex<Session>,
    frames: broadcast::Sender<DeltaFrame>,
}

impl Handle {
    fn lock(&self) -> std::sync::MutexGuard<'_, Session> {
        self.session.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn publish(&self, frames: impl IntoIterator<Item = DeltaFrame>) {
        for f in frames {
            // No subscribers is fine.
            let _ = self.frames.send(f);
        }
    }
}

#[derive(Clone, Default)]
pub struct AppState {
    sessions: Arc<RwLock<HashMap<String, Arc<Handle>>>>,
}

impl AppState {
    fn get(&self, id: &str) -> Result<Arc<Handle>, ApiError> {
        self.sessions
            .read()
            .unwrap_or_else(|p| p.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("id", format!("unknown session `{id}`")))
    }

    fn insert(&self, session: Session) -> String {
        let id = uuid::Uuid::new_v4().to_string();
        let (tx, _) = broadcast::channel(STREAM_CAPACITY);
        let handle = Arc::new(Handle {
            session: Mutex::new(session),
            frames: tx,
        });
        self.sessions
            .write()
            .unwrap_or_else(|p| p.into_inner())
            .insert(id.clone(), handle);
        id
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Created {
    pub id: String,
    pub graph: StaticGraph,
    pub state: StateView,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRequest {
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResponse {
    pub state: StateView,
    pub frames: Vec<DeltaFrame>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterveneRequest {
    pub action: Action,
    pub node: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryResponse {
    pub current_step: usize,
    pub frames: Vec<Vec<Compartment>>,
}

pub fn router() -> Router {
    router_with_state(AppState::default())
}

pub fn router_with_state(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create))
        .route("/sessions/{id}/step", post(step))
        .route("/sessions/{id}/intervene", post(intervene))
        .route("/sessions/{id}/state", get(state_of))
        .route("/sessions/{id}/history", get(history))
        .route("/sessions/{id}/nodes/{node}/history", get(node_history))
        .route("/sessions/{id}/log", get(log))
        .route("/sessions/{id}/stream", get(stream))
        .with_state(state)
}

/// Serves until the process is stopped.
pub async fn serve(addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router()).await
}

fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_json(e.to_string()))
}

type ApiResult<T> = Result<T, ApiError>;

async fn create(State(app): State<AppState>, body: Bytes) -> ApiResult<Response> {
    let req: CreateSession = parse(&body)?;
    let session = Session::create(req)?;
    let graph = session.graph().clone();
    let state = session.state();
    let id = app.insert(session);
    Ok((StatusCode::CREATED, Json(Created { id, graph, state })).into_response())
}

async fn step(State(app): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<StepResponse>> {
    let req: StepRequest = parse(&body)?;
    let h = app.get(&id)?;
    let mut s = h.lock();
    let frames = s.step(req.k)?;
    h.publish(frames.iter().cloned());
    Ok(Json(StepResponse { state: s.state(), frames }))
}

async fn intervene(
    State(app): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<InterventionAck>> {
    let req: InterveneRequest = parse(&body)?;
    let h = app.get(&id)?;
    let mut s = h.lock();
    let (ack, frame) = s.intervene(req.action, req.node)?;
    h.publish(frame);
    Ok(Json(ack))
}

async fn state_of(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<StateView>> {
    let h = app.get(&id)?;
    let s = h.lock();
    Ok(Json(s.state()))
}

async fn history(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<HistoryResponse>> {
    let h = app.get(&id)?;
    let s = h.lock();
    Ok(Json(HistoryResponse {
        current_step: s.current_step(),
        frames: s.history().to_vec(),
    }))
}

async fn node_history(
    State(app): State<AppState>,
    Path((id, node)): Path<(String, String)>,
) -> ApiResult<Json<NodeHistory>> {
    let h = app.get(&id)?;
    let node: usize = node
        .parse()
        .map_err(|_| ApiError::not_found("node", format!("`{node}` is not a node index")))?;
    let s = h.lock();
    Ok(Json(s.node_history(node)?))
}

async fn log(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<SessionLog>> {
    let h = app.get(&id)?;
    let s = h.lock();
    Ok(Json(s.log().clone()))
}

/// Frames produced after the upgrade are pushed in sequence order. A client
/// that falls too far behind is disconnected and should resync from
/// `/state`, whose `seq` tells it where the stream resumes.
async fn stream(State(app): State<AppState>, Path(id): Path<String>, ws: WebSocketUpgrade) -> ApiResult<Response> {
    let h = app.get(&id)?;
    let rx = h.frames.subscribe();
    Ok(ws.on_upgrade(move |socket| pump(socket, rx)))
}

async fn pump(mut socket: WebSocket, mut rx: broadcast::Receiver<DeltaFrame>) {
    loop {
        tokio::select! {
            frame = rx.recv() => match frame {
                Ok(f) => {
                    let text = serde_json::to_string(&f).expect("frame serializes");
                    if socket.send(Message::Text(text.into())).await.is_err() {
                        return;
                    }
                }
                Err(_) => {
                    let _ = socket.send(Message::Close(None)).await;
                    return;
                }
            },
            msg = socket.recv() => match msg {
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => return,
                Some(Ok(_)) => {}
            },
        }
    }
}

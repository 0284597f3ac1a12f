//! HTTP and WebSocket front end for live sessions.
//!
//! Each session is owned by one actor task. Client messages, feedback-window
//! timers and animation delays all go through the actor's single queue, so
//! they are applied in arrival order; every resulting server message is
//! broadcast to all sockets attached to the session.
//!
//! Routes:
//! - `POST /sessions` with a [`SessionConfig`] body (or none) returns `{"id": ...}`
//! - `GET /sessions/{id}/ws` upgrades to the message stream
//! - `GET /sessions/{id}/log` returns the feedback log as JSON lines
//! - `GET /sessions/{id}/model` returns the current reward model
//! - `GET /healthz`

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::serve::ListenerExt;
use axum::{Json, Router};
use futures::{SinkExt, StreamExt};
use serde_json::json;
use tokio::sync::{broadcast, mpsc, oneshot};

use crate::analytics::{logs_to_string, FeedbackLog};
use crate::session::{create_session, Phase, Session, SessionConfig};
use crate::tamer::RewardModel;
use crate::wire::{ClientMessage, ErrorCode, ServerMessage};

pub const BIND_ENV: &str = "TAMER_LAB_ADDR";
pub const DEFAULT_BIND: &str = "127.0.0.1:8080";

pub fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

enum Command {
    Client(ClientMessage),
    Malformed(String),
    Timeout { generation: u64, episode: usize, step: usize },
    Advance { generation: u64 },
    Snapshot(oneshot::Sender<ServerMessage>),
    ExportLog(oneshot::Sender<FeedbackLog>),
    Model(oneshot::Sender<RewardModel>),
}

#[derive(Clone)]
struct Handle {
    tx: mpsc::UnboundedSender<Command>,
    events: broadcast::Sender<ServerMessage>,
}

#[derive(Clone, Default)]
pub struct AppState {
    sessions: Arc<Mutex<HashMap<String, Handle>>>,
}

impl AppState {
    fn get(&self, id: &str) -> Option<Handle> {
        self.sessions.lock().expect("session table poisoned").get(id).cloned()
    }
}

pub fn router() -> Router {
    Router::new()
        .route("/healthz", get(|| async { "ok" }))
        .route("/sessions", post(create))
        .route("/sessions/{id}/ws", get(attach))
        .route("/sessions/{id}/log", get(log))
        .route("/sessions/{id}/model", get(model))
        .with_state(AppState::default())
}

// Every message is a small frame that should leave immediately.
fn no_delay(tcp: &mut tokio::net::TcpStream) {
    let _ = tcp.set_nodelay(true);
}

/// Binds to `addr` and serves until the task is dropped.
pub async fn serve(addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener.tap_io(no_delay), router()).await
}

/// Binds an ephemeral port and serves in the background.
pub async fn spawn_ephemeral() -> std::io::Result<SocketAddr> {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await?;
    let addr = listener.local_addr()?;
    tokio::spawn(async move { axum::serve(listener.tap_io(no_delay), router()).await });
    Ok(addr)
}

async fn create(State(app): State<AppState>, body: Option<Json<SessionConfig>>) -> Response {
    let cfg = body.map(|Json(c)| c).unwrap_or_default();
    let session = match create_session(cfg) {
        Ok(s) => s,
        Err(e) => {
            let body = json!({ "code": ErrorCode::InvalidConfig, "message": e.to_string() });
            return (StatusCode::BAD_REQUEST, Json(body)).into_response();
        }
    };
    let id = session.id().to_string();
    let (tx, rx) = mpsc::unbounded_channel();
    let (events, _) = broadcast::channel(1024);
    let handle = Handle { tx: tx.clone(), events: events.clone() };
    app.sessions.lock().expect("session table poisoned").insert(id.clone(), handle);
    tokio::spawn(run_actor(session, rx, tx, events));
    (StatusCode::CREATED, Json(json!({ "id": id }))).into_response()
}

async fn log(State(app): State<AppState>, Path(id): Path<String>) -> Response {
    let Some(h) = app.get(&id) else {
        return StatusCode::NOT_FOUND.into_response();
    };
    let (reply, rx) = oneshot::channel();
    if h.tx.send(Command::ExportLog(reply)).is_err() {
        return StatusCode::GONE.into_response();
    }
    match rx.await.map_err(|e| e.to_string()).and_then(|l| logs_to_string(&[l]).map_err(|e| e.to_string())) {
        Ok(text) => ([(header::CONTENT_TYPE, "application/x-ndjson")], text).into_response(),
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, e).into_response(),
    }
}

async fn model(State(app): State<AppState>, Path(id): Path<String>) -> Response {
    let Some(h) = app.get(&id) else {
        return StatusCode::NOT_FOUND.into_response();
    };
    let (reply, rx) = oneshot::channel();
    if h.tx.send(Command::Model(reply)).is_err() {
        return StatusCode::GONE.into_response();
    }
    match rx.await {
        Ok(m) => Json(m).into_response(),
        Err(_) => StatusCode::GONE.into_response(),
    }
}

async fn attach(ws: WebSocketUpgrade, State(app): State<AppState>, Path(id): Path<String>) -> Response {
    match app.get(&id) {
        Some(h) => ws.on_upgrade(move |socket| pump(socket, h)),
        None => StatusCode::NOT_FOUND.into_response(),
    }
}

async fn pump(socket: WebSocket, h: Handle) {
    let (mut sink, mut stream) = socket.split();
    // Subscribe before asking for the snapshot; anything the snapshot already
    // covers is skipped by seq.
    let mut events = h.events.subscribe();
    let (reply, snapshot) = oneshot::channel();
    if h.tx.send(Command::Snapshot(reply)).is_err() {
        return;
    }
    let Ok(snapshot) = snapshot.await else {
        return;
    };

    let outbound = tokio::spawn(async move {
        let mut seen = snapshot.seq();
        if send_json(&mut sink, &snapshot).await.is_err() {
            return;
        }
        loop {
            match events.recv().await {
                Ok(msg) if msg.seq() <= seen => continue,
                Ok(msg) => {
                    seen = msg.seq();
                    if send_json(&mut sink, &msg).await.is_err() {
                        break;
                    }
                }
                Err(broadcast::error::RecvError::Lagged(_)) => continue,
                Err(broadcast::error::RecvError::Closed) => break,
            }
        }
    });

    while let Some(Ok(frame)) = stream.next().await {
        let cmd = match frame {
            Message::Text(text) => match serde_json::from_str::<ClientMessage>(&text) {
                Ok(m) => Command::Client(m),
                Err(e) => Command::Malformed(e.to_string()),
            },
            Message::Close(_) => break,
            _ => continue,
        };
        if h.tx.send(cmd).is_err() {
            break;
        }
    }
    outbound.abort();
}

async fn send_json(
    sink: &mut futures::stream::SplitSink<WebSocket, Message>,
    msg: &ServerMessage,
) -> Result<(), axum::Error> {
    let text = serde_json::to_string(msg).expect("server messages serialize");
    sink.send(Message::Text(text.into())).await
}

async fn run_actor(
    mut session: Session,
    mut rx: mpsc::UnboundedReceiver<Command>,
    tx: mpsc::UnboundedSender<Command>,
    events: broadcast::Sender<ServerMessage>,
) {
    // Bumped on reset/configure so timers from before are ignored.
    let mut generation = 0u64;
    let mut scheduled = None;
    while let Some(cmd) = rx.recv().await {
        let now = now_ms();
        let out = match cmd {
            Command::Client(msg) => {
                if matches!(msg, ClientMessage::Reset | ClientMessage::Configure(_)) {
                    generation += 1;
                }
                session.handle(msg, now)
            }
            Command::Malformed(detail) => {
                let r = crate::session::Rejection { code: ErrorCode::Malformed, message: detail };
                vec![session.error_message(r)]
            }
            Command::Timeout { generation: g, episode, step } => {
                if g == generation && session.pending_key() == Some((episode, step)) {
                    match session.window_timeout(now) {
                        Ok(out) => out,
                        Err(_) => {
                            // Woke a little before the wall-clock deadline.
                            schedule(&session, &tx, generation);
                            Vec::new()
                        }
                    }
                } else {
                    Vec::new()
                }
            }
            Command::Advance { generation: g } => {
                if g == generation {
                    session.advance(now).unwrap_or_default()
                } else {
                    Vec::new()
                }
            }
            Command::Snapshot(reply) => {
                let _ = reply.send(session.snapshot());
                Vec::new()
            }
            Command::ExportLog(reply) => {
                let _ = reply.send(session.export_log());
                Vec::new()
            }
            Command::Model(reply) => {
                let _ = reply.send(session.model().clone());
                Vec::new()
            }
        };
        if out.is_empty() {
            continue;
        }
        for msg in out {
            let _ = events.send(msg);
        }
        // One timer per distinct phase, however many messages it produced.
        let key = (generation, session.events().len(), session.phase());
        if scheduled != Some(key) {
            scheduled = Some(key);
            schedule(&session, &tx, generation);
        }
    }
}

fn schedule(session: &Session, tx: &mpsc::UnboundedSender<Command>, generation: u64) {
    match session.phase() {
        Phase::AwaitingFeedback { deadline: Some(d) } => {
            let (episode, step) = session.pending_key().expect("awaiting phase has a pending move");
            let wait = Duration::from_millis(d.saturating_sub(now_ms()));
            let tx = tx.clone();
            tokio::spawn(async move {
                tokio::time::sleep(wait).await;
                let _ = tx.send(Command::Timeout { generation, episode, step });
            });
        }
        Phase::Animating | Phase::EpisodeDone => {
            let delay = session.config().step_delay_ms;
            if delay == 0 {
                let _ = tx.send(Command::Advance { generation });
            } else {
                let tx = tx.clone();
                tokio::spawn(async move {
                    tokio::time::sleep(Duration::from_millis(delay)).await;
                    let _ = tx.send(Command::Advance { generation });
                });
            }
        }
        _ => {}
    }
}

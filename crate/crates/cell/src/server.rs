//! WebSocket session service.
//!
//! Each connection to `GET /ws` opens a new session. Messages on one
//! session are handled one at a time; sessions do not share state.
//! `GET /sessions/{id}/log` serves a session's event log as JSONL, also
//! after its connection has closed.

use std::collections::HashMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use anyhow::Context;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use hrc_core::intent::InterpreterBackend;
use hrc_core::orchestrator::TaskController;
use hrc_core::sensor::CellScene;
use hrc_core::session::{Session, SessionConfig};
use hrc_core::wire::{self, Envelope, ServerMessage};

pub struct ServerConfig {
    pub controller: Arc<TaskController>,
    pub interpreter: Arc<dyn InterpreterBackend>,
    /// Scenes selectable with `load_scenario`; the first is loaded on connect.
    pub scenes: Vec<CellScene>,
    /// Each session's log is also appended to `<dir>/<session_id>.jsonl`.
    pub log_dir: Option<PathBuf>,
}

struct Slot {
    session: Session,
    flushed: usize,
}

pub struct AppState {
    config: ServerConfig,
    sessions: Mutex<HashMap<String, Arc<Mutex<Slot>>>>,
    next_id: AtomicU64,
}

impl AppState {
    pub fn new(config: ServerConfig) -> Arc<Self> {
        Arc::new(Self {
            config,
            sessions: Mutex::new(HashMap::new()),
            next_id: AtomicU64::new(1),
        })
    }

    fn open_session(&self) -> (String, Arc<Mutex<Slot>>) {
        let id = format!("s{}", self.next_id.fetch_add(1, Ordering::Relaxed));
        let scene = self.config.scenes.first().cloned().unwrap_or_else(CellScene::fault_free);
        let session_config = SessionConfig {
            scenes: self.config.scenes.clone(),
            ..Default::default()
        };
        let session = Session::new(
            id.clone(),
            self.config.controller.clone(),
            self.config.interpreter.clone(),
            scene,
            session_config,
        );
        let slot = Arc::new(Mutex::new(Slot { session, flushed: 0 }));
        self.sessions.lock().unwrap().insert(id.clone(), slot.clone());
        (id, slot)
    }

    fn session(&self, id: &str) -> Option<Arc<Mutex<Slot>>> {
        self.sessions.lock().unwrap().get(id).cloned()
    }

    fn flush(&self, slot: &mut Slot) {
        let Some(dir) = &self.config.log_dir else {
            return;
        };
        let pending = &slot.session.log()[slot.flushed..];
        if pending.is_empty() {
            return;
        }
        let path = dir.join(format!("{}.jsonl", slot.session.id()));
        let written = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .and_then(|mut f| f.write_all(wire::to_jsonl(pending).as_bytes()));
        match written {
            Ok(()) => slot.flushed = slot.session.log().len(),
            Err(e) => tracing::warn!("writing {}: {e}", path.display()),
        }
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/ws", get(ws_upgrade))
        .route("/sessions", get(list_sessions))
        .route("/sessions/{id}/log", get(session_log))
        .with_state(state)
}

/// Binds `addr` and serves until the process is stopped.
pub async fn serve(config: ServerConfig, addr: SocketAddr) -> anyhow::Result<()> {
    if let Some(dir) = &config.log_dir {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .with_context(|| format!("binding {addr}"))?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(AppState::new(config))).await?;
    Ok(())
}

async fn list_sessions(State(state): State<Arc<AppState>>) -> Json<Vec<String>> {
    let mut ids: Vec<String> = state.sessions.lock().unwrap().keys().cloned().collect();
    ids.sort();
    Json(ids)
}

async fn session_log(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Response {
    match state.session(&id) {
        Some(slot) => {
            let body = wire::to_jsonl(slot.lock().unwrap().session.log());
            ([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response()
        }
        None => (StatusCode::NOT_FOUND, format!("no session {id}\n")).into_response(),
    }
}

async fn ws_upgrade(State(state): State<Arc<AppState>>, ws: WebSocketUpgrade) -> Response {
    ws.on_upgrade(move |socket| run_socket(state, socket))
}

async fn send_all(socket: &mut WebSocket, out: Vec<Envelope<ServerMessage>>) -> bool {
    for msg in out {
        let text = serde_json::to_string(&msg).expect("server messages serialize");
        if socket.send(Message::Text(text.into())).await.is_err() {
            return false;
        }
    }
    true
}

async fn run_socket(state: Arc<AppState>, mut socket: WebSocket) {
    let (id, slot) = state.open_session();
    tracing::info!(session = %id, "opened");
    let hello = {
        let mut s = slot.lock().unwrap();
        let out = s.session.hello();
        state.flush(&mut s);
        out
    };
    if !send_all(&mut socket, hello).await {
        return;
    }

    while let Some(Ok(msg)) = socket.recv().await {
        let text = match msg {
            Message::Text(t) => t.to_string(),
            Message::Binary(_) => "<binary frame>".to_string(),
            Message::Close(_) => break,
            Message::Ping(_) | Message::Pong(_) => continue,
        };
        let (state2, slot2) = (state.clone(), slot.clone());
        // External interpreters block on HTTP.
        let out = tokio::task::spawn_blocking(move || {
            let mut s = slot2.lock().unwrap();
            let out = s.session.handle_text(&text);
            state2.flush(&mut s);
            out
        })
        .await;
        match out {
            Ok(out) => {
                if !send_all(&mut socket, out).await {
                    break;
                }
            }
            Err(e) => {
                tracing::error!(session = %id, "handler panicked: {e}");
                break;
            }
        }
    }
    tracing::info!(session = %id, "closed");
}

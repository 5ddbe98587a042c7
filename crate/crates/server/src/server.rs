use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::{Html, IntoResponse};
use axum::routing::get;
use axum::Router;
use tokio::net::TcpListener;
use tokio::sync::{broadcast, mpsc, oneshot, watch};
use tower_http::services::ServeDir;

use crate::protocol::{ControlMessage, ServerMessage};
use crate::session::{RunMode, Session};

#[derive(Debug, thiserror::Error)]
pub enum ServerError {
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        source: std::io::Error,
    },
    #[error("server failed: {0}")]
    Runtime(String),
}

#[derive(Clone, Debug)]
pub struct ServeConfig {
    pub addr: SocketAddr,
    /// Directory holding the static UI bundle. A placeholder page is served
    /// when it is absent.
    pub ui_dir: Option<PathBuf>,
}

#[derive(Clone)]
struct Shared {
    control: mpsc::UnboundedSender<ControlMessage>,
    frames: broadcast::Sender<Arc<str>>,
    hello: watch::Receiver<ServerMessage>,
}

pub struct RunningServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    http_stop: Option<oneshot::Sender<()>>,
    http: tokio::task::JoinHandle<()>,
    sim: Option<thread::JoinHandle<()>>,
}

impl RunningServer {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops the simulation loop and the HTTP listener.
    pub async fn shutdown(mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(tx) = self.http_stop.take() {
            let _ = tx.send(());
        }
        let _ = (&mut self.http).await;
        if let Some(sim) = self.sim.take() {
            let _ = tokio::task::spawn_blocking(move || sim.join()).await;
        }
    }
}

const PLACEHOLDER: &str = "<!doctype html><title>genctl</title>\
<p>No UI bundle found. Connect a websocket client to <code>/ws</code>.</p>";

/// Binds `cfg.addr`, starts the simulation thread and serves `/ws` plus the
/// static UI. Fails immediately if the port is taken.
pub async fn start(session: Session, cfg: ServeConfig) -> Result<RunningServer, ServerError> {
    let listener = TcpListener::bind(cfg.addr)
        .await
        .map_err(|source| ServerError::Bind { addr: cfg.addr, source })?;
    let addr = listener
        .local_addr()
        .map_err(|source| ServerError::Bind { addr: cfg.addr, source })?;

    let (control_tx, control_rx) = mpsc::unbounded_channel();
    let (frames_tx, _) = broadcast::channel(256);
    let (hello_tx, hello_rx) = watch::channel(session.hello());
    let stop = Arc::new(AtomicBool::new(false));

    let sim = {
        let frames = frames_tx.clone();
        let stop = stop.clone();
        thread::Builder::new()
            .name("genctl-sim".into())
            .spawn(move || simulate(session, control_rx, frames, hello_tx, stop))
            .map_err(|e| ServerError::Runtime(e.to_string()))?
    };

    let shared = Shared {
        control: control_tx,
        frames: frames_tx,
        hello: hello_rx,
    };
    let mut app = Router::new().route("/ws", get(upgrade)).with_state(shared);
    app = match cfg.ui_dir.filter(|d| d.is_dir()) {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app.route("/", get(|| async { Html(PLACEHOLDER) })),
    };

    let (http_stop, http_stopped) = oneshot::channel::<()>();
    let http = tokio::spawn(async move {
        let _ = axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = http_stopped.await;
            })
            .await;
    });

    Ok(RunningServer {
        addr,
        stop,
        http_stop: Some(http_stop),
        http,
        sim: Some(sim),
    })
}

/// The single writer of session state. Control messages are drained
/// between frames, in arrival order.
fn simulate(
    mut session: Session,
    mut control: mpsc::UnboundedReceiver<ControlMessage>,
    frames: broadcast::Sender<Arc<str>>,
    hello: watch::Sender<ServerMessage>,
    stop: Arc<AtomicBool>,
) {
    let mut next = Instant::now();
    while !stop.load(Ordering::SeqCst) {
        let mut changed = false;
        while let Ok(msg) = control.try_recv() {
            if let Err(message) = session.apply(msg) {
                let _ = frames.send(ServerMessage::Error { message }.to_json().into());
            }
            changed = true;
        }
        if changed {
            hello.send_replace(session.hello());
        }

        if session.mode() == RunMode::Paused {
            thread::sleep(Duration::from_millis(5));
            next = Instant::now();
            continue;
        }
        match session.step() {
            Ok(frame) => {
                let _ = frames.send(frame.to_json().into());
            }
            Err(e) => {
                let message = format!("simulation error, episode restarted: {e}");
                let _ = frames.send(ServerMessage::Error { message }.to_json().into());
                let _ = session.apply(ControlMessage::Reset);
            }
        }

        let period = Duration::from_secs_f64(session.frame_period());
        next += period;
        let now = Instant::now();
        if next > now {
            thread::sleep(next - now);
        } else if now - next > period {
            // Fell behind by more than a frame: drop the debt instead of bursting.
            next = now;
        }
    }
}

async fn upgrade(ws: WebSocketUpgrade, State(shared): State<Shared>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| client(socket, shared))
}

async fn client(mut socket: WebSocket, shared: Shared) {
    let mut frames = shared.frames.subscribe();
    let hello = shared.hello.borrow().to_json();
    if socket.send(Message::Text(hello.into())).await.is_err() {
        return;
    }
    loop {
        tokio::select! {
            incoming = socket.recv() => match incoming {
                Some(Ok(Message::Text(text))) => match ControlMessage::parse(text.as_str()) {
                    Ok(msg) => {
                        if shared.control.send(msg).is_err() {
                            return;
                        }
                    }
                    Err(message) => {
                        let reply = ServerMessage::Error { message }.to_json();
                        if socket.send(Message::Text(reply.into())).await.is_err() {
                            return;
                        }
                    }
                },
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => return,
                Some(Ok(_)) => {}
            },
            frame = frames.recv() => match frame {
                Ok(json) => {
                    if socket.send(Message::Text(json.as_ref().into())).await.is_err() {
                        return;
                    }
                }
                Err(broadcast::error::RecvError::Lagged(_)) => {}
                Err(broadcast::error::RecvError::Closed) => return,
            },
        }
    }
}

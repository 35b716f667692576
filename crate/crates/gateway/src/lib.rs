//! WebSocket service running one engine session per connection.
//!
//! Clients connect to `/ws`, send `session.start`, then stream recognized
//! speech; the server mirrors every engine trace entry back as a frame.
//! The wire format is described in `PROTOCOL.md`.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use axum::extract::ws::WebSocketUpgrade;
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::Router;
use tokio::net::TcpListener;

use bargein_core::SessionConfig;
use bargein_llm::LlmConfig;

pub mod protocol;
mod session;

pub use protocol::{ClientMessage, ServerMessage, PROTOCOL_VERSION};

#[derive(Debug, Clone, Default)]
pub struct GatewayConfig {
    /// Defaults that `session.start` configs are merged over.
    pub session: SessionConfig,
    /// Model endpoint for sessions that ask for an external classifier or
    /// planner.
    pub llm: Option<LlmConfig>,
    /// Where to write each session's trace when it ends.
    pub trace_dir: Option<PathBuf>,
}

pub struct GatewayState {
    config: GatewayConfig,
    next_session: AtomicU64,
}

impl GatewayState {
    pub fn new(config: GatewayConfig) -> Arc<Self> {
        Arc::new(Self {
            config,
            next_session: AtomicU64::new(1),
        })
    }
}

pub fn router(state: Arc<GatewayState>) -> Router {
    Router::new()
        .route("/ws", get(upgrade))
        .route("/health", get(|| async { "ok" }))
        .with_state(state)
}

async fn upgrade(ws: WebSocketUpgrade, State(state): State<Arc<GatewayState>>) -> impl IntoResponse {
    let id = format!("s{}", state.next_session.fetch_add(1, Ordering::Relaxed));
    ws.on_upgrade(move |socket| session::run(socket, state, id))
}

/// Serves until the listener fails.
pub async fn serve(listener: TcpListener, config: GatewayConfig) -> std::io::Result<()> {
    axum::serve(listener, router(GatewayState::new(config))).await
}

/// Binds `addr` and serves in the background; returns the bound address.
pub async fn spawn(addr: SocketAddr, config: GatewayConfig) -> std::io::Result<SocketAddr> {
    let listener = TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    tokio::spawn(async move {
        if let Err(e) = serve(listener, config).await {
            tracing::error!(error = %e, "gateway stopped");
        }
    });
    Ok(local)
}

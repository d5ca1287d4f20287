//! WebSocket front door for a joinery session: LAN announce, handshake,
//! command ingress into the single engine queue and event fan-out.

mod actor;
pub mod client;
mod clock;
mod conn;
pub mod discovery;
pub mod protocol;

use std::fs::File;
use std::io::BufWriter;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use joinery_core::pipeline::{Pipeline, PipelineError};
use joinery_core::session::{ConfigError, Session, SessionConfig};
use joinery_core::PartCatalog;
use tokio::net::TcpListener;
use tokio::sync::{mpsc, oneshot};
use tokio::task::JoinHandle;

use actor::{Actor, Ingress};
use discovery::{Announce, AnnounceError, AnnounceTarget};

pub use actor::Inspection;
pub use client::{ClientError, ProtocolClient};
pub use clock::Clock;

pub const DEFAULT_LISTEN: &str = "0.0.0.0:7474";
pub const DEFAULT_IDLE_TIMEOUT: Duration = Duration::from_secs(30);
pub const DEFAULT_RESUME_WINDOW: Duration = Duration::from_secs(300);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PipelineTick {
    /// Background ticks at a fixed period.
    Every(Duration),
    /// Only [`ServerHandle::tick_pipeline`] advances jobs.
    Manual,
}

#[derive(Clone, Debug)]
pub struct ServerConfig {
    pub listen: SocketAddr,
    pub announce: Option<AnnounceTarget>,
    pub idle_timeout: Duration,
    pub resume_window: Duration,
    pub pipeline_tick: PipelineTick,
    pub clock: Clock,
    /// NDJSON event log, truncated on start.
    pub log_path: Option<PathBuf>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            listen: DEFAULT_LISTEN.parse().expect("valid default"),
            announce: Some(AnnounceTarget::broadcast(discovery::DEFAULT_ANNOUNCE_PORT)),
            idle_timeout: DEFAULT_IDLE_TIMEOUT,
            resume_window: DEFAULT_RESUME_WINDOW,
            pipeline_tick: PipelineTick::Every(Duration::from_millis(250)),
            clock: Clock::wall(),
            log_path: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ServerError {
    #[error("cannot listen on {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Announce(#[from] AnnounceError),
    #[error("cannot open event log {path}: {source}")]
    Log {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("server has stopped")]
    Stopped,
}

/// A running server. Dropping the handle leaves it running until the
/// runtime shuts down; call [`ServerHandle::shutdown`] to stop it cleanly.
pub struct ServerHandle {
    addr: SocketAddr,
    ingress: mpsc::UnboundedSender<Ingress>,
    clock: Clock,
    actor: JoinHandle<()>,
    background: Vec<JoinHandle<()>>,
}

pub async fn start(
    catalog: Arc<PartCatalog>,
    session_config: SessionConfig,
    config: ServerConfig,
) -> Result<ServerHandle, ServerError> {
    let pipeline = Arc::new(Pipeline::from_config(&session_config.pipeline, catalog.lexicon())?);
    let assets = session_config.pipeline.asset_dir.clone();
    let session_name = session_config.session_name.clone();
    let session = Session::new(catalog, session_config)?;
    let log = match &config.log_path {
        Some(path) => Some(BufWriter::new(File::create(path).map_err(|source| ServerError::Log {
            path: path.display().to_string(),
            source,
        })?)),
        None => None,
    };
    let listener = TcpListener::bind(config.listen)
        .await
        .map_err(|source| ServerError::Bind {
            addr: config.listen,
            source,
        })?;
    let addr = listener.local_addr().map_err(|source| ServerError::Bind {
        addr: config.listen,
        source,
    })?;
    let datagram = Announce::new(session_name, addr.port()).encode()?;

    let (tx, rx) = mpsc::unbounded_channel();
    let actor = Actor::new(
        session,
        pipeline.clone(),
        config.clock.clone(),
        log,
        config.resume_window,
    );
    let actor = tokio::spawn(actor.run(rx));

    let mut background = Vec::new();
    let idle = config.idle_timeout;
    let accept_tx = tx.clone();
    background.push(tokio::spawn(async move {
        let mut next_conn = 0;
        loop {
            match listener.accept().await {
                Ok((stream, peer)) => {
                    next_conn += 1;
                    tracing::debug!(conn = next_conn, %peer, "accepted");
                    let _ = stream.set_nodelay(true);
                    tokio::spawn(conn::serve(stream, next_conn, accept_tx.clone(), idle, assets.clone()));
                }
                Err(e) => {
                    tracing::warn!("accept failed: {e}");
                    tokio::time::sleep(Duration::from_millis(50)).await;
                }
            }
        }
    }));
    if let Some(target) = config.announce {
        background.push(tokio::spawn(discovery::announce_loop(target, datagram)));
    }
    if let PipelineTick::Every(period) = config.pipeline_tick {
        let tick_tx = tx.clone();
        background.push(tokio::spawn(async move {
            let mut ticker = tokio::time::interval(period);
            loop {
                ticker.tick().await;
                if tick_tx.is_closed() {
                    return;
                }
                if !pipeline.has_pending() {
                    continue;
                }
                let p = pipeline.clone();
                let results = tokio::task::spawn_blocking(move || {
                    p.tick();
                    p.drain()
                })
                .await
                .unwrap_or_default();
                if !results.is_empty() && tick_tx.send(Ingress::Results(results)).is_err() {
                    return;
                }
            }
        }));
    }
    tracing::info!(%addr, "listening");
    Ok(ServerHandle {
        addr,
        ingress: tx,
        clock: config.clock,
        actor,
        background,
    })
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// `ws://` url for connecting over loopback (or the bound address).
    pub fn url(&self) -> String {
        let addr = if self.addr.ip().is_unspecified() {
            SocketAddr::from(([127, 0, 0, 1], self.addr.port()))
        } else {
            self.addr
        };
        format!("ws://{addr}")
    }

    pub fn clock(&self) -> &Clock {
        &self.clock
    }

    pub async fn inspect(&self) -> Result<Inspection, ServerError> {
        let (reply, rx) = oneshot::channel();
        self.ingress
            .send(Ingress::Inspect { reply })
            .map_err(|_| ServerError::Stopped)?;
        rx.await.map_err(|_| ServerError::Stopped)
    }

    /// Ticks the pipeline once and ingests what it delivered before
    /// returning.
    pub async fn tick_pipeline(&self) -> Result<(), ServerError> {
        let (reply, rx) = oneshot::channel();
        self.ingress
            .send(Ingress::Tick { reply })
            .map_err(|_| ServerError::Stopped)?;
        rx.await.map_err(|_| ServerError::Stopped)
    }

    /// Closes every connection, flushes the log and stops all tasks.
    pub async fn shutdown(self) {
        for task in &self.background {
            task.abort();
        }
        let (reply, rx) = oneshot::channel();
        if self.ingress.send(Ingress::Shutdown { reply }).is_ok() {
            let _ = rx.await;
        }
        let _ = self.actor.await;
    }

    /// Resolves when the server stops on its own (it normally never does).
    pub async fn wait(&mut self) {
        let _ = (&mut self.actor).await;
    }
}

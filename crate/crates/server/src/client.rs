//! Native protocol client, used by the simulator and the tests.

use std::time::Duration;

use futures_util::{SinkExt, StreamExt};
use joinery_core::session::{replay_onto, Action, Event, ReplayError, Role, UserId, WorldState};
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::{self, Message};
use tokio_tungstenite::{MaybeTlsStream, WebSocketStream};

use crate::protocol::{
    encode, ClientFrame, ClientMessage, ServerFrame, ServerMessage, SnapshotPayload, Welcome,
    WireError, PROTOCOL_VERSION,
};

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("websocket: {0}")]
    Ws(#[from] tungstenite::Error),
    #[error("server rejected us: {} {}", .0.code_str(), .0.message)]
    Rejected(WireError),
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("connection closed")]
    Closed,
    #[error("timed out waiting for the server")]
    Timeout,
}

impl WireError {
    fn code_str(&self) -> String {
        serde_json::to_value(self.code)
            .ok()
            .and_then(|v| v.as_str().map(str::to_owned))
            .unwrap_or_default()
    }
}

pub struct ProtocolClient {
    ws: WebSocketStream<MaybeTlsStream<TcpStream>>,
    next_seq: u64,
    welcome: Welcome,
    base: SnapshotPayload,
    events: Vec<Event>,
    event_frames: Vec<String>,
    errors: Vec<WireError>,
    timeout: Duration,
}

impl ProtocolClient {
    pub async fn connect(url: &str, name: &str) -> Result<Self, ClientError> {
        Self::connect_with(url, PROTOCOL_VERSION, name, None).await
    }

    pub async fn connect_with(
        url: &str,
        protocol_version: u32,
        name: &str,
        resume: Option<UserId>,
    ) -> Result<Self, ClientError> {
        let (mut ws, _) = tokio_tungstenite::connect_async(url).await?;
        let hello = ClientFrame {
            seq: 1,
            message: ClientMessage::Hello {
                protocol_version,
                name: name.to_owned(),
                resume,
            },
        };
        ws.send(Message::text(encode(&hello))).await?;
        let timeout = Duration::from_secs(10);
        let frame = match tokio::time::timeout(timeout, ws.next()).await {
            Err(_) => return Err(ClientError::Timeout),
            Ok(None) => return Err(ClientError::Closed),
            Ok(Some(m)) => m?,
        };
        let Message::Text(text) = frame else {
            return Err(ClientError::Protocol(format!("expected welcome, got {frame:?}")));
        };
        let frame: ServerFrame =
            serde_json::from_str(&text).map_err(|e| ClientError::Protocol(e.to_string()))?;
        match frame.message {
            ServerMessage::Welcome(welcome) => Ok(ProtocolClient {
                ws,
                next_seq: 2,
                base: welcome.snapshot.clone(),
                welcome,
                events: Vec::new(),
                event_frames: Vec::new(),
                errors: Vec::new(),
                timeout,
            }),
            ServerMessage::Error(e) => Err(ClientError::Rejected(e)),
            other => Err(ClientError::Protocol(format!("expected welcome, got {other:?}"))),
        }
    }

    pub fn welcome(&self) -> &Welcome {
        &self.welcome
    }

    pub fn user_id(&self) -> &UserId {
        &self.welcome.user_id
    }

    pub fn role(&self) -> Role {
        self.welcome.role
    }

    /// Every event received so far, in order.
    pub fn events(&self) -> &[Event] {
        &self.events
    }

    /// Raw text of every `event` frame received so far.
    pub fn event_frames(&self) -> &[String] {
        &self.event_frames
    }

    pub fn errors(&self) -> &[WireError] {
        &self.errors
    }

    /// The latest snapshot with every later event folded in.
    pub fn view(&self) -> Result<WorldState, ReplayError> {
        let after: Vec<Event> = self
            .events
            .iter()
            .filter(|e| e.seq > self.base.event_seq)
            .cloned()
            .collect();
        replay_onto(self.base.state.clone(), &after)
    }

    /// Sends a frame with an explicit seq, without touching the counter.
    pub async fn send_raw(&mut self, seq: u64, message: ClientMessage) -> Result<(), ClientError> {
        let frame = ClientFrame { seq, message };
        self.ws.send(Message::text(encode(&frame))).await?;
        Ok(())
    }

    pub async fn send_text(&mut self, text: &str) -> Result<(), ClientError> {
        self.ws.send(Message::text(text)).await?;
        Ok(())
    }

    async fn send(&mut self, message: ClientMessage) -> Result<u64, ClientError> {
        let seq = self.next_seq;
        self.send_raw(seq, message).await?;
        self.next_seq += 1;
        Ok(seq)
    }

    /// Sends a command; returns its seq.
    pub async fn command(&mut self, action: Action) -> Result<u64, ClientError> {
        self.send(ClientMessage::Command(action)).await
    }

    /// Round trip through the server queue: on return, everything this
    /// client sent earlier has been processed and its events received.
    pub async fn ping(&mut self) -> Result<(), ClientError> {
        let seq = self.send(ClientMessage::Ping {}).await?;
        loop {
            if let ServerMessage::Pong { client_seq } = self.next_message().await? {
                if client_seq == seq {
                    return Ok(());
                }
            }
        }
    }

    pub async fn resync(&mut self) -> Result<(), ClientError> {
        self.send(ClientMessage::Resync {}).await?;
        loop {
            if let ServerMessage::Snapshot(_) = self.next_message().await? {
                return Ok(());
            }
        }
    }

    /// Reads events until one with `seq >= target` arrives.
    pub async fn wait_for_seq(&mut self, target: u64) -> Result<(), ClientError> {
        while self.last_seq() < target {
            self.next_message().await?;
        }
        Ok(())
    }

    pub fn last_seq(&self) -> u64 {
        self.events
            .last()
            .map(|e| e.seq)
            .unwrap_or(self.base.event_seq)
            .max(self.base.event_seq)
    }

    /// Reads one frame, recording events, errors and snapshots.
    pub async fn next_message(&mut self) -> Result<ServerMessage, ClientError> {
        loop {
            let next = tokio::time::timeout(self.timeout, self.ws.next())
                .await
                .map_err(|_| ClientError::Timeout)?;
            let message = match next {
                None => return Err(ClientError::Closed),
                Some(m) => m?,
            };
            let text = match message {
                Message::Text(text) => text,
                Message::Close(_) => return Err(ClientError::Closed),
                _ => continue,
            };
            let frame: ServerFrame =
                serde_json::from_str(&text).map_err(|e| ClientError::Protocol(e.to_string()))?;
            match &frame.message {
                ServerMessage::Event(event) => {
                    self.events.push(event.clone());
                    self.event_frames.push(text.to_string());
                }
                ServerMessage::Error(e) => self.errors.push(e.clone()),
                ServerMessage::Snapshot(s) => self.base = s.clone(),
                _ => {}
            }
            return Ok(frame.message);
        }
    }

    pub async fn close(mut self) -> Result<(), ClientError> {
        self.ws.close(None).await?;
        while let Some(Ok(_)) = self.ws.next().await {}
        Ok(())
    }
}

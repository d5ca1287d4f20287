//! JSON text frames exchanged over the WebSocket.
//!
//! Every frame is `{"seq":N,"type":..,"payload":{..}}`. Client frames carry a
//! per-connection seq starting at 1 with `hello`; server frames carry the
//! session's event seq (for `event` frames, the event's own seq).

use std::collections::BTreeMap;

use joinery_core::session::{Action, Event, Pose, Role, UserId, WorldState};
use joinery_core::Digest64;
use serde::{Deserialize, Serialize};

pub const PROTOCOL_VERSION: u32 = 1;

/// Where asset bytes are served over plain HTTP on the same port.
pub const ASSET_PATH: &str = "/assets/";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClientFrame {
    pub seq: u64,
    #[serde(flatten)]
    pub message: ClientMessage,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload", rename_all = "snake_case")]
pub enum ClientMessage {
    Hello {
        protocol_version: u32,
        name: String,
        /// Reclaims a recently disconnected user id (and its cards).
        #[serde(default, skip_serializing_if = "Option::is_none")]
        resume: Option<UserId>,
    },
    Command(Action),
    Ping {},
    /// Asks for a fresh snapshot, e.g. after a checkpoint mismatch.
    Resync {},
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ServerFrame {
    pub seq: u64,
    #[serde(flatten)]
    pub message: ServerMessage,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload", rename_all = "snake_case")]
pub enum ServerMessage {
    Welcome(Welcome),
    Event(Event),
    Snapshot(SnapshotPayload),
    Error(WireError),
    Pong { client_seq: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Welcome {
    pub user_id: UserId,
    pub role: Role,
    pub snapshot: SnapshotPayload,
    pub presence: BTreeMap<UserId, Pose>,
    pub asset_path: String,
}

/// Full world state as of `event_seq`. Re-serializing `state` yields the
/// canonical bytes that `digest` is computed over.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotPayload {
    pub event_seq: u64,
    pub digest: Digest64,
    pub state: WorldState,
}

impl SnapshotPayload {
    pub fn of(world: &WorldState) -> Self {
        SnapshotPayload {
            event_seq: world.last_event_seq,
            digest: world.digest(),
            state: world.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum WireErrorCode {
    VersionMismatch,
    SessionFull,
    Malformed,
    BadSeq,
}

impl WireErrorCode {
    /// Whether the server closes the connection after sending it.
    pub fn is_fatal(self) -> bool {
        !matches!(self, WireErrorCode::BadSeq)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WireError {
    pub code: WireErrorCode,
    pub message: String,
    #[serde(default)]
    pub client_seq: Option<u64>,
}

/// The `event` frame for `event`, built around its log line so every
/// connection (and the log) sees the same bytes.
pub fn event_frame(event: &Event) -> String {
    format!(
        r#"{{"seq":{},"type":"event","payload":{}}}"#,
        event.seq,
        event.to_line()
    )
}

/// Extracts the embedded log line from an `event` frame produced by
/// [`event_frame`].
pub fn event_line(frame: &str) -> Option<&str> {
    let rest = frame.strip_prefix(r#"{"seq":"#)?;
    let start = rest.find(r#","type":"event","payload":"#)?;
    let body = &rest[start + r#","type":"event","payload":"#.len()..];
    body.strip_suffix('}')
}

pub fn encode<T: Serialize>(frame: &T) -> String {
    serde_json::to_string(frame).expect("frames always serialize")
}

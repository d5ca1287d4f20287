use serde::{Deserialize, Serialize};

use crate::catalog::PartId;
use crate::digest::Digest64;
use crate::pipeline::AssetRef;

use super::world::{CardId, InstanceId, ModelId, Role, TaskId, UserId, Zone};

/// One line of the authoritative log: `{"seq":..,"type":..,"payload":{..}}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    #[serde(flatten)]
    pub kind: EventKind,
}

impl Event {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("events always serialize")
    }

    pub fn from_line(line: &str) -> serde_json::Result<Self> {
        serde_json::from_str(line)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ErrorCode {
    UnknownInstance,
    GrabConflict,
    NotHolder,
    NoRecipe,
    CardMismatch,
    CardSpent,
    BadState,
    BadSeq,
    UnknownUser,
    UnknownTask,
    UnknownModel,
    UnknownCard,
    SessionFull,
    InvalidArgument,
}

impl ErrorCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::UnknownInstance => "UNKNOWN_INSTANCE",
            ErrorCode::GrabConflict => "GRAB_CONFLICT",
            ErrorCode::NotHolder => "NOT_HOLDER",
            ErrorCode::NoRecipe => "NO_RECIPE",
            ErrorCode::CardMismatch => "CARD_MISMATCH",
            ErrorCode::CardSpent => "CARD_SPENT",
            ErrorCode::BadState => "BAD_STATE",
            ErrorCode::BadSeq => "BAD_SEQ",
            ErrorCode::UnknownUser => "UNKNOWN_USER",
            ErrorCode::UnknownTask => "UNKNOWN_TASK",
            ErrorCode::UnknownModel => "UNKNOWN_MODEL",
            ErrorCode::UnknownCard => "UNKNOWN_CARD",
            ErrorCode::SessionFull => "SESSION_FULL",
            ErrorCode::InvalidArgument => "INVALID_ARGUMENT",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload")]
pub enum EventKind {
    UserJoined {
        user_id: UserId,
        display_name: String,
        role: Role,
    },
    UserLeft {
        user_id: UserId,
        /// Instances the user was holding, now back in the character area.
        returned: Vec<InstanceId>,
        new_host: Option<UserId>,
    },
    TaskCreated {
        task_id: TaskId,
        owner: UserId,
        text: String,
    },
    CoreCharacterExtracted {
        task_id: TaskId,
        character: String,
    },
    TaskFailed {
        task_id: TaskId,
        reason: String,
    },
    ImageReady {
        task_id: TaskId,
        asset: AssetRef,
    },
    ModelJobStarted {
        model_id: ModelId,
        task_id: TaskId,
    },
    ModelReady {
        model_id: ModelId,
        asset: AssetRef,
    },
    ModelJobFailed {
        model_id: ModelId,
        reason: String,
    },
    PartGrabbed {
        instance_id: InstanceId,
        user_id: UserId,
    },
    PartReleased {
        instance_ids: Vec<InstanceId>,
        zone: Zone,
        user_id: UserId,
    },
    PartPlaced {
        instance_id: InstanceId,
        zone: Zone,
        user_id: UserId,
    },
    SpliceSucceeded {
        consumed: [InstanceId; 2],
        produced: InstanceId,
        part: PartId,
        user_id: UserId,
    },
    SpliceRejected {
        instance_a: InstanceId,
        instance_b: InstanceId,
        user_id: UserId,
    },
    VerificationSucceeded {
        card_id: CardId,
        task_id: TaskId,
        instance_id: InstanceId,
        character: String,
        owner: UserId,
    },
    VerificationFailed {
        instance_id: InstanceId,
        user_id: UserId,
        task_id: Option<TaskId>,
        expected: Option<String>,
        found: String,
    },
    ModelActivated {
        model_id: ModelId,
        card_id: CardId,
        user_id: UserId,
    },
    CardSpent {
        card_id: CardId,
    },
    PoseUpdated {
        user_id: UserId,
        x: f64,
        y: f64,
        yaw: f64,
    },
    /// Digest of the state after applying this event.
    Checkpoint {
        digest: Digest64,
    },
    Error {
        code: ErrorCode,
        user_id: Option<UserId>,
        client_seq: Option<u64>,
        message: String,
    },
}

impl EventKind {
    pub fn type_name(&self) -> &'static str {
        match self {
            EventKind::UserJoined { .. } => "UserJoined",
            EventKind::UserLeft { .. } => "UserLeft",
            EventKind::TaskCreated { .. } => "TaskCreated",
            EventKind::CoreCharacterExtracted { .. } => "CoreCharacterExtracted",
            EventKind::TaskFailed { .. } => "TaskFailed",
            EventKind::ImageReady { .. } => "ImageReady",
            EventKind::ModelJobStarted { .. } => "ModelJobStarted",
            EventKind::ModelReady { .. } => "ModelReady",
            EventKind::ModelJobFailed { .. } => "ModelJobFailed",
            EventKind::PartGrabbed { .. } => "PartGrabbed",
            EventKind::PartReleased { .. } => "PartReleased",
            EventKind::PartPlaced { .. } => "PartPlaced",
            EventKind::SpliceSucceeded { .. } => "SpliceSucceeded",
            EventKind::SpliceRejected { .. } => "SpliceRejected",
            EventKind::VerificationSucceeded { .. } => "VerificationSucceeded",
            EventKind::VerificationFailed { .. } => "VerificationFailed",
            EventKind::ModelActivated { .. } => "ModelActivated",
            EventKind::CardSpent { .. } => "CardSpent",
            EventKind::PoseUpdated { .. } => "PoseUpdated",
            EventKind::Checkpoint { .. } => "Checkpoint",
            EventKind::Error { .. } => "Error",
        }
    }

    pub fn error_code(&self) -> Option<ErrorCode> {
        match self {
            EventKind::Error { code, .. } => Some(*code),
            _ => None,
        }
    }
}

use serde::{Deserialize, Serialize};

use super::world::{CardId, InstanceId, ModelId, TaskId, UserId, Zone};

/// A client intent plus its envelope.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Command {
    pub issuer: UserId,
    /// Strictly increasing per issuer.
    pub client_seq: u64,
    /// Server receive time in milliseconds; only pose throttling reads it.
    #[serde(default)]
    pub at_ms: u64,
    pub action: Action,
}

impl Command {
    pub fn new(issuer: impl Into<UserId>, client_seq: u64, action: Action) -> Self {
        Command {
            issuer: issuer.into(),
            client_seq,
            at_ms: 0,
            action,
        }
    }

    pub fn at(mut self, at_ms: u64) -> Self {
        self.at_ms = at_ms;
        self
    }
}

impl From<String> for UserId {
    fn from(s: String) -> Self {
        UserId::new(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Action {
    Join { name: String },
    Leave,
    Speak { text: String },
    GenerateModel { task_id: TaskId },
    Grab { instance_id: InstanceId },
    Release { zone: Zone },
    Splice { instance_a: InstanceId, instance_b: InstanceId },
    PlaceInZone { instance_id: InstanceId, zone: Zone },
    ActivateModel { model_id: ModelId, card_id: CardId },
    PoseUpdate { x: f64, y: f64, yaw: f64 },
}

impl Action {
    pub fn name(&self) -> &'static str {
        match self {
            Action::Join { .. } => "join",
            Action::Leave => "leave",
            Action::Speak { .. } => "speak",
            Action::GenerateModel { .. } => "generate_model",
            Action::Grab { .. } => "grab",
            Action::Release { .. } => "release",
            Action::Splice { .. } => "splice",
            Action::PlaceInZone { .. } => "place_in_zone",
            Action::ActivateModel { .. } => "activate_model",
            Action::PoseUpdate { .. } => "pose_update",
        }
    }
}

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::catalog::PartId;
use crate::digest::Digest64;
use crate::pipeline::AssetRef;

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                $name(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                $name(s.to_owned())
            }
        }
    };
}

string_id!(UserId);
string_id!(
    /// Server-assigned, `i<n>` from the session counter.
    InstanceId
);
string_id!(TaskId);
string_id!(CardId);
string_id!(ModelId);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Zone {
    SpeechArea,
    ModelArea,
    CharacterArea,
    /// The green area; logically inside the character area.
    VerificationZone,
}

impl Zone {
    pub fn within_character_area(self) -> bool {
        matches!(self, Zone::CharacterArea | Zone::VerificationZone)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Host,
    Client,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserRecord {
    pub display_name: String,
    pub role: Role,
    /// Event seq of the join; the earliest remaining joiner inherits Host.
    pub joined_seq: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Location {
    InZone(Zone),
    HeldBy(UserId),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartInstance {
    pub part: PartId,
    pub location: Location,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LearningTask {
    pub owner: UserId,
    /// Event seq of the creating `TaskCreated`; orders tasks by recency.
    pub created_seq: u64,
    pub raw_text: String,
    pub core_character: Option<String>,
    pub image: Option<AssetRef>,
    pub model: Option<ModelId>,
    pub card_issued: bool,
    pub failed: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CardState {
    Unspent,
    Spent,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundCard {
    pub character: String,
    pub state: CardState,
    pub owner: UserId,
    pub task_id: TaskId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelState {
    Generating,
    Unactivated,
    Activated,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelEntity {
    pub task_id: TaskId,
    pub asset: Option<AssetRef>,
    pub state: ModelState,
}

/// Number of ids handed out so far, per kind.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub instances: u64,
    pub tasks: u64,
    pub cards: u64,
    pub models: u64,
}

impl Counters {
    pub fn next_instance(&self) -> InstanceId {
        InstanceId(format!("i{}", self.instances + 1))
    }

    pub fn next_task(&self) -> TaskId {
        TaskId(format!("t{}", self.tasks + 1))
    }

    pub fn next_card(&self) -> CardId {
        CardId(format!("c{}", self.cards + 1))
    }

    pub fn next_model(&self) -> ModelId {
        ModelId(format!("m{}", self.models + 1))
    }
}

/// The authoritative shared scene.
///
/// Field order and map ordering are fixed, so the JSON encoding is canonical.
/// Presence (poses) is carried beside the state and is not part of the
/// canonical encoding.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub last_event_seq: u64,
    pub last_checkpoint_seq: u64,
    pub users: BTreeMap<UserId, UserRecord>,
    pub instances: BTreeMap<InstanceId, PartInstance>,
    pub tasks: BTreeMap<TaskId, LearningTask>,
    pub cards: BTreeMap<CardId, RoundCard>,
    pub models: BTreeMap<ModelId, ModelEntity>,
    pub counters: Counters,
    #[serde(skip)]
    pub presence: BTreeMap<UserId, Pose>,
}

/// Canonical bytes of a [`WorldState`] plus their digest.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Snapshot {
    pub event_seq: u64,
    pub bytes: Vec<u8>,
    pub digest: Digest64,
}

impl WorldState {
    pub fn canonical_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("world state always serializes")
    }

    pub fn digest(&self) -> Digest64 {
        Digest64::of(&self.canonical_bytes())
    }

    pub fn snapshot(&self) -> Snapshot {
        let bytes = self.canonical_bytes();
        Snapshot {
            event_seq: self.last_event_seq,
            digest: Digest64::of(&bytes),
            bytes,
        }
    }

    pub fn from_canonical_bytes(bytes: &[u8]) -> serde_json::Result<Self> {
        serde_json::from_slice(bytes)
    }

    pub fn host(&self) -> Option<&UserId> {
        self.users
            .iter()
            .find(|(_, u)| u.role == Role::Host)
            .map(|(id, _)| id)
    }

    pub fn held_by<'a>(&'a self, user: &'a UserId) -> impl Iterator<Item = &'a InstanceId> + 'a {
        self.instances
            .iter()
            .filter(move |(_, inst)| inst.location == Location::HeldBy(user.clone()))
            .map(|(id, _)| id)
    }
}

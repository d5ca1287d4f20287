//! Deterministic multi-user session: world state, commands, the event log
//! and the state machine that turns one into the other.

mod apply;
mod command;
mod config;
mod engine;
mod event;
mod replay;
mod world;

pub use apply::{apply, ApplyError};
pub use command::{Action, Command};
pub use config::{ConfigError, SessionConfig, SpawnEntry, DEFAULT_MAX_USERS};
pub use engine::{initial_world, Outcome, Session, CHECKPOINT_INTERVAL, MAX_SPEECH_CHARS, POSE_INTERVAL_MS};
pub use event::{ErrorCode, Event, EventKind};
pub use replay::{read_log, replay, replay_onto, ReplayError};
pub use world::{
    CardId, CardState, Counters, InstanceId, LearningTask, Location, ModelEntity, ModelId,
    ModelState, PartInstance, Pose, Role, RoundCard, Snapshot, TaskId, UserId, UserRecord,
    WorldState, Zone,
};

use std::io::BufRead;

use crate::catalog::PartCatalog;
use crate::digest::Digest64;

use super::apply::{apply, ApplyError};
use super::config::{ConfigError, SessionConfig};
use super::engine::initial_world;
use super::event::{Event, EventKind};
use super::world::WorldState;

#[derive(Debug, thiserror::Error)]
pub enum ReplayError {
    #[error("malformed event log line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error(transparent)]
    Apply(#[from] ApplyError),
    #[error("checkpoint at seq {seq} records {recorded}, replay computed {computed}")]
    CheckpointMismatch {
        seq: u64,
        recorded: Digest64,
        computed: Digest64,
    },
    #[error("event {seq} references part {part} missing from the catalog")]
    UnknownPart { seq: u64, part: String },
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// Rebuilds the world from the session's initial configuration and its log.
pub fn replay(
    catalog: &PartCatalog,
    config: &SessionConfig,
    events: &[Event],
) -> Result<WorldState, ReplayError> {
    config.validate(catalog)?;
    for event in events {
        if let EventKind::SpliceSucceeded { part, .. } = &event.kind {
            if catalog.part(part).is_none() {
                return Err(ReplayError::UnknownPart {
                    seq: event.seq,
                    part: part.to_string(),
                });
            }
        }
    }
    replay_onto(initial_world(config), events)
}

/// Applies `events` on top of an existing state (e.g. a join snapshot),
/// checking every embedded checkpoint digest.
pub fn replay_onto(mut world: WorldState, events: &[Event]) -> Result<WorldState, ReplayError> {
    for event in events {
        apply(&mut world, event)?;
        if let EventKind::Checkpoint { digest } = &event.kind {
            let computed = world.digest();
            if computed != *digest {
                return Err(ReplayError::CheckpointMismatch {
                    seq: event.seq,
                    recorded: *digest,
                    computed,
                });
            }
        }
    }
    Ok(world)
}

/// Parses an NDJSON event log. Blank lines are skipped.
pub fn read_log(reader: impl BufRead) -> Result<Vec<Event>, ReplayError> {
    let mut events = Vec::new();
    for (index, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| ReplayError::Malformed {
            line: index + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let event = Event::from_line(&line).map_err(|e| ReplayError::Malformed {
            line: index + 1,
            message: e.to_string(),
        })?;
        events.push(event);
    }
    Ok(events)
}

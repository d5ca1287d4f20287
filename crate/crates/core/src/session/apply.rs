//! The fold `state(n) = apply(state(n-1), event(n))`.
//!
//! Live sessions mutate state exclusively through [`apply`], so a replayed
//! log reproduces the live state by construction.

use super::event::{Event, EventKind};
use super::world::{
    CardState, LearningTask, Location, ModelEntity, ModelState, PartInstance, Pose, Role,
    RoundCard, UserRecord, WorldState, Zone,
};

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ApplyError {
    #[error("event seq {found} does not follow {expected}")]
    Gap { expected: u64, found: u64 },
    #[error("event {seq} ({event}) references unknown {what} {id}")]
    Dangling {
        seq: u64,
        event: &'static str,
        what: &'static str,
        id: String,
    },
    #[error("event {seq} ({event}) is inconsistent with the current state: {detail}")]
    Inconsistent {
        seq: u64,
        event: &'static str,
        detail: String,
    },
}

pub fn apply(world: &mut WorldState, event: &Event) -> Result<(), ApplyError> {
    let expected = world.last_event_seq + 1;
    if event.seq != expected {
        return Err(ApplyError::Gap {
            expected,
            found: event.seq,
        });
    }
    let seq = event.seq;
    let name = event.kind.type_name();
    let dangling = |what: &'static str, id: &dyn std::fmt::Display| ApplyError::Dangling {
        seq,
        event: name,
        what,
        id: id.to_string(),
    };
    let inconsistent = |detail: &str| ApplyError::Inconsistent {
        seq,
        event: name,
        detail: detail.to_owned(),
    };

    match &event.kind {
        EventKind::UserJoined {
            user_id,
            display_name,
            role,
        } => {
            if world.users.contains_key(user_id) {
                return Err(inconsistent("user already present"));
            }
            world.users.insert(
                user_id.clone(),
                UserRecord {
                    display_name: display_name.clone(),
                    role: *role,
                    joined_seq: seq,
                },
            );
        }
        EventKind::UserLeft {
            user_id,
            returned,
            new_host,
        } => {
            world
                .users
                .remove(user_id)
                .ok_or_else(|| dangling("user", user_id))?;
            world.presence.remove(user_id);
            for id in returned {
                let inst = world
                    .instances
                    .get_mut(id)
                    .ok_or_else(|| dangling("instance", id))?;
                inst.location = Location::InZone(Zone::CharacterArea);
            }
            if let Some(host) = new_host {
                world
                    .users
                    .get_mut(host)
                    .ok_or_else(|| dangling("user", host))?
                    .role = Role::Host;
            }
        }
        EventKind::TaskCreated {
            task_id,
            owner,
            text,
        } => {
            world.tasks.insert(
                task_id.clone(),
                LearningTask {
                    owner: owner.clone(),
                    created_seq: seq,
                    raw_text: text.clone(),
                    core_character: None,
                    image: None,
                    model: None,
                    card_issued: false,
                    failed: None,
                },
            );
            world.counters.tasks += 1;
        }
        EventKind::CoreCharacterExtracted { task_id, character } => {
            let task = world
                .tasks
                .get_mut(task_id)
                .ok_or_else(|| dangling("task", task_id))?;
            task.core_character = Some(character.clone());
        }
        EventKind::TaskFailed { task_id, reason } => {
            let task = world
                .tasks
                .get_mut(task_id)
                .ok_or_else(|| dangling("task", task_id))?;
            task.failed = Some(reason.clone());
        }
        EventKind::ImageReady { task_id, asset } => {
            let task = world
                .tasks
                .get_mut(task_id)
                .ok_or_else(|| dangling("task", task_id))?;
            task.image = Some(asset.clone());
        }
        EventKind::ModelJobStarted { model_id, task_id } => {
            let task = world
                .tasks
                .get_mut(task_id)
                .ok_or_else(|| dangling("task", task_id))?;
            task.model = Some(model_id.clone());
            world.models.insert(
                model_id.clone(),
                ModelEntity {
                    task_id: task_id.clone(),
                    asset: None,
                    state: ModelState::Generating,
                },
            );
            world.counters.models += 1;
        }
        EventKind::ModelReady { model_id, asset } => {
            let model = world
                .models
                .get_mut(model_id)
                .ok_or_else(|| dangling("model", model_id))?;
            if model.state != ModelState::Generating {
                return Err(inconsistent("model is not generating"));
            }
            model.state = ModelState::Unactivated;
            model.asset = Some(asset.clone());
        }
        EventKind::ModelJobFailed { model_id, .. } => {
            let model = world
                .models
                .remove(model_id)
                .ok_or_else(|| dangling("model", model_id))?;
            if let Some(task) = world.tasks.get_mut(&model.task_id) {
                task.model = None;
            }
        }
        EventKind::PartGrabbed {
            instance_id,
            user_id,
        } => {
            let inst = world
                .instances
                .get_mut(instance_id)
                .ok_or_else(|| dangling("instance", instance_id))?;
            inst.location = Location::HeldBy(user_id.clone());
        }
        EventKind::PartReleased {
            instance_ids, zone, ..
        } => {
            for id in instance_ids {
                let inst = world
                    .instances
                    .get_mut(id)
                    .ok_or_else(|| dangling("instance", id))?;
                inst.location = Location::InZone(*zone);
            }
        }
        EventKind::PartPlaced {
            instance_id, zone, ..
        } => {
            let inst = world
                .instances
                .get_mut(instance_id)
                .ok_or_else(|| dangling("instance", instance_id))?;
            inst.location = Location::InZone(*zone);
        }
        EventKind::SpliceSucceeded {
            consumed,
            produced,
            part,
            user_id,
        } => {
            for id in consumed {
                world
                    .instances
                    .remove(id)
                    .ok_or_else(|| dangling("instance", id))?;
            }
            world.instances.insert(
                produced.clone(),
                PartInstance {
                    part: part.clone(),
                    location: Location::HeldBy(user_id.clone()),
                },
            );
            world.counters.instances += 1;
        }
        EventKind::VerificationSucceeded {
            card_id,
            task_id,
            character,
            owner,
            ..
        } => {
            let task = world
                .tasks
                .get_mut(task_id)
                .ok_or_else(|| dangling("task", task_id))?;
            task.card_issued = true;
            world.cards.insert(
                card_id.clone(),
                RoundCard {
                    character: character.clone(),
                    state: CardState::Unspent,
                    owner: owner.clone(),
                    task_id: task_id.clone(),
                },
            );
            world.counters.cards += 1;
        }
        EventKind::ModelActivated { model_id, .. } => {
            let model = world
                .models
                .get_mut(model_id)
                .ok_or_else(|| dangling("model", model_id))?;
            if model.state != ModelState::Unactivated {
                return Err(inconsistent("model is not unactivated"));
            }
            model.state = ModelState::Activated;
        }
        EventKind::CardSpent { card_id } => {
            let card = world
                .cards
                .get_mut(card_id)
                .ok_or_else(|| dangling("card", card_id))?;
            if card.state == CardState::Spent {
                return Err(inconsistent("card already spent"));
            }
            card.state = CardState::Spent;
        }
        EventKind::PoseUpdated { user_id, x, y, yaw } => {
            world.presence.insert(
                user_id.clone(),
                Pose {
                    x: *x,
                    y: *y,
                    yaw: *yaw,
                },
            );
        }
        EventKind::Checkpoint { .. } => {
            world.last_checkpoint_seq = seq;
        }
        EventKind::SpliceRejected { .. }
        | EventKind::VerificationFailed { .. }
        | EventKind::Error { .. } => {}
    }
    world.last_event_seq = seq;
    Ok(())
}

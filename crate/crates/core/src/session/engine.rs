use std::collections::BTreeMap;
use std::sync::Arc;

use crate::catalog::PartCatalog;
use crate::composition::CompositionError;
use crate::digest::Digest64;
use crate::pipeline::{PipelineRequest, PipelineResult};

use super::apply::apply;
use super::command::{Action, Command};
use super::config::{ConfigError, SessionConfig};
use super::event::{ErrorCode, Event, EventKind};
use super::world::{
    CardId, CardState, InstanceId, Location, ModelId, ModelState, PartInstance, Role, Snapshot,
    TaskId, UserId, WorldState, Zone,
};

/// Minimum spacing between accepted pose updates from one user (10 per second).
pub const POSE_INTERVAL_MS: u64 = 100;
/// A `Checkpoint` event is appended once this many events accumulate.
pub const CHECKPOINT_INTERVAL: u64 = 50;
pub const MAX_SPEECH_CHARS: usize = 512;

/// Events emitted by one transition, plus work for the generation pipeline.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Outcome {
    pub events: Vec<Event>,
    pub requests: Vec<PipelineRequest>,
}

#[derive(Clone, Debug, Default)]
struct IssuerGuard {
    last_seq: u64,
    last_pose_ms: Option<u64>,
}

/// Authoritative session state machine.
///
/// All mutation goes through [`apply`] on the events this type emits, so the
/// world is always the fold of its own log.
#[derive(Clone, Debug)]
pub struct Session {
    catalog: Arc<PartCatalog>,
    config: SessionConfig,
    world: WorldState,
    guards: BTreeMap<UserId, IssuerGuard>,
}

/// The world before any event: spawned instances, no users.
pub fn initial_world(config: &SessionConfig) -> WorldState {
    let mut world = WorldState::default();
    for entry in &config.spawn {
        for _ in 0..entry.count {
            let id = world.counters.next_instance();
            world.instances.insert(
                id,
                PartInstance {
                    part: entry.part.clone(),
                    location: Location::InZone(Zone::CharacterArea),
                },
            );
            world.counters.instances += 1;
        }
    }
    world
}

impl Session {
    pub fn new(catalog: Arc<PartCatalog>, config: SessionConfig) -> Result<Self, ConfigError> {
        config.validate(&catalog)?;
        Ok(Session {
            world: initial_world(&config),
            catalog,
            config,
            guards: BTreeMap::new(),
        })
    }

    pub fn world(&self) -> &WorldState {
        &self.world
    }

    pub fn catalog(&self) -> &Arc<PartCatalog> {
        &self.catalog
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn snapshot(&self) -> Snapshot {
        self.world.snapshot()
    }

    pub fn digest(&self) -> Digest64 {
        self.world.digest()
    }

    /// Last accepted client seq for `user`, if connected.
    pub fn last_client_seq(&self, user: &UserId) -> Option<u64> {
        self.guards.get(user).map(|g| g.last_seq)
    }

    pub fn handle_command(&mut self, cmd: &Command) -> Outcome {
        let mut out = Outcome::default();
        self.dispatch(cmd, &mut out);
        self.maybe_checkpoint(&mut out);
        out
    }

    pub fn ingest_pipeline_result(&mut self, result: &PipelineResult) -> Outcome {
        let mut out = Outcome::default();
        self.ingest(result, &mut out);
        self.maybe_checkpoint(&mut out);
        out
    }

    fn emit(&mut self, out: &mut Outcome, kind: EventKind) {
        let event = Event {
            seq: self.world.last_event_seq + 1,
            kind,
        };
        apply(&mut self.world, &event).expect("engine emits only applicable events");
        out.events.push(event);
    }

    fn reject(&mut self, out: &mut Outcome, cmd: &Command, code: ErrorCode, message: impl Into<String>) {
        self.emit(
            out,
            EventKind::Error {
                code,
                user_id: Some(cmd.issuer.clone()),
                client_seq: Some(cmd.client_seq),
                message: message.into(),
            },
        );
    }

    fn system_error(&mut self, out: &mut Outcome, code: ErrorCode, message: impl Into<String>) {
        self.emit(
            out,
            EventKind::Error {
                code,
                user_id: None,
                client_seq: None,
                message: message.into(),
            },
        );
    }

    fn maybe_checkpoint(&mut self, out: &mut Outcome) {
        if self.world.last_event_seq < self.world.last_checkpoint_seq + CHECKPOINT_INTERVAL {
            return;
        }
        self.emit(
            out,
            EventKind::Checkpoint {
                digest: Digest64::default(),
            },
        );
        let digest = self.world.digest();
        if let Some(Event {
            kind: EventKind::Checkpoint { digest: slot },
            ..
        }) = out.events.last_mut()
        {
            *slot = digest;
        }
    }

    fn dispatch(&mut self, cmd: &Command, out: &mut Outcome) {
        let present = self.world.users.contains_key(&cmd.issuer);
        if let (Action::Join { name }, false) = (&cmd.action, present) {
            return self.join(cmd, name, out);
        }
        if !present {
            return self.reject(out, cmd, ErrorCode::UnknownUser, "issuer has not joined");
        }
        let guard = self.guards.entry(cmd.issuer.clone()).or_default();
        if cmd.client_seq <= guard.last_seq {
            let last = guard.last_seq;
            return self.reject(
                out,
                cmd,
                ErrorCode::BadSeq,
                format!("client_seq {} not after {}", cmd.client_seq, last),
            );
        }
        guard.last_seq = cmd.client_seq;

        match &cmd.action {
            Action::Join { .. } => self.reject(out, cmd, ErrorCode::BadState, "already joined"),
            Action::Leave => self.leave(cmd, out),
            Action::Speak { text } => self.speak(cmd, text, out),
            Action::GenerateModel { task_id } => self.generate_model(cmd, task_id, out),
            Action::Grab { instance_id } => self.grab(cmd, instance_id, out),
            Action::Release { zone } => self.release(cmd, *zone, out),
            Action::Splice {
                instance_a,
                instance_b,
            } => self.splice(cmd, instance_a, instance_b, out),
            Action::PlaceInZone { instance_id, zone } => self.place(cmd, instance_id, *zone, out),
            Action::ActivateModel { model_id, card_id } => self.activate(cmd, model_id, card_id, out),
            Action::PoseUpdate { x, y, yaw } => self.pose(cmd, *x, *y, *yaw, out),
        }
    }

    fn join(&mut self, cmd: &Command, name: &str, out: &mut Outcome) {
        if self.world.users.len() >= self.config.max_users {
            return self.reject(out, cmd, ErrorCode::SessionFull, "session is full");
        }
        self.guards.insert(
            cmd.issuer.clone(),
            IssuerGuard {
                last_seq: cmd.client_seq,
                last_pose_ms: None,
            },
        );
        let role = if self.world.host().is_some() {
            Role::Client
        } else {
            Role::Host
        };
        let display_name = if name.trim().is_empty() {
            cmd.issuer.to_string()
        } else {
            name.to_owned()
        };
        self.emit(
            out,
            EventKind::UserJoined {
                user_id: cmd.issuer.clone(),
                display_name,
                role,
            },
        );
    }

    fn leave(&mut self, cmd: &Command, out: &mut Outcome) {
        let returned: Vec<InstanceId> = self.world.held_by(&cmd.issuer).cloned().collect();
        let was_host = self.world.users[&cmd.issuer].role == Role::Host;
        let new_host = if was_host {
            self.world
                .users
                .iter()
                .filter(|(id, _)| **id != cmd.issuer)
                .min_by_key(|(_, u)| u.joined_seq)
                .map(|(id, _)| id.clone())
        } else {
            None
        };
        self.guards.remove(&cmd.issuer);
        self.emit(
            out,
            EventKind::UserLeft {
                user_id: cmd.issuer.clone(),
                returned,
                new_host,
            },
        );
    }

    fn speak(&mut self, cmd: &Command, text: &str, out: &mut Outcome) {
        let text = text.trim();
        let len = text.chars().count();
        if len == 0 || len > MAX_SPEECH_CHARS {
            return self.reject(
                out,
                cmd,
                ErrorCode::InvalidArgument,
                format!("speech text must be 1..={MAX_SPEECH_CHARS} characters"),
            );
        }
        let task_id = self.world.counters.next_task();
        self.emit(
            out,
            EventKind::TaskCreated {
                task_id: task_id.clone(),
                owner: cmd.issuer.clone(),
                text: text.to_owned(),
            },
        );
        out.requests.push(PipelineRequest::ExtractCoreCharacter {
            task_id,
            text: text.to_owned(),
        });
    }

    fn generate_model(&mut self, cmd: &Command, task_id: &TaskId, out: &mut Outcome) {
        let Some(task) = self.world.tasks.get(task_id) else {
            return self.reject(out, cmd, ErrorCode::UnknownTask, format!("no task {task_id}"));
        };
        let problem = if task.failed.is_some() {
            Some("task failed")
        } else if task.image.is_none() {
            Some("image not ready")
        } else if task.model.is_some() {
            Some("model already requested")
        } else {
            None
        };
        if let Some(problem) = problem {
            return self.reject(out, cmd, ErrorCode::BadState, format!("{task_id}: {problem}"));
        }
        let image = task.image.clone().expect("checked above");
        let model_id = self.world.counters.next_model();
        self.emit(
            out,
            EventKind::ModelJobStarted {
                model_id: model_id.clone(),
                task_id: task_id.clone(),
            },
        );
        out.requests.push(PipelineRequest::GenerateModel3d {
            model_id,
            task_id: task_id.clone(),
            image,
        });
    }

    fn grab(&mut self, cmd: &Command, instance_id: &InstanceId, out: &mut Outcome) {
        let Some(inst) = self.world.instances.get(instance_id) else {
            return self.reject(out, cmd, ErrorCode::UnknownInstance, format!("no instance {instance_id}"));
        };
        match &inst.location {
            Location::HeldBy(holder) if *holder == cmd.issuer => {
                self.reject(out, cmd, ErrorCode::BadState, format!("already holding {instance_id}"))
            }
            Location::HeldBy(holder) => {
                let message = format!("{instance_id} is held by {holder}");
                self.reject(out, cmd, ErrorCode::GrabConflict, message)
            }
            Location::InZone(_) => self.emit(
                out,
                EventKind::PartGrabbed {
                    instance_id: instance_id.clone(),
                    user_id: cmd.issuer.clone(),
                },
            ),
        }
    }

    fn release(&mut self, cmd: &Command, zone: Zone, out: &mut Outcome) {
        if zone == Zone::VerificationZone {
            return self.reject(
                out,
                cmd,
                ErrorCode::InvalidArgument,
                "use place_in_zone to submit a part for verification",
            );
        }
        let held: Vec<InstanceId> = self.world.held_by(&cmd.issuer).cloned().collect();
        if held.is_empty() {
            return self.reject(out, cmd, ErrorCode::NotHolder, "holding nothing");
        }
        self.emit(
            out,
            EventKind::PartReleased {
                instance_ids: held,
                zone,
                user_id: cmd.issuer.clone(),
            },
        );
    }

    fn splice(&mut self, cmd: &Command, a: &InstanceId, b: &InstanceId, out: &mut Outcome) {
        if a == b {
            return self.reject(out, cmd, ErrorCode::InvalidArgument, "cannot splice an instance with itself");
        }
        let (Some(inst_a), Some(inst_b)) = (self.world.instances.get(a), self.world.instances.get(b)) else {
            let missing = if self.world.instances.contains_key(a) { b } else { a };
            return self.reject(out, cmd, ErrorCode::UnknownInstance, format!("no instance {missing}"));
        };
        let held = |loc: &Location| *loc == Location::HeldBy(cmd.issuer.clone());
        let usable = |loc: &Location| held(loc) || *loc == Location::InZone(Zone::CharacterArea);
        if !(held(&inst_a.location) || held(&inst_b.location))
            || !(usable(&inst_a.location) && usable(&inst_b.location))
        {
            return self.reject(
                out,
                cmd,
                ErrorCode::NotHolder,
                "hold one part and take the other from your hand or the character area",
            );
        }
        match self.catalog.splice(&inst_a.part, &inst_b.part) {
            Ok(part) => {
                let produced = self.world.counters.next_instance();
                self.emit(
                    out,
                    EventKind::SpliceSucceeded {
                        consumed: [a.clone(), b.clone()],
                        produced,
                        part,
                        user_id: cmd.issuer.clone(),
                    },
                );
            }
            Err(CompositionError::NoRecipe(..)) => self.emit(
                out,
                EventKind::SpliceRejected {
                    instance_a: a.clone(),
                    instance_b: b.clone(),
                    user_id: cmd.issuer.clone(),
                },
            ),
            Err(e) => self.reject(out, cmd, ErrorCode::BadState, e.to_string()),
        }
    }

    /// Issuer's most recent task that has a core character and no card yet.
    fn verification_target(&self, user: &UserId) -> Option<(TaskId, String)> {
        self.world
            .tasks
            .iter()
            .filter(|(_, t)| {
                t.owner == *user && !t.card_issued && t.failed.is_none() && t.core_character.is_some()
            })
            .max_by_key(|(_, t)| t.created_seq)
            .map(|(id, t)| (id.clone(), t.core_character.clone().unwrap()))
    }

    fn place(&mut self, cmd: &Command, instance_id: &InstanceId, zone: Zone, out: &mut Outcome) {
        let Some(inst) = self.world.instances.get(instance_id) else {
            return self.reject(out, cmd, ErrorCode::UnknownInstance, format!("no instance {instance_id}"));
        };
        if inst.location != Location::HeldBy(cmd.issuer.clone()) {
            return self.reject(out, cmd, ErrorCode::NotHolder, format!("not holding {instance_id}"));
        }
        let part = inst.part.clone();
        self.emit(
            out,
            EventKind::PartPlaced {
                instance_id: instance_id.clone(),
                zone,
                user_id: cmd.issuer.clone(),
            },
        );
        if zone != Zone::VerificationZone {
            return;
        }
        let found = self
            .catalog
            .part(&part)
            .map(|p| p.label.clone())
            .unwrap_or_default();
        let Some((task_id, character)) = self.verification_target(&cmd.issuer) else {
            return self.emit(
                out,
                EventKind::VerificationFailed {
                    instance_id: instance_id.clone(),
                    user_id: cmd.issuer.clone(),
                    task_id: None,
                    expected: None,
                    found,
                },
            );
        };
        if self.catalog.verify_assembly(&part, &character) == Ok(true) {
            let card_id = self.world.counters.next_card();
            self.emit(
                out,
                EventKind::VerificationSucceeded {
                    card_id,
                    task_id,
                    instance_id: instance_id.clone(),
                    character,
                    owner: cmd.issuer.clone(),
                },
            );
        } else {
            self.emit(
                out,
                EventKind::VerificationFailed {
                    instance_id: instance_id.clone(),
                    user_id: cmd.issuer.clone(),
                    task_id: Some(task_id),
                    expected: Some(character),
                    found,
                },
            );
        }
    }

    fn activate(&mut self, cmd: &Command, model_id: &ModelId, card_id: &CardId, out: &mut Outcome) {
        let Some(model) = self.world.models.get(model_id) else {
            return self.reject(out, cmd, ErrorCode::UnknownModel, format!("no model {model_id}"));
        };
        let Some(card) = self.world.cards.get(card_id) else {
            return self.reject(out, cmd, ErrorCode::UnknownCard, format!("no card {card_id}"));
        };
        if model.state != ModelState::Unactivated {
            let message = format!("{model_id} is {:?}", model.state);
            return self.reject(out, cmd, ErrorCode::BadState, message);
        }
        if card.state == CardState::Spent {
            return self.reject(out, cmd, ErrorCode::CardSpent, format!("{card_id} already spent"));
        }
        if card.owner != cmd.issuer {
            return self.reject(out, cmd, ErrorCode::NotHolder, format!("{card_id} belongs to {}", card.owner));
        }
        let core = self
            .world
            .tasks
            .get(&model.task_id)
            .and_then(|t| t.core_character.as_deref());
        if core != Some(card.character.as_str()) {
            let message = format!(
                "card is for {:?}, model needs {:?}",
                card.character,
                core.unwrap_or("")
            );
            return self.reject(out, cmd, ErrorCode::CardMismatch, message);
        }
        self.emit(
            out,
            EventKind::ModelActivated {
                model_id: model_id.clone(),
                card_id: card_id.clone(),
                user_id: cmd.issuer.clone(),
            },
        );
        self.emit(out, EventKind::CardSpent { card_id: card_id.clone() });
    }

    fn pose(&mut self, cmd: &Command, x: f64, y: f64, yaw: f64, out: &mut Outcome) {
        if !(x.is_finite() && y.is_finite() && yaw.is_finite()) {
            return self.reject(out, cmd, ErrorCode::InvalidArgument, "pose must be finite");
        }
        let guard = self.guards.get_mut(&cmd.issuer).expect("joined users have guards");
        if let Some(last) = guard.last_pose_ms {
            if cmd.at_ms < last.saturating_add(POSE_INTERVAL_MS) {
                return;
            }
        }
        guard.last_pose_ms = Some(cmd.at_ms);
        self.emit(
            out,
            EventKind::PoseUpdated {
                user_id: cmd.issuer.clone(),
                x,
                y,
                yaw,
            },
        );
    }

    fn ingest(&mut self, result: &PipelineResult, out: &mut Outcome) {
        match result {
            PipelineResult::CoreCharacterExtracted { task_id, character } => {
                let Some(task) = self.world.tasks.get(task_id) else {
                    return self.system_error(out, ErrorCode::UnknownTask, format!("no task {task_id}"));
                };
                if task.core_character.is_some() || task.failed.is_some() {
                    return self.system_error(
                        out,
                        ErrorCode::BadState,
                        format!("{task_id} already resolved"),
                    );
                }
                if character.chars().count() != 1 {
                    self.system_error(
                        out,
                        ErrorCode::BadState,
                        format!("core character {character:?} is not exactly one character"),
                    );
                    return self.emit(
                        out,
                        EventKind::TaskFailed {
                            task_id: task_id.clone(),
                            reason: "core character is not exactly one character".into(),
                        },
                    );
                }
                self.emit(
                    out,
                    EventKind::CoreCharacterExtracted {
                        task_id: task_id.clone(),
                        character: character.clone(),
                    },
                );
                out.requests.push(PipelineRequest::GenerateImage {
                    task_id: task_id.clone(),
                    subject: character.clone(),
                });
            }
            PipelineResult::ExtractionFailed { task_id, reason }
            | PipelineResult::ImageFailed { task_id, reason } => {
                let Some(task) = self.world.tasks.get(task_id) else {
                    return self.system_error(out, ErrorCode::UnknownTask, format!("no task {task_id}"));
                };
                let awaiting = match result {
                    PipelineResult::ExtractionFailed { .. } => task.core_character.is_none(),
                    _ => task.core_character.is_some() && task.image.is_none(),
                };
                if task.failed.is_some() || !awaiting {
                    return self.system_error(
                        out,
                        ErrorCode::BadState,
                        format!("{task_id} cannot fail now"),
                    );
                }
                self.emit(
                    out,
                    EventKind::TaskFailed {
                        task_id: task_id.clone(),
                        reason: reason.clone(),
                    },
                );
            }
            PipelineResult::ImageReady { task_id, asset } => {
                let Some(task) = self.world.tasks.get(task_id) else {
                    return self.system_error(out, ErrorCode::UnknownTask, format!("no task {task_id}"));
                };
                if task.core_character.is_none() || task.image.is_some() || task.failed.is_some() {
                    return self.system_error(
                        out,
                        ErrorCode::BadState,
                        format!("{task_id} is not awaiting an image"),
                    );
                }
                self.emit(
                    out,
                    EventKind::ImageReady {
                        task_id: task_id.clone(),
                        asset: asset.clone(),
                    },
                );
            }
            PipelineResult::ModelReady { model_id, asset } => {
                let Some(model) = self.world.models.get(model_id) else {
                    return self.system_error(out, ErrorCode::UnknownModel, format!("no model {model_id}"));
                };
                if model.state != ModelState::Generating {
                    let message = format!("{model_id} is {:?}, not generating", model.state);
                    return self.system_error(out, ErrorCode::BadState, message);
                }
                self.emit(
                    out,
                    EventKind::ModelReady {
                        model_id: model_id.clone(),
                        asset: asset.clone(),
                    },
                );
            }
            PipelineResult::ModelFailed { model_id, reason } => {
                let Some(model) = self.world.models.get(model_id) else {
                    return self.system_error(out, ErrorCode::UnknownModel, format!("no model {model_id}"));
                };
                if model.state != ModelState::Generating {
                    let message = format!("{model_id} is {:?}, not generating", model.state);
                    return self.system_error(out, ErrorCode::BadState, message);
                }
                self.emit(
                    out,
                    EventKind::ModelJobFailed {
                        model_id: model_id.clone(),
                        reason: reason.clone(),
                    },
                );
            }
        }
    }
}

//! Randomized command generation and an in-process session driver.
//!
//! The generator mixes uniformly random (often invalid) commands with
//! "constructive" moves that follow the recipe table, so long runs reach
//! splices, verifications and activations rather than only error paths.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use std::collections::{BTreeMap, BTreeSet};

use crate::catalog::{PartCatalog, PartId};
use crate::pipeline::{Pipeline, PipelineConfig};
use crate::session::{
    apply, initial_world, Action, CardId, CardState, Command, Event, EventKind, InstanceId,
    Location, ModelState, Outcome, Role, Session, SessionConfig, SpawnEntry, UserId, WorldState,
    Zone,
};

pub const FIXTURE_CATALOG: &str = include_str!("../../../fixtures/catalog_mini.json");

pub fn fixture_catalog() -> Arc<PartCatalog> {
    Arc::new(PartCatalog::from_json(FIXTURE_CATALOG.as_bytes()).expect("fixture catalog is valid"))
}

/// A bench with every fixture primitive, several of each.
pub fn fixture_config() -> SessionConfig {
    let spawn = [
        ("P01", 2),
        ("P02", 2),
        ("P03", 2),
        ("P04", 3),
        ("P05", 2),
        ("P06", 2),
        ("P07", 1),
        ("P08", 3),
        ("P09", 2),
        ("P10", 1),
        ("P11", 1),
        ("P12", 1),
    ]
    .into_iter()
    .map(|(part, count)| SpawnEntry {
        part: PartId::from(part),
        count,
    })
    .collect();
    SessionConfig {
        spawn,
        session_name: "fixture".into(),
        ..SessionConfig::default()
    }
}

const PHRASES: &[&str] = &[
    "a cute cat",
    "a bright moon",
    "time to rest",
    "a sour plum",
    "protect me",
    "luxuriant grass",
    "zzz unknown zzz",
    "a kitten",
];

/// Produces commands for a fixed pool of users against live session state.
pub struct CommandGen {
    rng: ChaCha8Rng,
    users: Vec<UserId>,
    next_seq: Vec<u64>,
    at_ms: u64,
    partners: Option<Arc<BTreeMap<PartId, BTreeSet<PartId>>>>,
}

impl CommandGen {
    pub fn new(seed: u64, users: usize) -> Self {
        CommandGen {
            rng: ChaCha8Rng::seed_from_u64(seed),
            users: (1..=users).map(|i| UserId::new(format!("u{i}"))).collect(),
            next_seq: vec![1; users],
            at_ms: 0,
            partners: None,
        }
    }

    pub fn users(&self) -> &[UserId] {
        &self.users
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    fn stamp(&mut self, user: usize, action: Action) -> Command {
        let mut seq = self.next_seq[user];
        // Occasionally replay a stale seq.
        if seq > 2 && self.rng.gen_ratio(1, 60) {
            seq -= 2;
        } else {
            self.next_seq[user] += 1;
        }
        self.at_ms += self.rng.gen_range(0..80);
        Command {
            issuer: self.users[user].clone(),
            client_seq: seq,
            at_ms: self.at_ms,
            action,
        }
    }

    pub fn next(&mut self, session: &Session) -> Command {
        let world = session.world();
        let user = self.rng.gen_range(0..self.users.len());
        let me = self.users[user].clone();
        if !world.users.contains_key(&me) {
            // Mostly join; sometimes issue a command while absent.
            if self.rng.gen_ratio(9, 10) {
                return self.stamp(user, Action::Join { name: format!("name-{me}") });
            }
        }
        if self.rng.gen_ratio(1, 2) {
            if let Some(action) = self.constructive(session, &me) {
                return self.stamp(user, action);
            }
        }
        let action = self.random_action(session);
        self.stamp(user, action)
    }

    fn pick<T: Clone>(&mut self, items: &[T]) -> Option<T> {
        items.choose(&mut self.rng).cloned()
    }

    fn instance_ids(&mut self, session: &Session) -> Vec<InstanceId> {
        let mut ids: Vec<InstanceId> = session.world().instances.keys().cloned().collect();
        if self.rng.gen_ratio(1, 20) {
            ids.push(InstanceId::from("i999"));
        }
        ids
    }

    fn random_action(&mut self, session: &Session) -> Action {
        let world = session.world();
        let ids = self.instance_ids(session);
        let zones = [
            Zone::SpeechArea,
            Zone::ModelArea,
            Zone::CharacterArea,
            Zone::VerificationZone,
        ];
        match self.rng.gen_range(0..100) {
            0..=2 => Action::Leave,
            3..=5 => Action::Join { name: "again".into() },
            6..=13 => Action::Speak {
                text: self.pick(PHRASES).unwrap().to_owned(),
            },
            14..=19 => {
                let tasks: Vec<_> = world.tasks.keys().cloned().collect();
                match self.pick(&tasks) {
                    Some(task_id) => Action::GenerateModel { task_id },
                    None => Action::GenerateModel { task_id: "t404".into() },
                }
            }
            20..=39 => match self.pick(&ids) {
                Some(instance_id) => Action::Grab { instance_id },
                None => Action::Leave,
            },
            40..=46 => Action::Release {
                zone: *zones.choose(&mut self.rng).unwrap(),
            },
            47..=62 => {
                let a = self.pick(&ids);
                let b = self.pick(&ids);
                match (a, b) {
                    (Some(instance_a), Some(instance_b)) => Action::Splice {
                        instance_a,
                        instance_b,
                    },
                    _ => Action::Leave,
                }
            }
            63..=74 => match self.pick(&ids) {
                Some(instance_id) => Action::PlaceInZone {
                    instance_id,
                    zone: *zones.choose(&mut self.rng).unwrap(),
                },
                None => Action::Leave,
            },
            75..=84 => {
                let models: Vec<_> = world.models.keys().cloned().collect();
                let cards: Vec<_> = world.cards.keys().cloned().collect();
                Action::ActivateModel {
                    model_id: self.pick(&models).unwrap_or_else(|| "m404".into()),
                    card_id: self.pick(&cards).unwrap_or_else(|| "c404".into()),
                }
            }
            _ => Action::PoseUpdate {
                x: self.rng.gen_range(-5.0..5.0),
                y: self.rng.gen_range(-5.0..5.0),
                yaw: self.rng.gen_range(0.0..360.0),
            },
        }
    }

    /// Parts each part can be spliced with, computed once per catalog.
    fn partners(&mut self, catalog: &PartCatalog) -> Arc<BTreeMap<PartId, BTreeSet<PartId>>> {
        let table = self.partners.get_or_insert_with(|| {
            let mut table: BTreeMap<PartId, BTreeSet<PartId>> = BTreeMap::new();
            for a in catalog.parts() {
                for b in catalog.parts() {
                    if catalog.splice(&a.id, &b.id).is_ok() {
                        table.entry(a.id.clone()).or_default().insert(b.id.clone());
                    }
                }
            }
            Arc::new(table)
        });
        Arc::clone(table)
    }

    /// A move that makes progress toward some character, if one exists.
    fn constructive(&mut self, session: &Session, me: &UserId) -> Option<Action> {
        let world = session.world();
        let catalog = session.catalog();
        let partners = self.partners(catalog);
        let fits = |a: &PartId, b: &PartId| partners.get(a).is_some_and(|p| p.contains(b));
        let held: Vec<(&InstanceId, &PartId)> = world
            .instances
            .iter()
            .filter(|(_, i)| i.location == Location::HeldBy(me.clone()))
            .map(|(id, i)| (id, &i.part))
            .collect();
        let free: Vec<(&InstanceId, &PartId)> = world
            .instances
            .iter()
            .filter(|(_, i)| i.location == Location::InZone(Zone::CharacterArea))
            .map(|(id, i)| (id, &i.part))
            .collect();

        // Activate with an owned card.
        for (card_id, card) in &world.cards {
            if card.owner != *me || card.state != CardState::Unspent {
                continue;
            }
            for (model_id, model) in &world.models {
                let core = world.tasks[&model.task_id].core_character.as_deref();
                if model.state == ModelState::Unactivated && core == Some(card.character.as_str()) {
                    return Some(Action::ActivateModel {
                        model_id: model_id.clone(),
                        card_id: card_id.clone(),
                    });
                }
            }
        }
        // Request a model for an image-ready task.
        for (task_id, task) in &world.tasks {
            if task.image.is_some() && task.model.is_none() && task.failed.is_none() {
                return Some(Action::GenerateModel {
                    task_id: task_id.clone(),
                });
            }
        }
        // Submit a held part matching one of my pending targets.
        let targets: Vec<&str> = world
            .tasks
            .values()
            .filter(|t| t.owner == *me && !t.card_issued && t.failed.is_none())
            .filter_map(|t| t.core_character.as_deref())
            .collect();
        for (id, part) in &held {
            let label = &catalog.part(part)?.label;
            if targets.contains(&label.as_str()) {
                return Some(Action::PlaceInZone {
                    instance_id: (*id).clone(),
                    zone: Zone::VerificationZone,
                });
            }
        }
        // Splice a held part with a usable partner.
        for (a, pa) in &held {
            for (b, pb) in held.iter().chain(free.iter()) {
                if a != b && fits(pa, pb) {
                    return Some(Action::Splice {
                        instance_a: (*a).clone(),
                        instance_b: (*b).clone(),
                    });
                }
            }
        }
        // Pick up a free part that has a partner somewhere usable.
        let mut present: BTreeMap<&PartId, usize> = BTreeMap::new();
        for (_, part) in free.iter().chain(held.iter()) {
            *present.entry(*part).or_default() += 1;
        }
        let mut candidates = Vec::new();
        for (a, pa) in &free {
            let usable = partners.get(*pa).is_some_and(|ps| {
                ps.iter()
                    .any(|pb| present.get(pb).is_some_and(|n| *n > usize::from(pb == *pa)))
            });
            if usable {
                candidates.push((*a).clone());
            }
        }
        if world.tasks.values().all(|t| t.owner != *me) {
            return Some(Action::Speak {
                text: self.pick(&PHRASES[..6]).unwrap().to_owned(),
            });
        }
        self.pick(&candidates).map(|instance_id| Action::Grab { instance_id })
    }
}

/// Session plus mock pipeline, ticked every `tick_every` commands.
pub struct Driver {
    pub session: Session,
    pub pipeline: Pipeline,
    pub log: Vec<Event>,
    pub gen: CommandGen,
    tick_every: usize,
    steps: usize,
    _assets: tempfile::TempDir,
}

impl Driver {
    pub fn new(seed: u64, users: usize) -> Self {
        Self::with(fixture_catalog(), fixture_config(), seed, users)
    }

    pub fn with(catalog: Arc<PartCatalog>, config: SessionConfig, seed: u64, users: usize) -> Self {
        let assets = tempfile::tempdir().expect("temp dir");
        let pipeline_config = PipelineConfig {
            asset_dir: assets.path().to_path_buf(),
            mock_model_ticks: 1,
            ..config.pipeline.clone()
        };
        let pipeline = Pipeline::from_config(&pipeline_config, catalog.lexicon()).expect("mock pipeline");
        Driver {
            session: Session::new(catalog, config).expect("valid config"),
            pipeline,
            log: Vec::new(),
            gen: CommandGen::new(seed, users),
            tick_every: 3,
            steps: 0,
            _assets: assets,
        }
    }

    fn absorb(&mut self, outcome: Outcome) -> Vec<Event> {
        for request in outcome.requests {
            self.pipeline.submit(request);
        }
        self.log.extend(outcome.events.iter().cloned());
        outcome.events
    }

    /// Applies one generated command (and, on schedule, pipeline results).
    /// Returns the command and the events it produced; pipeline events are
    /// reported separately by [`Driver::pump`].
    pub fn step(&mut self) -> (Command, Vec<Event>) {
        let cmd = self.gen.next(&self.session);
        let outcome = self.session.handle_command(&cmd);
        self.steps += 1;
        (cmd, self.absorb(outcome))
    }

    pub fn pipeline_due(&self) -> bool {
        self.steps % self.tick_every == 0
    }

    /// Ticks the pipeline once and ingests everything it delivered,
    /// returning one event batch per delivered result.
    pub fn pump(&mut self) -> Vec<Vec<Event>> {
        self.pipeline.tick();
        let mut batches = Vec::new();
        for result in self.pipeline.drain() {
            let outcome = self.session.ingest_pipeline_result(&result);
            batches.push(self.absorb(outcome));
        }
        batches
    }

    /// Runs `commands` generated commands, pumping on schedule.
    pub fn run(&mut self, commands: usize) {
        for _ in 0..commands {
            self.step();
            if self.pipeline_due() {
                self.pump();
            }
        }
    }
}

/// Re-folds a log one event at a time, checking the session invariants on
/// every intermediate state.
pub struct Auditor {
    catalog: Arc<PartCatalog>,
    world: WorldState,
    minted: BTreeMap<CardId, usize>,
    pub states_checked: usize,
}

impl Auditor {
    pub fn new(catalog: Arc<PartCatalog>, config: &SessionConfig) -> Self {
        Auditor {
            catalog,
            world: initial_world(config),
            minted: BTreeMap::new(),
            states_checked: 0,
        }
    }

    pub fn world(&self) -> &WorldState {
        &self.world
    }

    pub fn observe_all(&mut self, events: &[Event]) -> Result<(), String> {
        events.iter().try_for_each(|e| self.observe(e))
    }

    pub fn observe(&mut self, event: &Event) -> Result<(), String> {
        let before = self.world.clone();
        apply(&mut self.world, event).map_err(|e| format!("apply failed: {e}"))?;
        let after = &self.world;
        let at = |msg: String| format!("after event {} ({}): {msg}", event.seq, event.kind.type_name());

        match &event.kind {
            EventKind::SpliceSucceeded { .. } => {
                if after.instances.len() + 1 != before.instances.len() {
                    return Err(at(format!(
                        "instance count went {} -> {}",
                        before.instances.len(),
                        after.instances.len()
                    )));
                }
            }
            EventKind::SpliceRejected { .. } | EventKind::Error { .. } => {
                let mut normalized = after.clone();
                normalized.last_event_seq = before.last_event_seq;
                if normalized != before {
                    return Err(at("state changed beyond event_seq".into()));
                }
            }
            EventKind::VerificationSucceeded {
                card_id,
                task_id,
                instance_id,
                character,
                ..
            } => {
                let part = &before
                    .instances
                    .get(instance_id)
                    .ok_or_else(|| at(format!("unknown instance {instance_id}")))?
                    .part;
                if self.catalog.verify_assembly(part, character) != Ok(true) {
                    return Err(at(format!("{part} does not assemble {character}")));
                }
                let core = before.tasks.get(task_id).and_then(|t| t.core_character.as_deref());
                if core != Some(character.as_str()) {
                    return Err(at(format!("card for {character} but task core is {core:?}")));
                }
                *self.minted.entry(card_id.clone()).or_default() += 1;
            }
            EventKind::ModelActivated { model_id, card_id, .. } => {
                if self.minted.get(card_id) != Some(&1) {
                    return Err(at(format!("{card_id} was not minted exactly once")));
                }
                let card = &before.cards[card_id];
                if card.state != CardState::Unspent {
                    return Err(at(format!("{card_id} already spent")));
                }
                let model = &before.models[model_id];
                let core = before.tasks[&model.task_id].core_character.as_deref();
                if core != Some(card.character.as_str()) || model.state != ModelState::Unactivated {
                    return Err(at(format!("{card_id} cannot activate {model_id}")));
                }
            }
            _ => {}
        }

        // Single holder: every holder is a present user. (A location holds
        // at most one user by construction.)
        for (id, inst) in &after.instances {
            if let Location::HeldBy(user) = &inst.location {
                if !after.users.contains_key(user) {
                    return Err(at(format!("{id} held by departed user {user}")));
                }
            }
        }
        let hosts = after.users.values().filter(|u| u.role == Role::Host).count();
        if hosts > 1 || (hosts == 0 && !after.users.is_empty()) {
            return Err(at(format!("{hosts} hosts among {} users", after.users.len())));
        }
        for (id, card) in &before.cards {
            if card.state == CardState::Spent && after.cards.get(id).map(|c| c.state) != Some(CardState::Spent) {
                return Err(at(format!("spent card {id} changed")));
            }
        }
        for (id, model) in &before.models {
            if model.state == ModelState::Activated
                && after.models.get(id).map(|m| m.state) != Some(ModelState::Activated)
            {
                return Err(at(format!("activated model {id} changed")));
            }
        }
        self.states_checked += 1;
        Ok(())
    }
}

pub mod oracle;

#![allow(dead_code)]

use std::time::Duration;

use joinery_core::session::{Action, Location, UserId, WorldState, Zone};
use joinery_core::testkit::{fixture_catalog, fixture_config};
use joinery_server::{start, Clock, PipelineTick, ProtocolClient, ServerConfig, ServerHandle};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

pub struct Harness {
    pub server: ServerHandle,
    pub dir: TempDir,
}

pub async fn boot(max_users: usize, tweak: impl FnOnce(&mut ServerConfig)) -> Harness {
    let dir = tempfile::tempdir().unwrap();
    let mut session = fixture_config();
    session.max_users = max_users;
    session.pipeline.asset_dir = dir.path().join("assets");
    session.pipeline.mock_model_ticks = 1;
    let mut config = ServerConfig {
        listen: "127.0.0.1:0".parse().unwrap(),
        announce: None,
        pipeline_tick: PipelineTick::Manual,
        clock: Clock::manual(),
        idle_timeout: Duration::from_secs(30),
        log_path: Some(dir.path().join("events.ndjson")),
        ..ServerConfig::default()
    };
    tweak(&mut config);
    let server = start(fixture_catalog(), session, config).await.unwrap();
    Harness { server, dir }
}

impl Harness {
    pub async fn client(&self, name: &str) -> ProtocolClient {
        ProtocolClient::connect(&self.server.url(), name).await.unwrap()
    }

    pub async fn digest(&self) -> joinery_core::Digest64 {
        self.server.inspect().await.unwrap().snapshot.digest
    }

    pub async fn last_seq(&self) -> u64 {
        self.server.inspect().await.unwrap().world.last_event_seq
    }

    /// Brings every client up to the server's latest event.
    pub async fn settle(&self, clients: &mut [ProtocolClient]) {
        for c in clients.iter_mut() {
            c.ping().await.unwrap();
        }
        let target = self.last_seq().await;
        for c in clients.iter_mut() {
            c.wait_for_seq(target).await.unwrap();
        }
    }
}

const PHRASES: &[&str] = &["a cute cat", "a bright moon", "time to rest", "a sour plum"];

/// A plausible next move for `me`, chosen from a (possibly stale) view.
pub fn random_action(rng: &mut ChaCha8Rng, view: &WorldState, me: &UserId) -> Action {
    let held: Vec<_> = view
        .instances
        .iter()
        .filter(|(_, i)| i.location == Location::HeldBy(me.clone()))
        .map(|(id, _)| id.clone())
        .collect();
    let free: Vec<_> = view
        .instances
        .iter()
        .filter(|(_, i)| i.location == Location::InZone(Zone::CharacterArea))
        .map(|(id, _)| id.clone())
        .collect();
    let roll: f64 = rng.gen();
    if held.len() >= 2 && roll < 0.5 {
        return Action::Splice {
            instance_a: held[0].clone(),
            instance_b: held[1].clone(),
        };
    }
    if !held.is_empty() && roll < 0.6 {
        return Action::PlaceInZone {
            instance_id: held[0].clone(),
            zone: Zone::VerificationZone,
        };
    }
    if !held.is_empty() && roll < 0.7 {
        return Action::Release {
            zone: Zone::CharacterArea,
        };
    }
    if roll < 0.78 {
        return Action::Speak {
            text: PHRASES.choose(rng).unwrap().to_string(),
        };
    }
    if roll < 0.85 {
        return Action::PoseUpdate {
            x: rng.gen_range(-1.0..1.0),
            y: rng.gen_range(-1.0..1.0),
            yaw: 0.0,
        };
    }
    let pool = if free.is_empty() || rng.gen_bool(0.2) {
        view.instances.keys().cloned().collect::<Vec<_>>()
    } else {
        free
    };
    match pool.choose(rng) {
        Some(id) => Action::Grab {
            instance_id: id.clone(),
        },
        None => Action::Speak {
            text: "a cute cat".into(),
        },
    }
}

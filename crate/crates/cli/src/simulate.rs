//! Runs a script against an in-process server, one loopback client per
//! script client.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use joinery_core::pipeline::PipelineMode;
use joinery_core::session::{read_log, replay, Action, Event, EventKind, SessionConfig};
use joinery_core::{Digest64, PartCatalog};
use joinery_server::{start, Clock, PipelineTick, ProtocolClient, ServerConfig, ServerError};
use serde::Serialize;

use crate::script::{CommandStep, Expectation, Script, Step};

/// Simulated milliseconds per tick; pose throttling sees this clock.
pub const TICK_MS: u64 = 100;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Server(#[from] ServerError),
    #[error("client {client}: {message}")]
    Client { client: String, message: String },
    #[error("step {index}: client {client} has not joined")]
    NotJoined { index: usize, client: String },
    #[error("event log: {0}")]
    Log(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Summary {
    pub events: usize,
    pub users_joined: usize,
    pub cards_minted: usize,
    pub models_activated: usize,
    pub splices_ok: usize,
    pub splices_rejected: usize,
    pub verifications_failed: usize,
    pub errors: BTreeMap<String, usize>,
}

impl Summary {
    pub fn of(events: &[Event]) -> Self {
        let mut s = Summary {
            events: events.len(),
            ..Summary::default()
        };
        for e in events {
            match &e.kind {
                EventKind::UserJoined { .. } => s.users_joined += 1,
                EventKind::VerificationSucceeded { .. } => s.cards_minted += 1,
                EventKind::ModelActivated { .. } => s.models_activated += 1,
                EventKind::SpliceSucceeded { .. } => s.splices_ok += 1,
                EventKind::SpliceRejected { .. } => s.splices_rejected += 1,
                EventKind::VerificationFailed { .. } => s.verifications_failed += 1,
                EventKind::Error { code, .. } => {
                    *s.errors.entry(code.as_str().to_owned()).or_default() += 1
                }
                _ => {}
            }
        }
        s
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SimReport {
    pub digest: Digest64,
    pub replay_digest: Digest64,
    pub summary: Summary,
    /// One message per failed `expect` step.
    pub failed_expectations: Vec<String>,
    /// Clients whose folded view disagrees with the server at the end.
    pub diverged_clients: Vec<String>,
}

impl SimReport {
    pub fn ok(&self) -> bool {
        self.failed_expectations.is_empty()
            && self.diverged_clients.is_empty()
            && self.digest == self.replay_digest
    }
}

/// How many events match `key`: an event type name or an error code.
pub fn count_matching(events: &[Event], key: &str) -> usize {
    events
        .iter()
        .filter(|e| {
            e.kind.type_name() == key || e.kind.error_code().map(|c| c.as_str()) == Some(key)
        })
        .count()
}

fn check(expect: &Expectation, events: &[Event], digest: Digest64) -> Vec<String> {
    let mut failures = Vec::new();
    for (key, want) in &expect.count {
        let got = count_matching(events, key);
        if got != *want {
            failures.push(format!("{key}: expected {want}, got {got}"));
        }
    }
    if let Some(want) = expect.digest {
        if want != digest {
            failures.push(format!("digest: expected {want}, got {digest}"));
        }
    }
    failures
}

struct Run<'a> {
    server: joinery_server::ServerHandle,
    clients: BTreeMap<String, ProtocolClient>,
    log_path: &'a Path,
}

impl Run<'_> {
    async fn command(&mut self, index: usize, step: &CommandStep) -> Result<(), SimError> {
        let fail = |e: joinery_server::ClientError| SimError::Client {
            client: step.client.clone(),
            message: e.to_string(),
        };
        if let (Action::Join { name }, false) = (&step.command, self.clients.contains_key(&step.client)) {
            let name = if name.is_empty() { &step.client } else { name };
            let client = ProtocolClient::connect(&self.server.url(), name).await.map_err(fail)?;
            self.clients.insert(step.client.clone(), client);
            return Ok(());
        }
        let Some(client) = self.clients.get_mut(&step.client) else {
            return Err(SimError::NotJoined {
                index,
                client: step.client.clone(),
            });
        };
        client.command(step.command.clone()).await.map_err(fail)?;
        if matches!(step.command, Action::Leave) {
            // The server closes the connection once the leave is processed.
            let mut client = self.clients.remove(&step.client).expect("present");
            loop {
                match client.next_message().await {
                    Ok(_) => continue,
                    Err(_) => break,
                }
            }
        } else {
            client.ping().await.map_err(fail)?;
        }
        Ok(())
    }

    async fn events(&self) -> Result<Vec<Event>, SimError> {
        // The inspect round trip orders us after everything already queued.
        self.server.inspect().await?;
        let file = std::fs::File::open(self.log_path)?;
        read_log(std::io::BufReader::new(file)).map_err(|e| SimError::Log(e.to_string()))
    }
}

pub async fn simulate(
    catalog: Arc<PartCatalog>,
    mut session: SessionConfig,
    script: &Script,
    log_path: &Path,
) -> Result<SimReport, SimError> {
    let assets = tempfile::tempdir()?;
    session.pipeline.asset_dir = assets.path().to_path_buf();
    session.pipeline.mode = PipelineMode::Mock;
    let server = start(
        catalog.clone(),
        session.clone(),
        ServerConfig {
            listen: "127.0.0.1:0".parse().expect("loopback"),
            announce: None,
            idle_timeout: Duration::from_secs(3600),
            pipeline_tick: PipelineTick::Manual,
            clock: Clock::manual(),
            log_path: Some(log_path.to_path_buf()),
            ..ServerConfig::default()
        },
    )
    .await?;
    let mut run = Run {
        server,
        clients: BTreeMap::new(),
        log_path,
    };
    let mut failed_expectations = Vec::new();
    let mut tick = 0;
    for (index, step) in script.steps.iter().enumerate() {
        while step.at_tick() > tick {
            run.server.tick_pipeline().await?;
            tick += 1;
            run.server.clock().set_ms(tick * TICK_MS);
        }
        match step {
            Step::Command(c) => run.command(index, c).await?,
            Step::Expect(e) => {
                let events = run.events().await?;
                let digest = run.server.inspect().await?.snapshot.digest;
                for failure in check(&e.expect, &events, digest) {
                    failed_expectations.push(format!("step {index} (tick {tick}): {failure}"));
                }
            }
        }
    }
    run.server.tick_pipeline().await?;

    let inspection = run.server.inspect().await?;
    let digest = inspection.snapshot.digest;
    let target = inspection.world.last_event_seq;
    let mut diverged_clients = Vec::new();
    for (name, client) in run.clients.iter_mut() {
        let synced = match client.ping().await {
            Ok(()) => client.wait_for_seq(target).await.is_ok(),
            Err(_) => false,
        };
        let view = client.view().ok().map(|w| w.digest());
        if !synced || view != Some(digest) {
            diverged_clients.push(name.clone());
        }
    }
    let events = run.events().await?;
    // Stop the server first so closing clients adds nothing to the log.
    let clients = std::mem::take(&mut run.clients);
    run.server.shutdown().await;
    drop(clients);

    let replay_digest = replay(&catalog, &session, &events)
        .map_err(|e| SimError::Log(e.to_string()))?
        .digest();
    Ok(SimReport {
        digest,
        replay_digest,
        summary: Summary::of(&events),
        failed_expectations,
        diverged_clients,
    })
}

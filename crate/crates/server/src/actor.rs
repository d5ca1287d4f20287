use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::sync::Arc;
use std::time::{Duration, Instant};

use joinery_core::pipeline::{Pipeline, PipelineResult};
use joinery_core::session::{Action, Command, Event, Outcome, Session, Snapshot, UserId, WorldState};
use tokio::sync::{mpsc, oneshot};
use tokio_tungstenite::tungstenite::Utf8Bytes;

use crate::clock::Clock;
use crate::protocol::{
    encode, event_frame, ClientFrame, ClientMessage, ServerFrame, ServerMessage, SnapshotPayload,
    Welcome, WireError, WireErrorCode, ASSET_PATH, PROTOCOL_VERSION,
};

pub(crate) type ConnId = u64;

#[derive(Debug)]
pub(crate) enum Outbound {
    Text(Utf8Bytes),
    Close,
}

pub(crate) enum Ingress {
    Open {
        conn: ConnId,
        out: mpsc::UnboundedSender<Outbound>,
    },
    Frame {
        conn: ConnId,
        frame: ClientFrame,
    },
    Malformed {
        conn: ConnId,
        reason: String,
    },
    Disconnect {
        conn: ConnId,
    },
    Results(Vec<PipelineResult>),
    Tick {
        reply: oneshot::Sender<()>,
    },
    Inspect {
        reply: oneshot::Sender<Inspection>,
    },
    Shutdown {
        reply: oneshot::Sender<()>,
    },
}

/// Point-in-time view of the server, for operators and tests.
#[derive(Clone, Debug)]
pub struct Inspection {
    pub snapshot: Snapshot,
    pub world: WorldState,
    /// Connections that completed the handshake.
    pub joined: usize,
}

enum ConnState {
    AwaitingHello,
    Joined(UserId),
}

struct Conn {
    out: mpsc::UnboundedSender<Outbound>,
    state: ConnState,
    next_seq: u64,
}

pub(crate) struct Actor {
    pub session: Session,
    pub pipeline: Arc<Pipeline>,
    pub clock: Clock,
    pub log: Option<BufWriter<File>>,
    pub resume_window: Duration,
    conns: BTreeMap<ConnId, Conn>,
    departed: HashMap<UserId, Instant>,
    next_user: u64,
}

impl Actor {
    pub fn new(
        session: Session,
        pipeline: Arc<Pipeline>,
        clock: Clock,
        log: Option<BufWriter<File>>,
        resume_window: Duration,
    ) -> Self {
        Actor {
            session,
            pipeline,
            clock,
            log,
            resume_window,
            conns: BTreeMap::new(),
            departed: HashMap::new(),
            next_user: 0,
        }
    }

    pub async fn run(mut self, mut rx: mpsc::UnboundedReceiver<Ingress>) {
        while let Some(msg) = rx.recv().await {
            match msg {
                Ingress::Open { conn, out } => {
                    self.conns.insert(
                        conn,
                        Conn {
                            out,
                            state: ConnState::AwaitingHello,
                            next_seq: 1,
                        },
                    );
                }
                Ingress::Frame { conn, frame } => self.frame(conn, frame),
                Ingress::Malformed { conn, reason } => {
                    self.fail(conn, WireErrorCode::Malformed, reason, None)
                }
                Ingress::Disconnect { conn } => self.remove(conn),
                Ingress::Results(results) => self.ingest(results),
                Ingress::Tick { reply } => {
                    let pipeline = self.pipeline.clone();
                    let results = tokio::task::spawn_blocking(move || {
                        pipeline.tick();
                        pipeline.drain()
                    })
                    .await
                    .unwrap_or_default();
                    self.ingest(results);
                    let _ = reply.send(());
                }
                Ingress::Inspect { reply } => {
                    let _ = reply.send(Inspection {
                        snapshot: self.session.snapshot(),
                        world: self.session.world().clone(),
                        joined: self
                            .conns
                            .values()
                            .filter(|c| matches!(c.state, ConnState::Joined(_)))
                            .count(),
                    });
                }
                Ingress::Shutdown { reply } => {
                    for conn in self.conns.values() {
                        let _ = conn.out.send(Outbound::Close);
                    }
                    self.flush_log();
                    let _ = reply.send(());
                    return;
                }
            }
            self.flush_log();
        }
        self.flush_log();
    }

    fn frame(&mut self, conn: ConnId, frame: ClientFrame) {
        let Some(c) = self.conns.get_mut(&conn) else {
            return;
        };
        let (user, message) = match (&c.state, frame.message) {
            (
                ConnState::AwaitingHello,
                ClientMessage::Hello {
                    protocol_version,
                    name,
                    resume,
                },
            ) if frame.seq == 1 => return self.hello(conn, protocol_version, name, resume),
            (ConnState::AwaitingHello, _) => {
                return self.fail(
                    conn,
                    WireErrorCode::Malformed,
                    "first frame must be hello with seq 1",
                    Some(frame.seq),
                )
            }
            (ConnState::Joined(_), ClientMessage::Hello { .. }) => {
                return self.fail(conn, WireErrorCode::Malformed, "duplicate hello", Some(frame.seq))
            }
            (ConnState::Joined(user), message) => {
                if frame.seq != c.next_seq {
                    let expected = c.next_seq;
                    return self.fail(
                        conn,
                        WireErrorCode::BadSeq,
                        format!("expected seq {expected}, got {}", frame.seq),
                        Some(frame.seq),
                    );
                }
                c.next_seq += 1;
                (user.clone(), message)
            }
        };
        match message {
            ClientMessage::Command(action) => {
                let leaving = matches!(action, Action::Leave);
                let cmd = Command {
                    issuer: user.clone(),
                    client_seq: frame.seq,
                    at_ms: self.clock.now_ms(),
                    action,
                };
                let outcome = self.session.handle_command(&cmd);
                self.absorb(outcome);
                if leaving && !self.session.world().users.contains_key(&user) {
                    if let Some(c) = self.conns.remove(&conn) {
                        let _ = c.out.send(Outbound::Close);
                    }
                    self.departed.insert(user, Instant::now());
                }
            }
            ClientMessage::Ping {} => {
                self.send(conn, ServerMessage::Pong { client_seq: frame.seq });
            }
            ClientMessage::Resync {} => {
                let snapshot = SnapshotPayload::of(self.session.world());
                self.send(conn, ServerMessage::Snapshot(snapshot));
            }
            ClientMessage::Hello { .. } => unreachable!("handled above"),
        }
    }

    fn hello(&mut self, conn: ConnId, version: u32, name: String, resume: Option<UserId>) {
        if version != PROTOCOL_VERSION {
            return self.fail(
                conn,
                WireErrorCode::VersionMismatch,
                format!("server speaks protocol {PROTOCOL_VERSION}, client sent {version}"),
                Some(1),
            );
        }
        let world = self.session.world();
        if world.users.len() >= self.session.config().max_users {
            return self.fail(conn, WireErrorCode::SessionFull, "session is full", Some(1));
        }
        let window = self.resume_window;
        self.departed.retain(|_, at| at.elapsed() <= window);
        let user = match resume {
            Some(id) if self.departed.contains_key(&id) && !world.users.contains_key(&id) => {
                self.departed.remove(&id);
                id
            }
            _ => self.fresh_user(),
        };
        let cmd = Command {
            issuer: user.clone(),
            client_seq: 1,
            at_ms: self.clock.now_ms(),
            action: Action::Join { name },
        };
        let outcome = self.session.handle_command(&cmd);
        self.absorb(outcome);

        let world = self.session.world();
        let role = world.users[&user].role;
        let welcome = Welcome {
            user_id: user.clone(),
            role,
            snapshot: SnapshotPayload::of(world),
            presence: world.presence.clone(),
            asset_path: ASSET_PATH.to_owned(),
        };
        self.send(conn, ServerMessage::Welcome(welcome));
        if let Some(c) = self.conns.get_mut(&conn) {
            c.state = ConnState::Joined(user);
            c.next_seq = 2;
        }
    }

    fn fresh_user(&mut self) -> UserId {
        loop {
            self.next_user += 1;
            let id = UserId::new(format!("u{}", self.next_user));
            if !self.session.world().users.contains_key(&id) && !self.departed.contains_key(&id) {
                return id;
            }
        }
    }

    fn fail(&mut self, conn: ConnId, code: WireErrorCode, message: impl Into<String>, client_seq: Option<u64>) {
        let error = WireError {
            code,
            message: message.into(),
            client_seq,
        };
        tracing::debug!(conn, ?error, "protocol error");
        self.send(conn, ServerMessage::Error(error));
        if code.is_fatal() {
            self.remove(conn);
        }
    }

    /// Drops a connection; a joined user leaves, returning held parts.
    fn remove(&mut self, conn: ConnId) {
        let Some(c) = self.conns.remove(&conn) else {
            return;
        };
        let _ = c.out.send(Outbound::Close);
        let ConnState::Joined(user) = c.state else {
            return;
        };
        let Some(last) = self.session.last_client_seq(&user) else {
            return;
        };
        let cmd = Command {
            issuer: user.clone(),
            client_seq: last + 1,
            at_ms: self.clock.now_ms(),
            action: Action::Leave,
        };
        let outcome = self.session.handle_command(&cmd);
        self.absorb(outcome);
        self.departed.insert(user, Instant::now());
    }

    fn ingest(&mut self, results: Vec<PipelineResult>) {
        for result in results {
            let outcome = self.session.ingest_pipeline_result(&result);
            self.absorb(outcome);
        }
    }

    fn absorb(&mut self, outcome: Outcome) {
        for request in outcome.requests {
            self.pipeline.submit(request);
        }
        self.publish(&outcome.events);
    }

    fn publish(&mut self, events: &[Event]) {
        for event in events {
            let frame = Utf8Bytes::from(event_frame(event));
            if let Some(log) = &mut self.log {
                if let Err(e) = writeln!(log, "{}", event.to_line()) {
                    tracing::error!("event log write failed, logging disabled: {e}");
                    self.log = None;
                }
            }
            for c in self.conns.values() {
                if let ConnState::Joined(_) = c.state {
                    let _ = c.out.send(Outbound::Text(frame.clone()));
                }
            }
        }
    }

    fn send(&self, conn: ConnId, message: ServerMessage) {
        if let Some(c) = self.conns.get(&conn) {
            let frame = ServerFrame {
                seq: self.session.world().last_event_seq,
                message,
            };
            let _ = c.out.send(Outbound::Text(Utf8Bytes::from(encode(&frame))));
        }
    }

    fn flush_log(&mut self) {
        if let Some(log) = &mut self.log {
            if let Err(e) = log.flush() {
                tracing::error!("event log flush failed, logging disabled: {e}");
                self.log = None;
            }
        }
    }
}

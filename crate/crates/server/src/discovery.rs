//! LAN discovery: a fixed-magic JSON datagram broadcast by the server and
//! collected by clients.

use std::collections::BTreeMap;
use std::io;
use std::net::{Ipv4Addr, SocketAddr};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use tokio::net::UdpSocket;
use tokio::time::Instant;

use crate::protocol::PROTOCOL_VERSION;

pub const MAGIC: &str = "HVRMT1";
pub const MAX_DATAGRAM: usize = 512;
pub const ANNOUNCE_INTERVAL: Duration = Duration::from_secs(2);
pub const DEFAULT_ANNOUNCE_PORT: u16 = 7475;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Announce {
    pub magic: String,
    pub session_name: String,
    pub host_port: u16,
    pub protocol_version: u32,
}

#[derive(Debug, thiserror::Error)]
pub enum AnnounceError {
    #[error("announce datagram would be {0} bytes; at most {MAX_DATAGRAM} allowed")]
    TooLarge(usize),
}

impl Announce {
    pub fn new(session_name: impl Into<String>, host_port: u16) -> Self {
        Announce {
            magic: MAGIC.to_owned(),
            session_name: session_name.into(),
            host_port,
            protocol_version: PROTOCOL_VERSION,
        }
    }

    pub fn encode(&self) -> Result<Vec<u8>, AnnounceError> {
        let bytes = serde_json::to_vec(self).expect("announce always serializes");
        if bytes.len() > MAX_DATAGRAM {
            return Err(AnnounceError::TooLarge(bytes.len()));
        }
        Ok(bytes)
    }

    /// `None` for anything that is not one of ours.
    pub fn decode(bytes: &[u8]) -> Option<Announce> {
        if bytes.len() > MAX_DATAGRAM {
            return None;
        }
        let announce: Announce = serde_json::from_slice(bytes).ok()?;
        (announce.magic == MAGIC).then_some(announce)
    }
}

/// Where announcements go. A broadcast address by default; a multicast group
/// works too.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AnnounceTarget {
    pub addr: SocketAddr,
    pub interval: Duration,
}

impl AnnounceTarget {
    pub fn broadcast(port: u16) -> Self {
        AnnounceTarget {
            addr: SocketAddr::from((Ipv4Addr::BROADCAST, port)),
            interval: ANNOUNCE_INTERVAL,
        }
    }
}

/// Sends `datagram` to the target forever. Send failures are logged and
/// retried on the next interval; they never stop the server.
pub async fn announce_loop(target: AnnounceTarget, datagram: Vec<u8>) {
    let socket = match UdpSocket::bind((Ipv4Addr::UNSPECIFIED, 0)).await {
        Ok(s) => s,
        Err(e) => {
            tracing::warn!("discovery disabled: cannot open udp socket: {e}");
            return;
        }
    };
    if let Err(e) = socket.set_broadcast(true) {
        tracing::warn!("cannot enable udp broadcast: {e}");
    }
    let mut failing = false;
    let mut ticker = tokio::time::interval(target.interval);
    loop {
        ticker.tick().await;
        match socket.send_to(&datagram, target.addr).await {
            Ok(_) => failing = false,
            Err(e) if !failing => {
                tracing::warn!("announce to {} failed: {e}", target.addr);
                failing = true;
            }
            Err(_) => {}
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Discovered {
    /// Sender ip with the announced port: where to connect.
    pub addr: SocketAddr,
    pub announce: Announce,
}

/// Listens on `bind` for `window` and returns each distinct session heard.
pub async fn discover(bind: SocketAddr, window: Duration) -> io::Result<Vec<Discovered>> {
    let socket = UdpSocket::bind(bind).await?;
    collect(&socket, window).await
}

pub async fn collect(socket: &UdpSocket, window: Duration) -> io::Result<Vec<Discovered>> {
    let deadline = Instant::now() + window;
    let mut seen = BTreeMap::new();
    let mut buf = [0u8; 2048];
    loop {
        let received = tokio::time::timeout_at(deadline, socket.recv_from(&mut buf)).await;
        let (len, from) = match received {
            Err(_) => break,
            Ok(r) => r?,
        };
        let Some(announce) = Announce::decode(&buf[..len]) else {
            tracing::debug!("ignoring foreign datagram from {from}");
            continue;
        };
        let addr = SocketAddr::new(from.ip(), announce.host_port);
        seen.insert((addr, announce.session_name.clone()), announce);
    }
    Ok(seen
        .into_iter()
        .map(|((addr, _), announce)| Discovered { addr, announce })
        .collect())
}

//! Per-connection pump: socket frames in, actor output out. All protocol
//! decisions live in the actor.

use std::path::{Path, PathBuf};
use std::time::Duration;

use futures_util::{SinkExt, StreamExt};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::TcpStream;
use tokio::sync::mpsc;
use tokio_tungstenite::tungstenite::Message;

use crate::actor::{ConnId, Ingress, Outbound};
use crate::protocol::{ClientFrame, ASSET_PATH};

pub(crate) async fn serve(
    mut stream: TcpStream,
    conn: ConnId,
    ingress: mpsc::UnboundedSender<Ingress>,
    idle: Duration,
    assets: PathBuf,
) {
    match asset_request(&stream).await {
        Some(Some(path)) => {
            if let Err(e) = serve_asset(&mut stream, &assets, &path).await {
                tracing::debug!("asset request failed: {e}");
            }
            return;
        }
        Some(None) => {}
        None => return,
    }
    let ws = match tokio_tungstenite::accept_async(stream).await {
        Ok(ws) => ws,
        Err(e) => {
            tracing::debug!(conn, "websocket handshake failed: {e}");
            return;
        }
    };
    let (mut sink, mut source) = ws.split();
    let (out_tx, mut out_rx) = mpsc::unbounded_channel();
    if ingress.send(Ingress::Open { conn, out: out_tx }).is_err() {
        return;
    }

    let mut writer = tokio::spawn(async move {
        while let Some(out) = out_rx.recv().await {
            let sent = match out {
                Outbound::Text(text) => sink.send(Message::Text(text)).await,
                Outbound::Close => {
                    let _ = sink.send(Message::Close(None)).await;
                    break;
                }
            };
            if sent.is_err() {
                break;
            }
        }
        let _ = sink.close().await;
    });

    loop {
        let next = tokio::select! {
            _ = &mut writer => break,
            next = tokio::time::timeout(idle, source.next()) => next,
        };
        let message = match next {
            Err(_) => {
                tracing::info!(conn, "idle timeout");
                break;
            }
            Ok(None) | Ok(Some(Err(_))) => break,
            Ok(Some(Ok(m))) => m,
        };
        let forward = match message {
            Message::Text(text) => match serde_json::from_str::<ClientFrame>(&text) {
                Ok(frame) => Ingress::Frame { conn, frame },
                Err(e) => Ingress::Malformed {
                    conn,
                    reason: format!("unparseable frame: {e}"),
                },
            },
            Message::Binary(_) => Ingress::Malformed {
                conn,
                reason: "binary frames are not part of the protocol".into(),
            },
            Message::Close(_) => break,
            _ => continue,
        };
        if ingress.send(forward).is_err() {
            break;
        }
    }
    let _ = ingress.send(Ingress::Disconnect { conn });
}

/// Looks at the request line without consuming it. `Some(Some(path))` for an
/// asset GET, `Some(None)` for anything else, `None` if the peer went away.
async fn asset_request(stream: &TcpStream) -> Option<Option<String>> {
    let mut buf = [0u8; 512];
    loop {
        let n = tokio::time::timeout(Duration::from_secs(10), stream.peek(&mut buf))
            .await
            .ok()?
            .ok()?;
        if n == 0 {
            return None;
        }
        let head = &buf[..n];
        if let Some(end) = head.windows(2).position(|w| w == b"\r\n") {
            let line = std::str::from_utf8(&head[..end]).ok();
            let path = line.and_then(|l| {
                let mut parts = l.split(' ');
                match (parts.next(), parts.next()) {
                    (Some("GET"), Some(p)) if p.starts_with(ASSET_PATH) => Some(p.to_owned()),
                    _ => None,
                }
            });
            return Some(path);
        }
        if n == buf.len() {
            return Some(None);
        }
        tokio::time::sleep(Duration::from_millis(5)).await;
    }
}

async fn serve_asset(stream: &mut TcpStream, root: &Path, path: &str) -> std::io::Result<()> {
    let mut head = Vec::new();
    let mut byte = [0u8; 1];
    while !head.ends_with(b"\r\n\r\n") && head.len() < 16 * 1024 {
        if stream.read(&mut byte).await? == 0 {
            return Ok(());
        }
        head.push(byte[0]);
    }
    let name = &path[ASSET_PATH.len()..];
    let found = match asset_media(name) {
        Some(media) => tokio::fs::read(root.join(name)).await.ok().map(|b| (media, b)),
        None => None,
    };
    let response = match found {
        Some((media, body)) => {
            let mut r = format!(
                "HTTP/1.1 200 OK\r\nContent-Type: {media}\r\nContent-Length: {}\r\nAccess-Control-Allow-Origin: *\r\nConnection: close\r\n\r\n",
                body.len()
            )
            .into_bytes();
            r.extend_from_slice(&body);
            r
        }
        None => b"HTTP/1.1 404 Not Found\r\nContent-Length: 0\r\nAccess-Control-Allow-Origin: *\r\nConnection: close\r\n\r\n".to_vec(),
    };
    stream.write_all(&response).await?;
    stream.shutdown().await
}

/// Only `<16 hex>.png|glb` names from the content-addressed store resolve.
fn asset_media(name: &str) -> Option<&'static str> {
    let (stem, ext) = name.split_once('.')?;
    if stem.len() != 16 || !stem.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f')) {
        return None;
    }
    match ext {
        "png" => Some("image/png"),
        "glb" => Some("model/gltf-binary"),
        _ => None,
    }
}

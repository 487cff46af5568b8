//! Live session host: a websocket listener plus the fixed-rate control loop.
//!
//! The loop task is the only writer of engine state. Connections talk to it
//! through an event queue and receive snapshots from a broadcast channel.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use futures_util::{SinkExt, StreamExt};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{broadcast, mpsc, watch};
use tokio::task::JoinHandle;
use tokio_tungstenite::tungstenite::handshake::server::{Request, Response};
use tokio_tungstenite::tungstenite::Message;

use crate::arbitration::{EventKind, Role};
use crate::error::{Error, Result};
use crate::session::engine::Engine;
use crate::session::log::{LogHeader, LogWriter};
use crate::session::protocol::{handle_message, Inbound, ServerMessage, PROTOCOL_VERSION};

#[derive(Debug, Clone, PartialEq)]
pub struct ServeOptions {
    pub listen: String,
    pub log: Option<PathBuf>,
    /// Stop after this many ticks; run until shutdown otherwise.
    pub max_ticks: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ServeSummary {
    pub ticks: u64,
    pub snapshot_hash: Option<String>,
    pub connections: u64,
}

#[derive(Debug, Clone)]
struct Broadcast {
    tick: u64,
    text: Arc<str>,
}

pub struct SessionHandle {
    local_addr: SocketAddr,
    shutdown: watch::Sender<bool>,
    task: JoinHandle<Result<ServeSummary>>,
}

impl SessionHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    /// Stops the loop and waits for it to wind down.
    pub async fn shutdown(self) -> Result<ServeSummary> {
        let _ = self.shutdown.send(true);
        self.wait().await
    }

    /// Waits for the loop to end on its own (tick limit) or on shutdown.
    pub async fn wait(self) -> Result<ServeSummary> {
        self.task
            .await
            .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?
    }
}

/// Binds the listener and starts the control loop.
pub async fn run_session(engine: Engine, opts: ServeOptions) -> Result<SessionHandle> {
    let listener = TcpListener::bind(&opts.listen).await.map_err(|source| Error::Bind {
        addr: opts.listen.clone(),
        source,
    })?;
    let local_addr = listener.local_addr()?;
    let log = match &opts.log {
        Some(path) => {
            let file = std::fs::File::create(path)?;
            Some(LogWriter::new(
                std::io::BufWriter::new(file),
                LogHeader::for_engine(&engine),
            )?)
        }
        None => None,
    };
    let (shutdown, shutdown_rx) = watch::channel(false);
    let task = tokio::spawn(control_loop(engine, listener, log, opts.max_ticks, shutdown_rx));
    Ok(SessionHandle {
        local_addr,
        shutdown,
        task,
    })
}

async fn control_loop(
    mut engine: Engine,
    listener: TcpListener,
    mut log: Option<LogWriter<std::io::BufWriter<std::fs::File>>>,
    max_ticks: Option<u64>,
    mut shutdown: watch::Receiver<bool>,
) -> Result<ServeSummary> {
    let tick_rate = engine.config().tick_rate;
    let decimation = (tick_rate / engine.config().remote_snapshot_rate).round().max(1.0) as u64;
    let (event_tx, mut event_rx) = mpsc::unbounded_channel::<(Role, EventKind)>();
    let (snap_tx, _) = broadcast::channel::<Broadcast>(256);
    let mut connections = 0u64;
    let mut interval = tokio::time::interval(Duration::from_secs_f64(engine.dt()));
    interval.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);

    loop {
        tokio::select! {
            _ = shutdown.changed() => break,
            accepted = listener.accept() => {
                match accepted {
                    Ok((stream, peer)) => {
                        connections += 1;
                        let conn = Connection {
                            events: event_tx.clone(),
                            snapshots: snap_tx.subscribe(),
                            decimation: if peer.ip().is_loopback() { 1 } else { decimation },
                            tick_rate,
                        };
                        tokio::spawn(async move {
                            if let Err(e) = conn.serve(stream).await {
                                tracing::debug!(%peer, "connection closed: {e}");
                            }
                        });
                    }
                    Err(e) => tracing::warn!("accept failed: {e}"),
                }
            }
            _ = interval.tick() => {
                while let Ok((role, kind)) = event_rx.try_recv() {
                    engine.submit(role, kind);
                }
                let rec = engine.tick();
                if let Some(w) = log.as_mut() {
                    w.record(&rec)?;
                }
                let text = serde_json::to_string(&ServerMessage::Snapshot {
                    snapshot: Box::new(rec.snapshot.clone()),
                })?;
                let _ = snap_tx.send(Broadcast { tick: rec.snapshot.tick, text: text.into() });
                if max_ticks.is_some_and(|m| engine.tick_index() >= m) {
                    break;
                }
            }
        }
    }
    let snapshot_hash = match log {
        Some(w) => Some(w.finish()?.1),
        None => None,
    };
    Ok(ServeSummary {
        ticks: engine.tick_index(),
        snapshot_hash,
        connections,
    })
}

struct Connection {
    events: mpsc::UnboundedSender<(Role, EventKind)>,
    snapshots: broadcast::Receiver<Broadcast>,
    decimation: u64,
    tick_rate: f64,
}

fn role_from_query(query: &str) -> Option<Role> {
    query.split('&').find_map(|kv| match kv.split_once('=') {
        Some(("role", "helper")) => Some(Role::Helper),
        Some(("role", "worker")) => Some(Role::Worker),
        _ => None,
    })
}

fn welcome(role: Role, tick_rate: f64) -> ServerMessage {
    ServerMessage::Welcome {
        protocol: PROTOCOL_VERSION,
        engine_version: crate::session::log::ENGINE_VERSION.into(),
        role,
        tick_rate,
    }
}

impl Connection {
    async fn serve(mut self, stream: TcpStream) -> Result<()> {
        let mut role = None;
        let callback = |req: &Request, resp: Response| {
            role = req.uri().query().and_then(role_from_query);
            Ok(resp)
        };
        let ws = tokio_tungstenite::accept_hdr_async(stream, callback)
            .await
            .map_err(|e| Error::Io(std::io::Error::other(e)))?;
        let (mut sink, mut incoming) = ws.split();
        let send = |msg: &ServerMessage| Message::text(serde_json::to_string(msg).expect("message serializes"));
        if let Some(r) = role {
            sink.send(send(&welcome(r, self.tick_rate))).await.map_err(ws_err)?;
        }
        loop {
            tokio::select! {
                snap = self.snapshots.recv() => match snap {
                    Ok(b) => {
                        if b.tick % self.decimation == 0 {
                            sink.send(Message::text(b.text.to_string())).await.map_err(ws_err)?;
                        }
                    }
                    Err(broadcast::error::RecvError::Lagged(_)) => continue,
                    Err(broadcast::error::RecvError::Closed) => break,
                },
                msg = incoming.next() => {
                    let text = match msg {
                        Some(Ok(Message::Text(t))) => t,
                        Some(Ok(Message::Close(_))) | None => break,
                        Some(Ok(_)) => continue,
                        Some(Err(e)) => return Err(ws_err(e)),
                    };
                    let reply = match handle_message(&text, role) {
                        Ok(Inbound::Hello(r)) => {
                            role = Some(r);
                            welcome(r, self.tick_rate)
                        }
                        Ok(Inbound::Event(kind)) => {
                            let of = kind.name().to_string();
                            let sender = role.expect("gated events carry a role");
                            if self.events.send((sender, kind)).is_err() {
                                break;
                            }
                            ServerMessage::Ack { of }
                        }
                        Err(e) => ServerMessage::Error(e),
                    };
                    sink.send(send(&reply)).await.map_err(ws_err)?;
                }
            }
        }
        Ok(())
    }
}

fn ws_err(e: tokio_tungstenite::tungstenite::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

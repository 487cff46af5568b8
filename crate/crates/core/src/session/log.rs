//! JSONL session logs and replay.
//!
//! Line 1 is a header with the engine version and a hash of the scene and
//! config. Each tick then contributes its events followed by one snapshot.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::arbitration::{InteractionEvent, Severity};
use crate::error::{Error, Result};
use crate::kinematics::JointConfig;
use crate::session::engine::{Engine, StateSnapshot, TickRecord};
use crate::session::files::{SceneFile, SessionConfig};
use crate::session::protocol::PROTOCOL_VERSION;

pub const ENGINE_NAME: &str = "sharedcam";
pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub engine: String,
    pub version: String,
    pub protocol: u32,
    pub config_hash: String,
    pub initial_q: JointConfig,
    pub scene: SceneFile,
    pub config: SessionConfig,
}

impl LogHeader {
    pub fn for_engine(engine: &Engine) -> LogHeader {
        let scene = engine.scene().source.clone();
        let config = engine.config().clone();
        LogHeader {
            engine: ENGINE_NAME.into(),
            version: ENGINE_VERSION.into(),
            protocol: PROTOCOL_VERSION,
            config_hash: config_hash(&scene, &config),
            initial_q: engine.initial_q().clone(),
            scene,
            config,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LogLine {
    Header(Box<LogHeader>),
    Event { tick: u64, event: InteractionEvent },
    Snapshot { snapshot: Box<StateSnapshot> },
}

pub fn config_hash(scene: &SceneFile, config: &SessionConfig) -> String {
    let doc = serde_json::to_string(&(scene, config)).expect("config serializes");
    hex::encode(Sha256::digest(doc.as_bytes()))
}

/// Running SHA-256 over the canonical JSON of each snapshot.
#[derive(Debug, Clone, Default)]
pub struct SnapshotHasher {
    hasher: Sha256,
    count: u64,
}

impl SnapshotHasher {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn update(&mut self, snapshot: &StateSnapshot) {
        let line = serde_json::to_string(snapshot).expect("snapshot serializes");
        self.hasher.update(line.as_bytes());
        self.hasher.update(b"\n");
        self.count += 1;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn hex(&self) -> String {
        hex::encode(self.hasher.clone().finalize())
    }
}

pub struct LogWriter<W: Write> {
    out: W,
    hasher: SnapshotHasher,
}

impl<W: Write> LogWriter<W> {
    pub fn new(mut out: W, header: LogHeader) -> Result<Self> {
        write_line(&mut out, &LogLine::Header(Box::new(header)))?;
        Ok(LogWriter {
            out,
            hasher: SnapshotHasher::new(),
        })
    }

    pub fn record(&mut self, rec: &TickRecord) -> Result<()> {
        for event in &rec.events {
            write_line(
                &mut self.out,
                &LogLine::Event {
                    tick: rec.snapshot.tick,
                    event: event.clone(),
                },
            )?;
        }
        self.hasher.update(&rec.snapshot);
        write_line(
            &mut self.out,
            &LogLine::Snapshot {
                snapshot: Box::new(rec.snapshot.clone()),
            },
        )
    }

    pub fn snapshot_hash(&self) -> String {
        self.hasher.hex()
    }

    pub fn snapshots(&self) -> u64 {
        self.hasher.count()
    }

    pub fn finish(mut self) -> Result<(W, String)> {
        self.out.flush()?;
        let hash = self.hasher.hex();
        Ok((self.out, hash))
    }
}

fn write_line<W: Write>(out: &mut W, line: &LogLine) -> Result<()> {
    serde_json::to_writer(&mut *out, line)?;
    out.write_all(b"\n")?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordedTick {
    pub events: Vec<InteractionEvent>,
    pub snapshot: StateSnapshot,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LogContents {
    pub header: Option<LogHeader>,
    pub ticks: Vec<RecordedTick>,
    pub truncated: bool,
    pub warnings: Vec<String>,
}

impl LogContents {
    pub fn snapshot_hash(&self) -> String {
        let mut h = SnapshotHasher::new();
        for t in &self.ticks {
            h.update(&t.snapshot);
        }
        h.hex()
    }
}

/// Parses a log. A malformed or cut-off line ends the read with a warning;
/// events after the last complete snapshot are dropped.
pub fn read_log<R: Read>(input: R) -> Result<LogContents> {
    let mut contents = LogContents::default();
    let mut events = Vec::new();
    for (idx, line) in BufReader::new(input).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: LogLine = match serde_json::from_str(&line) {
            Ok(l) => l,
            Err(e) => {
                contents.truncated = true;
                contents
                    .warnings
                    .push(format!("line {}: {e}; replaying up to here", idx + 1));
                break;
            }
        };
        match parsed {
            LogLine::Header(h) => {
                if idx != 0 || contents.header.is_some() {
                    return Err(Error::invalid(format!(
                        "line {}: header must be the first line",
                        idx + 1
                    )));
                }
                if h.engine != ENGINE_NAME || h.version != ENGINE_VERSION {
                    return Err(Error::VersionMismatch {
                        log: format!("{} {}", h.engine, h.version),
                        engine: format!("{ENGINE_NAME} {ENGINE_VERSION}"),
                    });
                }
                contents.header = Some(*h);
            }
            _ if contents.header.is_none() => {
                return Err(Error::invalid("log does not start with a header line"));
            }
            LogLine::Event { tick, event } => {
                let expected = contents.ticks.len() as u64 + 1;
                if tick != expected {
                    return Err(Error::invalid(format!(
                        "line {}: event for tick {tick} while reading tick {expected}",
                        idx + 1
                    )));
                }
                events.push(event);
            }
            LogLine::Snapshot { snapshot } => {
                let expected = contents.ticks.len() as u64 + 1;
                if snapshot.tick != expected {
                    return Err(Error::invalid(format!(
                        "line {}: snapshot for tick {} where {expected} was expected",
                        idx + 1,
                        snapshot.tick
                    )));
                }
                contents.ticks.push(RecordedTick {
                    events: std::mem::take(&mut events),
                    snapshot: *snapshot,
                });
            }
        }
    }
    if !events.is_empty() {
        contents.truncated = true;
        contents
            .warnings
            .push(format!("{} events after the last snapshot were dropped", events.len()));
    }
    Ok(contents)
}

pub fn read_log_file(path: &Path) -> Result<LogContents> {
    let file = std::fs::File::open(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::file(path, "<file>", "not found")
        } else {
            Error::Io(e)
        }
    })?;
    read_log(file)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplayReport {
    pub ticks: u64,
    pub recorded_hash: String,
    pub replayed_hash: String,
    pub identical: bool,
    /// First tick whose snapshot differs.
    pub first_divergence: Option<u64>,
    pub truncated: bool,
    pub warnings: Vec<String>,
}

/// Re-feeds the recorded events through a fresh engine and compares the
/// resulting snapshot stream.
pub fn replay(contents: &LogContents) -> Result<ReplayReport> {
    let recorded_hash = contents.snapshot_hash();
    let Some(header) = &contents.header else {
        return Ok(ReplayReport {
            ticks: 0,
            replayed_hash: recorded_hash.clone(),
            recorded_hash,
            identical: true,
            first_divergence: None,
            truncated: contents.truncated,
            warnings: contents.warnings.clone(),
        });
    };
    if config_hash(&header.scene, &header.config) != header.config_hash {
        return Err(Error::invalid("header config_hash does not match its scene and config"));
    }
    let scene = header.scene.build(Path::new("<log header>"))?;
    let mut engine = Engine::new(scene, header.config.clone())?.with_initial_q(header.initial_q.clone())?;
    let mut hasher = SnapshotHasher::new();
    let mut first_divergence = None;
    for rec in &contents.ticks {
        let out = engine.advance(rec.events.clone());
        if first_divergence.is_none() && out.snapshot != rec.snapshot {
            first_divergence = Some(rec.snapshot.tick);
        }
        hasher.update(&out.snapshot);
    }
    let replayed_hash = hasher.hex();
    Ok(ReplayReport {
        ticks: contents.ticks.len() as u64,
        identical: replayed_hash == recorded_hash,
        recorded_hash,
        replayed_hash,
        first_divergence,
        truncated: contents.truncated,
        warnings: contents.warnings.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub ticks: u64,
    pub snapshot_hash: String,
    pub errors: usize,
    pub warnings: usize,
    /// Distinct diagnostic codes seen, with counts.
    pub diagnostic_codes: std::collections::BTreeMap<String, usize>,
}

/// Runs `ticks` headless ticks, logging every one.
pub fn run_recorded<W: Write>(engine: &mut Engine, ticks: u64, out: W) -> Result<(RunSummary, W)> {
    let mut writer = LogWriter::new(out, LogHeader::for_engine(engine))?;
    let mut errors = 0;
    let mut warnings = 0;
    let mut codes = std::collections::BTreeMap::new();
    for _ in 0..ticks {
        let rec = engine.tick();
        for d in &rec.snapshot.diagnostics {
            match d.severity {
                Severity::Error => errors += 1,
                Severity::Warning => warnings += 1,
                Severity::Info => {}
            }
            *codes.entry(d.code.clone()).or_insert(0) += 1;
        }
        writer.record(&rec)?;
    }
    let (out, snapshot_hash) = writer.finish()?;
    Ok((
        RunSummary {
            ticks,
            snapshot_hash,
            errors,
            warnings,
            diagnostic_codes: codes,
        },
        out,
    ))
}

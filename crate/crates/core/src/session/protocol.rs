//! Wire protocol: JSON text messages over a websocket, one message per
//! command. See `docs/protocol.md` for the schema.

use serde::{Deserialize, Serialize};

use crate::arbitration::{AdjustKind, Diagnostic, EventKind, Mode, Role, TargetSpec};
use crate::geometry::Vec3;
use crate::kinematics::JointConfig;
use crate::perception::{BodyFrame, LandmarkFrame};
use crate::session::engine::StateSnapshot;

pub const PROTOCOL_VERSION: u32 = 1;

pub const CLIENT_MESSAGE_TYPES: &[&str] = &[
    "hello",
    "set_target_pixel",
    "set_target_3d",
    "adjust",
    "reset",
    "mode_select",
    "annotate_begin",
    "annotate_end",
    "annotation",
    "point_slider",
    "freedrive_goal",
    "hand_frame",
    "body_frame",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    Hello {
        role: Role,
    },
    SetTargetPixel {
        u: f64,
        v: f64,
    },
    #[serde(rename = "set_target_3d")]
    SetTarget3d {
        point: Vec3,
    },
    Adjust {
        kind: AdjustKind,
        magnitude: f64,
        #[serde(default)]
        direction: Option<[f64; 2]>,
    },
    Reset,
    ModeSelect {
        mode: Mode,
    },
    AnnotateBegin,
    AnnotateEnd,
    Annotation {
        payload: serde_json::Value,
    },
    PointSlider {
        enabled: bool,
    },
    FreedriveGoal {
        q: JointConfig,
    },
    HandFrame {
        points: Vec<Vec3>,
    },
    BodyFrame {
        points: Vec<Option<Vec3>>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    Parse,
    UnknownType,
    Invalid,
    Forbidden,
    NoRole,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReply {
    pub code: ErrorCode,
    pub message: String,
    /// 1-based position of a JSON syntax error.
    pub line: Option<usize>,
    pub column: Option<usize>,
}

impl ErrorReply {
    fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        ErrorReply {
            code,
            message: message.into(),
            line: None,
            column: None,
        }
    }
}

impl std::fmt::Display for ErrorReply {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:?}: {}", self.code, self.message)
    }
}

impl std::error::Error for ErrorReply {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Welcome {
        protocol: u32,
        engine_version: String,
        role: Role,
        tick_rate: f64,
    },
    Snapshot {
        snapshot: Box<StateSnapshot>,
    },
    Ack {
        of: String,
    },
    Error(ErrorReply),
    Diagnostic(Diagnostic),
}

/// What a validated client message turns into.
#[derive(Debug, Clone, PartialEq)]
pub enum Inbound {
    Hello(Role),
    Event(EventKind),
}

impl ClientMessage {
    pub fn into_inbound(self) -> Result<Inbound, ErrorReply> {
        let kind = match self {
            ClientMessage::Hello { role } => return Ok(Inbound::Hello(role)),
            ClientMessage::SetTargetPixel { u, v } => EventKind::SetTarget {
                target: TargetSpec::Pixel { u, v },
            },
            ClientMessage::SetTarget3d { point } => EventKind::SetTarget {
                target: TargetSpec::World { point },
            },
            ClientMessage::Adjust {
                kind,
                magnitude,
                direction,
            } => EventKind::Adjust {
                kind,
                magnitude,
                direction: direction.unwrap_or([1.0, 0.0]),
            },
            ClientMessage::Reset => EventKind::Reset,
            ClientMessage::ModeSelect { mode } => EventKind::ModeSelect { mode },
            ClientMessage::AnnotateBegin => EventKind::AnnotateBegin,
            ClientMessage::AnnotateEnd => EventKind::AnnotateEnd,
            ClientMessage::Annotation { payload } => EventKind::Annotation { payload },
            ClientMessage::PointSlider { enabled } => EventKind::PointSlider { enabled },
            ClientMessage::FreedriveGoal { q } => EventKind::FreedriveInput { goal: q },
            ClientMessage::HandFrame { points } => EventKind::HandFrame {
                frame: LandmarkFrame::new(points, 0.0)
                    .map_err(|e| ErrorReply::new(ErrorCode::Invalid, e.to_string()))?,
            },
            ClientMessage::BodyFrame { points } => EventKind::BodyFrame {
                frame: BodyFrame::new(points, 0.0).map_err(|e| ErrorReply::new(ErrorCode::Invalid, e.to_string()))?,
            },
        };
        Ok(Inbound::Event(kind))
    }
}

fn gate(inbound: Inbound, role: Option<Role>) -> Result<Inbound, ErrorReply> {
    match inbound {
        Inbound::Hello(_) => Ok(inbound),
        Inbound::Event(kind) => {
            let role = role.ok_or_else(|| ErrorReply::new(ErrorCode::NoRole, "send hello with a role first"))?;
            if kind.allowed_from(role) {
                Ok(Inbound::Event(kind))
            } else {
                Err(ErrorReply::new(
                    ErrorCode::Forbidden,
                    format!("{} is not available to the {:?} role", kind.name(), role),
                ))
            }
        }
    }
}

fn from_value(value: serde_json::Value) -> Result<ClientMessage, ErrorReply> {
    let ty = value
        .get("type")
        .and_then(|t| t.as_str())
        .ok_or_else(|| ErrorReply::new(ErrorCode::Invalid, "message needs a string \"type\" field"))?;
    if !CLIENT_MESSAGE_TYPES.contains(&ty) {
        return Err(ErrorReply::new(
            ErrorCode::UnknownType,
            format!("unknown message type \"{ty}\""),
        ));
    }
    serde_json::from_value(value).map_err(|e| ErrorReply::new(ErrorCode::Invalid, e.to_string()))
}

/// Parses and role-gates one text frame from a connection that has claimed
/// `role` (or none yet).
pub fn handle_message(text: &str, role: Option<Role>) -> Result<Inbound, ErrorReply> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| ErrorReply {
        code: ErrorCode::Parse,
        message: e.to_string(),
        line: Some(e.line()),
        column: Some(e.column()),
    })?;
    gate(from_value(value)?.into_inbound()?, role)
}

/// Scenario path: a message already parsed as JSON, sent by `role`.
pub fn parse_client_value(value: &serde_json::Value, role: Role) -> Result<EventKind, ErrorReply> {
    match gate(from_value(value.clone())?.into_inbound()?, Some(role))? {
        Inbound::Event(kind) => Ok(kind),
        Inbound::Hello(_) => Err(ErrorReply::new(ErrorCode::Invalid, "hello is not a scripted command")),
    }
}

//! Control arbitration between the helper, the worker and the robot.
//!
//! Each tick [`step`] drains the pending interaction events, updates the
//! [`ModeState`] and emits exactly one [`Command`]: a solve request for the
//! optimizer, a freedrive or reset slew that bypasses it, or a hold.

use std::collections::VecDeque;

use nalgebra::{Unit, UnitQuaternion};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{PlacedShape, Vec3};
use crate::history::MotionHistory;
use crate::kinematics::{CameraPose, JointConfig, RobotModel};
use crate::objectives::{ObjectiveConfig, TermKind, COLLISION_EPSILON};
use crate::optimizer::{SolveRequest, SolverConfig};
use crate::perception::{detect_pointing, hand_target, BodyFrame, LandmarkFrame};
use crate::session::click::{resolve_click, Intrinsics};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    HelperLed,
    RobotLed,
    WorkerLed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Helper,
    Worker,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdjustKind {
    Zoom,
    Orbit,
    Shift,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetSpec {
    Pixel { u: f64, v: f64 },
    World { point: Vec3 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EventKind {
    SetTarget {
        target: TargetSpec,
    },
    /// `magnitude` is in input units; `direction` is the screen drag
    /// (right, up) used by shift and orbit.
    Adjust {
        kind: AdjustKind,
        magnitude: f64,
        #[serde(default = "default_drag")]
        direction: [f64; 2],
    },
    Reset,
    AnnotateBegin,
    AnnotateEnd,
    /// Opaque overlay payload relayed between consoles.
    Annotation {
        payload: serde_json::Value,
    },
    ModeSelect {
        mode: Mode,
    },
    PointSlider {
        enabled: bool,
    },
    FreedriveInput {
        goal: JointConfig,
    },
    HandFrame {
        frame: LandmarkFrame,
    },
    BodyFrame {
        frame: BodyFrame,
    },
}

fn default_drag() -> [f64; 2] {
    [1.0, 0.0]
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::SetTarget { .. } => "set_target",
            EventKind::Adjust { .. } => "adjust",
            EventKind::Reset => "reset",
            EventKind::AnnotateBegin => "annotate_begin",
            EventKind::AnnotateEnd => "annotate_end",
            EventKind::Annotation { .. } => "annotation",
            EventKind::ModeSelect { .. } => "mode_select",
            EventKind::PointSlider { .. } => "point_slider",
            EventKind::FreedriveInput { .. } => "freedrive_input",
            EventKind::HandFrame { .. } => "hand_frame",
            EventKind::BodyFrame { .. } => "body_frame",
        }
    }

    /// Which role may originate this event.
    pub fn allowed_from(&self, role: Role) -> bool {
        match self {
            EventKind::FreedriveInput { .. } | EventKind::HandFrame { .. } | EventKind::BodyFrame { .. } => {
                role == Role::Worker
            }
            EventKind::Annotation { .. } => true,
            _ => role == Role::Helper,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionEvent {
    pub source: Role,
    pub timestamp: f64,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Info,
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub code: String,
    pub message: String,
}

impl Diagnostic {
    pub fn new(severity: Severity, code: &str, message: impl Into<String>) -> Self {
        Diagnostic {
            severity,
            code: code.to_string(),
            message: message.into(),
        }
    }
}

/// A view adjustment still being played out, in physical units
/// (metres for zoom/shift, radians of arc for orbit).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PendingAdjust {
    pub kind: AdjustKind,
    pub direction: [f64; 2],
    pub remaining: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ModeState {
    pub mode: Mode,
    pub target: Option<Vec3>,
    /// Point standoff (m), set by an approved point.
    pub standoff: Option<f64>,
    /// Camera-target distance captured when an orbit starts.
    pub orbit_distance: Option<f64>,
    pub adjust_queue: VecDeque<PendingAdjust>,
    pub annotating: bool,
    pub braked: bool,
    pub pointing_enabled: bool,
    /// Fingertip of the most recent detected point, if the last hand frame
    /// showed one.
    pub pointing_detected: Option<Vec3>,
    pub freedrive_active: bool,
    pub freedrive_goal: Option<JointConfig>,
    pub resetting: bool,
    pub last_hand_seen: Option<f64>,
    pub tracking_lost: bool,
    last_freedrive_at: Option<f64>,
    last_helper_adjust_at: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArbitrationConfig {
    /// Metres per zoom input unit.
    pub zoom_step: f64,
    /// Degrees of arc per orbit input unit.
    pub orbit_step_deg: f64,
    /// Metres per shift input unit.
    pub shift_step: f64,
    /// Cap on commanded camera translation for zoom and shift (m/s).
    pub max_adjust_speed: f64,
    /// Cap on orbit angular rate (deg/s).
    pub max_orbit_rate_deg: f64,
    /// Seconds without a hand before robot-led tracking reports loss.
    pub hand_loss_timeout: f64,
    /// Freedrive and helper adjust closer than this (s) trip the brake.
    pub conflict_window: f64,
    /// Joint slew rate for freedrive and reset (rad/s).
    pub slew_rate: f64,
    /// Camera-target distance after an approved point (m).
    pub point_standoff: f64,
}

impl Default for ArbitrationConfig {
    fn default() -> Self {
        ArbitrationConfig {
            zoom_step: 0.05,
            orbit_step_deg: 2.0,
            shift_step: 0.02,
            max_adjust_speed: 0.3,
            max_orbit_rate_deg: 30.0,
            hand_loss_timeout: 1.0,
            conflict_window: 0.1,
            slew_rate: 1.0,
            point_standoff: 0.40,
        }
    }
}

impl ArbitrationConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("zoom_step", self.zoom_step),
            ("orbit_step_deg", self.orbit_step_deg),
            ("shift_step", self.shift_step),
            ("max_adjust_speed", self.max_adjust_speed),
            ("max_orbit_rate_deg", self.max_orbit_rate_deg),
            ("hand_loss_timeout", self.hand_loss_timeout),
            ("slew_rate", self.slew_rate),
            ("point_standoff", self.point_standoff),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("arbitration.{name} must be positive")));
            }
        }
        if !(self.conflict_window >= 0.0) {
            return Err(Error::invalid("arbitration.conflict_window must be >= 0"));
        }
        Ok(())
    }
}

/// Joint-space slew that bypasses the optimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct SlewCommand {
    pub goal: JointConfig,
    /// rad/s
    pub max_rate: f64,
}

impl SlewCommand {
    /// Next configuration on the straight joint-space line towards the goal.
    pub fn advance(&self, from: &JointConfig, dt: f64) -> JointConfig {
        let gap = from.max_abs_diff(&self.goal);
        let step = self.max_rate * dt;
        if gap <= step {
            return self.goal.clone();
        }
        let frac = step / gap;
        JointConfig(
            from.0
                .iter()
                .zip(&self.goal.0)
                .map(|(a, b)| a + (b - a) * frac)
                .collect(),
        )
    }

    /// Number of ticks the slew takes from `from` (0 when already there).
    pub fn ticks_from(&self, from: &JointConfig, dt: f64) -> usize {
        (from.max_abs_diff(&self.goal) / (self.max_rate * dt)).ceil() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    Solve(Box<SolveRequest>),
    Freedrive(SlewCommand),
    Reset(SlewCommand),
    Hold,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Solve(_) => "solve",
            Command::Freedrive(_) => "freedrive",
            Command::Reset(_) => "reset",
            Command::Hold => "hold",
        }
    }
}

/// Everything `step` reads besides the state and the events.
#[derive(Debug, Clone, Copy)]
pub struct StepContext<'a> {
    pub model: &'a RobotModel,
    /// Static objects plus current body wrappers.
    pub environment: &'a [PlacedShape],
    pub history: &'a MotionHistory,
    pub q: &'a JointConfig,
    pub pose: &'a CameraPose,
    pub time: f64,
    pub dt: f64,
    pub reset_config: &'a JointConfig,
    pub intrinsics: &'a Intrinsics,
    pub fallback_range: f64,
    pub objectives: &'a ObjectiveConfig,
    pub solver: &'a SolverConfig,
    pub arbitration: &'a ArbitrationConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub state: ModeState,
    pub command: Command,
    pub diagnostics: Vec<Diagnostic>,
}

/// Result of turning one adjust input into a camera offset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdjustOffset {
    pub delta: Vec3,
    /// Camera-target distance captured for an orbit.
    pub captured_distance: Option<f64>,
}

/// Camera offset for one adjust input of physical `magnitude` (metres for
/// zoom and shift, radians of arc for orbit).
///
/// Screen mapping: drag-right moves the camera along `-left`, drag-up moves
/// it towards the image top, which is `-up` because the camera's `+x` axis
/// points to the image bottom when the horizon is level.
pub fn apply_adjust(
    kind: AdjustKind,
    magnitude: f64,
    direction: [f64; 2],
    state: &ModeState,
    pose: &CameraPose,
) -> Result<AdjustOffset> {
    if !magnitude.is_finite() || !direction.iter().all(|d| d.is_finite()) {
        return Err(Error::Rejected("adjust magnitude and direction must be finite".into()));
    }
    match kind {
        AdjustKind::Zoom => Ok(AdjustOffset {
            delta: magnitude * pose.forward(),
            captured_distance: None,
        }),
        AdjustKind::Shift => {
            let drag = drag_unit(direction);
            let delta = magnitude * (drag[0] * -pose.left() + drag[1] * -pose.up());
            Ok(AdjustOffset {
                delta,
                captured_distance: None,
            })
        }
        AdjustKind::Orbit => {
            let target = state
                .target
                .ok_or_else(|| Error::Rejected("orbit needs a target to orbit around".into()))?;
            let radial = pose.position - target;
            let captured = state.orbit_distance.unwrap_or_else(|| radial.norm());
            let drag = drag_unit(direction);
            let yaw = UnitQuaternion::from_axis_angle(&Vec3::z_axis(), drag[0] * magnitude);
            let pitch_axis = radial.cross(&Vec3::z());
            let pitch = Unit::try_new(pitch_axis, 1e-9)
                .map(|a| UnitQuaternion::from_axis_angle(&a, drag[1] * magnitude))
                .unwrap_or_else(UnitQuaternion::identity);
            let moved = yaw * (pitch * radial);
            Ok(AdjustOffset {
                delta: moved - radial,
                captured_distance: Some(captured),
            })
        }
    }
}

fn drag_unit(direction: [f64; 2]) -> [f64; 2] {
    let n = (direction[0] * direction[0] + direction[1] * direction[1]).sqrt();
    if n < 1e-12 {
        [1.0, 0.0]
    } else {
        [direction[0] / n, direction[1] / n]
    }
}

/// Applies an approved point: target the fingertip at the standoff distance.
pub fn approve_point(state: &ModeState, fingertip: Option<Vec3>, standoff: f64) -> ModeState {
    let mut next = state.clone();
    if let (true, Some(tip)) = (state.pointing_enabled, fingertip) {
        next.target = Some(tip);
        next.standoff = Some(standoff);
        next.orbit_distance = None;
    }
    next
}

/// Clears interaction state and returns the slew to the reset configuration.
pub fn reset(state: &ModeState, reset_config: &JointConfig, slew_rate: f64) -> (ModeState, SlewCommand) {
    let next = ModeState {
        mode: Mode::HelperLed,
        pointing_enabled: state.pointing_enabled,
        pointing_detected: state.pointing_detected,
        last_hand_seen: state.last_hand_seen,
        resetting: true,
        ..ModeState::default()
    };
    (
        next,
        SlewCommand {
            goal: reset_config.clone(),
            max_rate: slew_rate,
        },
    )
}

fn reject(diags: &mut Vec<Diagnostic>, event: &InteractionEvent, why: impl std::fmt::Display) {
    diags.push(Diagnostic::new(
        Severity::Warning,
        "rejected_event",
        format!("{} from {:?} rejected: {why}", event.kind.name(), event.source),
    ));
}

fn apply_event(state: &mut ModeState, event: &InteractionEvent, ctx: &StepContext<'_>, diags: &mut Vec<Diagnostic>) {
    if !event.kind.allowed_from(event.source) {
        reject(diags, event, "not permitted for this role");
        return;
    }
    if !event.timestamp.is_finite() {
        reject(diags, event, "timestamp is not finite");
        return;
    }
    let arb = ctx.arbitration;
    match &event.kind {
        EventKind::Reset => {
            let (next, _) = reset(state, ctx.reset_config, arb.slew_rate);
            *state = next;
        }
        _ if state.braked => {
            // Only reset leaves the brake; everything else is dropped.
        }
        EventKind::SetTarget { target } => {
            if state.mode == Mode::WorkerLed {
                reject(diags, event, "targets are not taken in worker-led mode");
                return;
            }
            let point = match *target {
                TargetSpec::World { point } => {
                    if !point.iter().all(|c| c.is_finite()) {
                        reject(diags, event, "target is not finite");
                        return;
                    }
                    point
                }
                TargetSpec::Pixel { u, v } => {
                    match resolve_click((u, v), ctx.intrinsics, ctx.pose, ctx.environment, ctx.fallback_range) {
                        Ok(p) => p,
                        Err(e) => {
                            reject(diags, event, e);
                            return;
                        }
                    }
                }
            };
            state.target = Some(point);
            state.standoff = None;
            state.orbit_distance = None;
            state.adjust_queue.retain(|a| a.kind != AdjustKind::Orbit);
        }
        EventKind::Adjust {
            kind,
            magnitude,
            direction,
        } => {
            if !magnitude.is_finite() || !direction.iter().all(|d| d.is_finite()) {
                reject(diags, event, "non-finite adjust");
                return;
            }
            if *kind == AdjustKind::Orbit {
                if state.mode == Mode::WorkerLed {
                    reject(diags, event, "orbit is unavailable in worker-led mode");
                    return;
                }
                let Some(target) = state.target else {
                    reject(diags, event, "orbit needs a target");
                    return;
                };
                if state.orbit_distance.is_none() {
                    state.orbit_distance = Some((ctx.pose.position - target).norm());
                }
            } else {
                // Zoom and shift change the camera-target distance on purpose.
                state.orbit_distance = None;
                state.standoff = None;
            }
            if state.mode == Mode::WorkerLed {
                state.last_helper_adjust_at = Some(event.timestamp);
                if let Some(fd) = state.last_freedrive_at {
                    if (event.timestamp - fd).abs() <= arb.conflict_window {
                        state.braked = true;
                    }
                }
            }
            let scale = match kind {
                AdjustKind::Zoom => arb.zoom_step,
                AdjustKind::Shift => arb.shift_step,
                AdjustKind::Orbit => arb.orbit_step_deg.to_radians(),
            };
            let physical = magnitude * scale;
            state.adjust_queue.push_back(PendingAdjust {
                kind: *kind,
                direction: *direction,
                remaining: physical,
            });
        }
        EventKind::AnnotateBegin => state.annotating = true,
        EventKind::AnnotateEnd => state.annotating = false,
        EventKind::Annotation { .. } => {}
        EventKind::ModeSelect { mode } => {
            if state.mode != *mode {
                state.mode = *mode;
                state.adjust_queue.clear();
                state.orbit_distance = None;
                state.freedrive_active = false;
                state.freedrive_goal = None;
                state.tracking_lost = false;
            }
        }
        EventKind::PointSlider { enabled } => state.pointing_enabled = *enabled,
        EventKind::FreedriveInput { goal } => {
            if state.mode != Mode::WorkerLed {
                reject(diags, event, "freedrive is only available in worker-led mode");
                return;
            }
            if goal.len() != ctx.model.dof() || !goal.is_finite() {
                reject(diags, event, "freedrive goal has the wrong dimension or is not finite");
                return;
            }
            state.freedrive_goal = Some(ctx.model.clamp(goal));
            state.freedrive_active = true;
            state.last_freedrive_at = Some(event.timestamp);
            if let Some(adj) = state.last_helper_adjust_at {
                if (event.timestamp - adj).abs() <= arb.conflict_window {
                    state.braked = true;
                }
            }
        }
        EventKind::HandFrame { frame } => {
            if let Err(e) = frame.validate() {
                reject(diags, event, e);
                return;
            }
            state.last_hand_seen = Some(event.timestamp);
            state.tracking_lost = false;
            state.pointing_detected = detect_pointing(frame);
            match state.mode {
                Mode::HelperLed => {
                    if state.pointing_detected.is_some() {
                        *state = approve_point(state, state.pointing_detected, arb.point_standoff);
                    }
                }
                Mode::RobotLed => state.target = Some(hand_target(frame)),
                Mode::WorkerLed => {}
            }
        }
        EventKind::BodyFrame { frame } => {
            if let Err(e) = frame.validate() {
                reject(diags, event, e);
            }
        }
    }
}

/// One arbitration tick.
pub fn step(state: &ModeState, events: &[InteractionEvent], ctx: &StepContext<'_>) -> StepOutput {
    let mut next = state.clone();
    let mut diagnostics = Vec::new();
    let mut last_time = f64::NEG_INFINITY;
    for event in events {
        if event.timestamp < last_time {
            reject(&mut diagnostics, event, "events out of time order");
            continue;
        }
        last_time = event.timestamp;
        apply_event(&mut next, event, ctx, &mut diagnostics);
    }

    if next.braked {
        return StepOutput {
            state: next,
            command: Command::Hold,
            diagnostics,
        };
    }

    if next.resetting {
        if ctx.q == ctx.reset_config {
            next.resetting = false;
        } else {
            let slew = SlewCommand {
                goal: ctx.reset_config.clone(),
                max_rate: ctx.arbitration.slew_rate,
            };
            return StepOutput {
                state: next,
                command: Command::Reset(slew),
                diagnostics,
            };
        }
    }

    if next.annotating {
        return StepOutput {
            state: next,
            command: Command::Hold,
            diagnostics,
        };
    }

    if next.mode == Mode::RobotLed {
        let lost = next
            .last_hand_seen
            .is_none_or(|t| ctx.time - t > ctx.arbitration.hand_loss_timeout);
        if lost && !next.tracking_lost {
            diagnostics.push(Diagnostic::new(
                Severity::Warning,
                "tracking_lost",
                "no hand detected; holding the last target",
            ));
        }
        next.tracking_lost = lost;
    }

    if next.mode == Mode::WorkerLed && next.freedrive_active {
        if let Some(goal) = next.freedrive_goal.clone() {
            if *ctx.q == goal {
                next.freedrive_active = false;
                next.freedrive_goal = None;
            } else {
                return StepOutput {
                    state: next,
                    command: Command::Freedrive(SlewCommand {
                        goal,
                        max_rate: ctx.arbitration.slew_rate,
                    }),
                    diagnostics,
                };
            }
        }
    }

    let adjust = take_adjust_slice(&mut next, ctx, &mut diagnostics);

    if next.mode == Mode::WorkerLed && adjust.is_none() {
        return StepOutput {
            state: next,
            command: Command::Hold,
            diagnostics,
        };
    }

    let request = build_request(&next, adjust, ctx);
    StepOutput {
        state: next,
        command: Command::Solve(Box::new(request)),
        diagnostics,
    }
}

/// Pops this tick's slice of the front adjust and turns it into an offset.
fn take_adjust_slice(state: &mut ModeState, ctx: &StepContext<'_>, diags: &mut Vec<Diagnostic>) -> Option<Vec3> {
    let arb = ctx.arbitration;
    loop {
        let front = *state.adjust_queue.front()?;
        let cap = match front.kind {
            AdjustKind::Orbit => arb.max_orbit_rate_deg.to_radians() * ctx.dt,
            _ => arb.max_adjust_speed * ctx.dt,
        };
        let slice = front.remaining.signum() * front.remaining.abs().min(cap);
        let remaining = front.remaining - slice;
        if remaining.abs() <= 1e-12 {
            state.adjust_queue.pop_front();
        } else {
            state.adjust_queue[0].remaining = remaining;
        }
        match apply_adjust(front.kind, slice, front.direction, state, ctx.pose) {
            Ok(offset) => {
                if let Some(d) = offset.captured_distance {
                    state.orbit_distance.get_or_insert(d);
                }
                return Some(offset.delta);
            }
            Err(e) => {
                diags.push(Diagnostic::new(
                    Severity::Warning,
                    "rejected_event",
                    format!("adjust dropped: {e}"),
                ));
                state.adjust_queue.pop_front();
            }
        }
    }
}

fn build_request(state: &ModeState, adjust: Option<Vec3>, ctx: &StepContext<'_>) -> SolveRequest {
    let cfg = ctx.objectives;
    let mut terms = Vec::new();
    let autonomous = state.mode != Mode::WorkerLed;
    if autonomous {
        if let Some(target) = state.target {
            terms.push(cfg.term(TermKind::SetTarget { target }));
            if let Some(distance) = state.orbit_distance.or(state.standoff) {
                terms.push(cfg.term(TermKind::KeepDistance { target, distance }));
            }
        }
    }
    if let Some(delta) = adjust {
        terms.push(cfg.term(TermKind::Adjust { delta }));
    }
    if autonomous {
        terms.push(cfg.term(TermKind::Upright));
    }
    for order in 1..=3 {
        terms.push(cfg.term(TermKind::JointSmoothness { order }));
    }
    if autonomous {
        terms.push(cfg.term(TermKind::EeVel));
    }
    terms.push(cfg.term(TermKind::JointLimits));
    terms.push(cfg.term(TermKind::SelfCollision {
        epsilon: COLLISION_EPSILON,
    }));
    terms.push(cfg.term(TermKind::EnvCollision {
        epsilon: COLLISION_EPSILON,
    }));
    SolveRequest {
        seed: ctx.q.clone(),
        terms,
        history: ctx.history.clone(),
        environment: ctx.environment.to_vec(),
        dt: ctx.dt,
        config: *ctx.solver,
    }
}

//! The fixed-step control loop body: drain events, arbitrate, solve,
//! integrate, record history, snapshot.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::arbitration::{
    self, Command, Diagnostic, EventKind, InteractionEvent, Mode, ModeState, Role, Severity, StepContext,
};
use crate::error::Result;
use crate::geometry::{distance, ConvexShape, PlacedShape, Vec3};
use crate::history::MotionHistory;
use crate::kinematics::{CameraPose, JointConfig};
use crate::objectives::{self_collision_pairs, DIST_FLOOR};
use crate::optimizer::solve;
use crate::perception::{body_wrappers, ActorScript, BodyFrame, LandmarkFrame, MedianFilter};
use crate::session::files::{ScenarioFile, Scene, SessionConfig};
use crate::session::protocol::parse_client_value;
use crate::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraState {
    pub position: Vec3,
    /// `[x, y, z, w]`
    pub orientation: [f64; 4],
    pub forward: Vec3,
    pub left: Vec3,
    pub up: Vec3,
}

impl From<&CameraPose> for CameraState {
    fn from(pose: &CameraPose) -> Self {
        let q = pose.orientation.coords;
        CameraState {
            position: pose.position,
            orientation: [q.x, q.y, q.z, q.w],
            forward: pose.forward(),
            left: pose.left(),
            up: pose.up(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeState {
    pub name: String,
    pub shape: ConvexShape,
    pub position: Vec3,
    /// `[x, y, z, w]`
    pub orientation: [f64; 4],
}

impl ShapeState {
    fn new(name: String, placed: &PlacedShape) -> Self {
        let q = placed.transform.rotation.coords;
        ShapeState {
            name,
            shape: placed.shape,
            position: placed.transform.translation.vector,
            orientation: [q.x, q.y, q.z, q.w],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub mode: Mode,
    pub target: Option<Vec3>,
    pub standoff: Option<f64>,
    pub orbit_distance: Option<f64>,
    pub adjust_pending: usize,
    pub annotating: bool,
    pub braked: bool,
    pub pointing_enabled: bool,
    pub pointing_detected: Option<Vec3>,
    pub freedrive_active: bool,
    pub resetting: bool,
    pub tracking_lost: bool,
}

impl From<&ModeState> for ModeSummary {
    fn from(s: &ModeState) -> Self {
        ModeSummary {
            mode: s.mode,
            target: s.target,
            standoff: s.standoff,
            orbit_distance: s.orbit_distance,
            adjust_pending: s.adjust_queue.len(),
            annotating: s.annotating,
            braked: s.braked,
            pointing_enabled: s.pointing_enabled,
            pointing_detected: s.pointing_detected,
            freedrive_active: s.freedrive_active,
            resetting: s.resetting,
            tracking_lost: s.tracking_lost,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSummary {
    pub iterations: usize,
    pub converged: bool,
    pub objective: f64,
}

/// Everything a console needs to draw one tick. Every field is present on
/// every tick; absent values serialize as `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSnapshot {
    pub tick: u64,
    pub time: f64,
    pub q: JointConfig,
    pub camera: CameraState,
    pub mode: ModeSummary,
    pub command: String,
    pub objects: Vec<ShapeState>,
    pub links: Vec<ShapeState>,
    pub body_wrappers: Vec<ShapeState>,
    pub hand: Option<Vec<Vec3>>,
    pub body: Option<Vec<Option<Vec3>>>,
    pub annotations: Vec<serde_json::Value>,
    pub solver: Option<SolverSummary>,
    pub in_collision: bool,
    /// Smallest link-to-environment surface distance.
    pub min_env_distance: Option<f64>,
    /// Smallest distance between non-adjacent links.
    pub min_self_distance: Option<f64>,
    pub diagnostics: Vec<Diagnostic>,
}

/// What one tick consumed and produced, for logging.
#[derive(Debug, Clone, PartialEq)]
pub struct TickRecord {
    pub events: Vec<InteractionEvent>,
    pub snapshot: StateSnapshot,
}

#[derive(Debug, Clone)]
struct ScriptedEvent {
    t: f64,
    role: Role,
    kind: EventKind,
}

/// Single-writer owner of robot and arbitration state.
#[derive(Debug, Clone)]
pub struct Engine {
    scene: Scene,
    config: SessionConfig,
    reset_config: JointConfig,
    initial_q: JointConfig,
    state: ModeState,
    q: JointConfig,
    pose: CameraPose,
    history: MotionHistory,
    tick: u64,
    body_filter: MedianFilter,
    body: Option<BodyFrame>,
    body_shapes: Vec<PlacedShape>,
    hand: Option<LandmarkFrame>,
    actor: Option<ActorScript>,
    script: VecDeque<ScriptedEvent>,
    pending: Vec<(Role, EventKind)>,
}

impl Engine {
    pub fn new(scene: Scene, config: SessionConfig) -> Result<Engine> {
        config.validate()?;
        let reset_config = config
            .reset_config
            .clone()
            .unwrap_or_else(|| scene.reset_config.clone());
        if reset_config.len() != scene.model.dof() || !scene.model.within_limits(&reset_config) {
            return Err(Error::invalid(
                "reset_config must match the robot and lie inside its limits",
            ));
        }
        let q = reset_config.clone();
        let pose = scene.model.forward_kinematics(&q)?;
        let mut history = MotionHistory::new();
        history.push(0.0, q.clone(), pose)?;
        Ok(Engine {
            body_filter: MedianFilter::new(config.median_window)?,
            scene,
            config,
            reset_config,
            initial_q: q.clone(),
            state: ModeState::default(),
            q,
            pose,
            history,
            tick: 0,
            body: None,
            body_shapes: Vec::new(),
            hand: None,
            actor: None,
            script: VecDeque::new(),
            pending: Vec::new(),
        })
    }

    /// Loads a scenario's actor, scripted commands and starting pose.
    pub fn with_scenario(mut self, scenario: &ScenarioFile) -> Result<Engine> {
        self.actor = scenario.actor_script()?;
        let mut script = Vec::with_capacity(scenario.commands.len());
        for (i, c) in scenario.commands.iter().enumerate() {
            let kind = parse_client_value(&c.message, c.role)
                .map_err(|e| Error::Scenario(format!("commands[{i}]: {}", e.message)))?;
            script.push(ScriptedEvent {
                t: c.t,
                role: c.role,
                kind,
            });
        }
        script.sort_by(|a, b| a.t.total_cmp(&b.t));
        self.script = script.into();
        match &scenario.initial_q {
            Some(q0) => self
                .with_initial_q(q0.clone())
                .map_err(|e| Error::Scenario(format!("initial_q: {e}"))),
            None => Ok(self),
        }
    }

    /// Starts from `q0` instead of the reset configuration. Only valid
    /// before the first tick.
    pub fn with_initial_q(mut self, q0: JointConfig) -> Result<Engine> {
        if self.tick != 0 {
            return Err(Error::invalid(
                "initial configuration can only be set before the first tick",
            ));
        }
        if q0.len() != self.scene.model.dof() || !self.scene.model.within_limits(&q0) {
            return Err(Error::invalid("must match the robot and lie inside its limits"));
        }
        self.pose = self.scene.model.forward_kinematics(&q0)?;
        self.initial_q = q0.clone();
        self.q = q0;
        self.history.clear();
        self.history.push(0.0, self.q.clone(), self.pose)?;
        Ok(self)
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn state(&self) -> &ModeState {
        &self.state
    }

    pub fn q(&self) -> &JointConfig {
        &self.q
    }

    pub fn pose(&self) -> &CameraPose {
        &self.pose
    }

    pub fn history(&self) -> &MotionHistory {
        &self.history
    }

    pub fn tick_index(&self) -> u64 {
        self.tick
    }

    pub fn dt(&self) -> f64 {
        self.config.dt()
    }

    pub fn time(&self) -> f64 {
        self.tick as f64 * self.dt()
    }

    /// Configuration at tick 0.
    pub fn initial_q(&self) -> &JointConfig {
        &self.initial_q
    }

    pub fn reset_config(&self) -> &JointConfig {
        &self.reset_config
    }

    /// Static objects plus the current body wrappers.
    pub fn environment(&self) -> Vec<PlacedShape> {
        let mut env = self.scene.shapes();
        env.extend(self.body_shapes.iter().copied());
        env
    }

    /// Queues an event for the next tick; it is stamped with that tick's time.
    pub fn submit(&mut self, role: Role, kind: EventKind) {
        self.pending.push((role, kind));
    }

    /// Runs one tick with queued, scripted and actor-generated events.
    pub fn tick(&mut self) -> TickRecord {
        let time = (self.tick + 1) as f64 * self.dt();
        let mut events: Vec<InteractionEvent> = self
            .pending
            .drain(..)
            .map(|(source, kind)| InteractionEvent {
                source,
                timestamp: time,
                kind,
            })
            .collect();
        while self.script.front().is_some_and(|s| s.t <= time + 1e-9) {
            let s = self.script.pop_front().expect("front checked");
            events.push(InteractionEvent {
                source: s.role,
                timestamp: time,
                kind: s.kind,
            });
        }
        if let Some(actor) = &self.actor {
            let sample = actor.sample(time);
            if let Some(mut hand) = sample.hand {
                hand.timestamp = time;
                events.push(InteractionEvent {
                    source: Role::Worker,
                    timestamp: time,
                    kind: EventKind::HandFrame { frame: hand },
                });
            }
            let mut body = sample.body.unwrap_or_else(|| BodyFrame::empty(time));
            body.timestamp = time;
            events.push(InteractionEvent {
                source: Role::Worker,
                timestamp: time,
                kind: EventKind::BodyFrame { frame: body },
            });
        }
        self.advance(events)
    }

    /// Runs one tick with exactly `events` (already stamped). Replay uses
    /// this to re-feed a recorded stream.
    pub fn advance(&mut self, mut events: Vec<InteractionEvent>) -> TickRecord {
        self.tick += 1;
        let time = self.time();
        let dt = self.dt();
        let mut annotations = Vec::new();
        let mut hand_this_tick = false;
        for event in &mut events {
            match &mut event.kind {
                EventKind::HandFrame { frame } => {
                    frame.timestamp = event.timestamp;
                    if event.source == Role::Worker && frame.validate().is_ok() {
                        self.hand = Some(frame.clone());
                        hand_this_tick = true;
                    }
                }
                EventKind::BodyFrame { frame } => {
                    frame.timestamp = event.timestamp;
                    if event.source == Role::Worker && frame.validate().is_ok() {
                        let filtered = self.body_filter.push(frame.clone());
                        self.body_shapes = body_wrappers(&filtered, &self.config.body_wrappers);
                        self.body = Some(filtered);
                    }
                }
                EventKind::Annotation { payload } => annotations.push(payload.clone()),
                _ => {}
            }
        }
        if !hand_this_tick {
            self.hand = None;
        }

        let environment = self.environment();
        let ctx = StepContext {
            model: &self.scene.model,
            environment: &environment,
            history: &self.history,
            q: &self.q,
            pose: &self.pose,
            time,
            dt,
            reset_config: &self.reset_config,
            intrinsics: &self.scene.intrinsics,
            fallback_range: self.scene.fallback_range,
            objectives: &self.config.objectives,
            solver: &self.config.solver,
            arbitration: &self.config.arbitration,
        };
        let out = arbitration::step(&self.state, &events, &ctx);
        let mut diagnostics = out.diagnostics;
        let was_braked = self.state.braked;
        self.state = out.state;
        if self.state.braked && !was_braked {
            diagnostics.push(Diagnostic::new(
                Severity::Warning,
                "braked",
                "conflicting freedrive and helper input; motion stopped until reset",
            ));
        }

        let mut solver = None;
        let mut solver_collision = false;
        let next_q = match &out.command {
            Command::Solve(req) => match solve(&self.scene.model, req) {
                Ok(res) => {
                    solver = Some(SolverSummary {
                        iterations: res.iterations,
                        converged: res.converged,
                        objective: res.objective_value,
                    });
                    solver_collision = res.in_collision;
                    if let Some(msg) = res.diagnostic {
                        diagnostics.push(Diagnostic::new(Severity::Warning, "solver", msg));
                    }
                    res.q_star
                }
                Err(e) => {
                    diagnostics.push(Diagnostic::new(Severity::Error, "solver", e.to_string()));
                    self.q.clone()
                }
            },
            Command::Freedrive(slew) | Command::Reset(slew) => self.scene.model.clamp(&slew.advance(&self.q, dt)),
            Command::Hold => self.q.clone(),
        };
        self.q = next_q;
        self.pose = self
            .scene
            .model
            .forward_kinematics(&self.q)
            .expect("joint configuration keeps the model dimension");
        self.history
            .push(time, self.q.clone(), self.pose)
            .expect("tick times increase");

        let chain = self.scene.model.chain_state(&self.q).expect("checked above");
        let links = self.scene.model.placed_wrappers(&chain);
        let min_env_distance = links
            .iter()
            .flat_map(|l| environment.iter().map(move |e| distance(l, e)))
            .min_by(f64::total_cmp);
        let min_self_distance = self_collision_pairs(links.len())
            .into_iter()
            .map(|(i, j)| distance(&links[i], &links[j]))
            .min_by(f64::total_cmp);
        let touching = |d: Option<f64>| d.is_some_and(|d| d <= DIST_FLOOR);
        let in_collision = solver_collision || touching(min_env_distance) || touching(min_self_distance);
        if in_collision {
            diagnostics.push(Diagnostic::new(
                Severity::Error,
                "in_collision",
                format!(
                    "robot within {DIST_FLOOR} m of contact (env {:?}, self {:?})",
                    min_env_distance, min_self_distance
                ),
            ));
        }

        let snapshot = StateSnapshot {
            tick: self.tick,
            time,
            q: self.q.clone(),
            camera: CameraState::from(&self.pose),
            mode: ModeSummary::from(&self.state),
            command: out.command.name().to_string(),
            objects: self
                .scene
                .objects
                .iter()
                .map(|o| ShapeState::new(o.name.clone(), &o.shape))
                .collect(),
            links: self
                .scene
                .model
                .link_wrappers
                .iter()
                .zip(&links)
                .map(|(w, placed)| ShapeState::new(format!("link_{}", w.link), placed))
                .collect(),
            body_wrappers: self
                .body_shapes
                .iter()
                .enumerate()
                .map(|(i, s)| ShapeState::new(format!("body_{i}"), s))
                .collect(),
            hand: self.hand.as_ref().map(|h| h.points.clone()),
            body: self.body.as_ref().map(|b| b.points.clone()),
            annotations,
            solver,
            in_collision,
            min_env_distance,
            min_self_distance,
            diagnostics,
        };
        TickRecord { events, snapshot }
    }
}

impl SessionConfig {
    /// Drops the solver's wall-clock budget so runs are reproducible.
    pub fn deterministic(mut self) -> Self {
        self.solver = self.solver.deterministic();
        self
    }
}

/// Reference scene, default configuration, no wall-clock solver budget.
pub fn default_engine(tick_rate: f64) -> Result<Engine> {
    let config = SessionConfig {
        tick_rate,
        ..SessionConfig::default()
    }
    .deterministic();
    Engine::new(Scene::reference(), config)
}

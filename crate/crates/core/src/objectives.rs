//! Objective terms and the Groove normalization.
//!
//! Each term maps a joint configuration to a raw scalar `chi`. The solver
//! minimizes `sum_i w_i * groove(chi_i(q))`. Raw values and their joint-space
//! gradients are computed together from a single FK pass.

use std::collections::BTreeMap;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{proximity, PlacedShape, Vec3};
use crate::history::MotionHistory;
use crate::kinematics::{CameraPose, ChainState, JointConfig, RobotModel};

/// Collision distances are clamped below at this value (m).
pub const DIST_FLOOR: f64 = 1e-4;

/// Cutoff distance between collision and non-collision.
pub const COLLISION_EPSILON: f64 = 0.02;

/// Groove loss `-exp(-(x-s)^2 / (2c^2)) + r (x-s)^4`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrooveParams {
    pub s: f64,
    pub c: f64,
    pub r: f64,
}

impl GrooveParams {
    pub const fn new(s: f64, c: f64, r: f64) -> Self {
        GrooveParams { s, c, r }
    }

    pub fn validate(&self) -> Result<()> {
        if self.c > 0.0 && self.r >= 0.0 && self.s.is_finite() && self.c.is_finite() && self.r.is_finite() {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "groove parameters need c > 0 and r >= 0 (got c={}, r={})",
                self.c, self.r
            )))
        }
    }
}

pub fn groove(x: f64, p: &GrooveParams) -> f64 {
    let e = x - p.s;
    -(-e * e / (2.0 * p.c * p.c)).exp() + p.r * e.powi(4)
}

pub fn groove_derivative(x: f64, p: &GrooveParams) -> f64 {
    let e = x - p.s;
    let c2 = p.c * p.c;
    (e / c2) * (-e * e / (2.0 * c2)).exp() + 4.0 * p.r * e.powi(3)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    SetTarget,
    Adjust,
    KeepDistance,
    Upright,
    JointVel,
    JointAcc,
    JointJerk,
    EeVel,
    JointLimits,
    SelfCollision,
    EnvCollision,
}

impl ObjectiveKind {
    pub const ALL: [ObjectiveKind; 11] = [
        ObjectiveKind::SetTarget,
        ObjectiveKind::Adjust,
        ObjectiveKind::KeepDistance,
        ObjectiveKind::Upright,
        ObjectiveKind::JointVel,
        ObjectiveKind::JointAcc,
        ObjectiveKind::JointJerk,
        ObjectiveKind::EeVel,
        ObjectiveKind::JointLimits,
        ObjectiveKind::SelfCollision,
        ObjectiveKind::EnvCollision,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ObjectiveKind::SetTarget => "set_target",
            ObjectiveKind::Adjust => "adjust",
            ObjectiveKind::KeepDistance => "keep_distance",
            ObjectiveKind::Upright => "upright",
            ObjectiveKind::JointVel => "joint_vel",
            ObjectiveKind::JointAcc => "joint_acc",
            ObjectiveKind::JointJerk => "joint_jerk",
            ObjectiveKind::EeVel => "ee_vel",
            ObjectiveKind::JointLimits => "joint_limits",
            ObjectiveKind::SelfCollision => "self_collision",
            ObjectiveKind::EnvCollision => "env_collision",
        }
    }
}

/// Kind-specific payload of a term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TermKind {
    SetTarget {
        target: Vec3,
    },
    /// Offset relative to the newest camera position in the history.
    Adjust {
        delta: Vec3,
    },
    KeepDistance {
        target: Vec3,
        distance: f64,
    },
    Upright,
    /// Finite-difference order 1, 2 or 3.
    JointSmoothness {
        order: u8,
    },
    EeVel,
    JointLimits,
    SelfCollision {
        epsilon: f64,
    },
    EnvCollision {
        epsilon: f64,
    },
}

impl TermKind {
    pub fn kind(&self) -> ObjectiveKind {
        match self {
            TermKind::SetTarget { .. } => ObjectiveKind::SetTarget,
            TermKind::Adjust { .. } => ObjectiveKind::Adjust,
            TermKind::KeepDistance { .. } => ObjectiveKind::KeepDistance,
            TermKind::Upright => ObjectiveKind::Upright,
            TermKind::JointSmoothness { order: 1 } => ObjectiveKind::JointVel,
            TermKind::JointSmoothness { order: 2 } => ObjectiveKind::JointAcc,
            TermKind::JointSmoothness { .. } => ObjectiveKind::JointJerk,
            TermKind::EeVel => ObjectiveKind::EeVel,
            TermKind::JointLimits => ObjectiveKind::JointLimits,
            TermKind::SelfCollision { .. } => ObjectiveKind::SelfCollision,
            TermKind::EnvCollision { .. } => ObjectiveKind::EnvCollision,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveTerm {
    pub kind: TermKind,
    pub weight: f64,
    pub groove: GrooveParams,
}

impl ObjectiveTerm {
    pub fn validate(&self) -> Result<()> {
        if !(self.weight >= 0.0) || !self.weight.is_finite() {
            return Err(Error::invalid(format!("term weight must be >= 0, got {}", self.weight)));
        }
        self.groove.validate()?;
        match self.kind {
            TermKind::JointSmoothness { order } if !(1..=3).contains(&order) => {
                Err(Error::invalid(format!("smoothness order must be 1..=3, got {order}")))
            }
            TermKind::KeepDistance { distance, .. } if !(distance > 0.0) => {
                Err(Error::invalid("keep-distance standoff must be positive"))
            }
            TermKind::SelfCollision { epsilon } | TermKind::EnvCollision { epsilon } if !(epsilon > 0.0) => {
                Err(Error::invalid("collision epsilon must be positive"))
            }
            _ => Ok(()),
        }
    }
}

/// Weight and Groove parameters for one objective kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TermConfig {
    pub weight: f64,
    pub s: f64,
    pub c: f64,
    pub r: f64,
}

impl TermConfig {
    pub fn groove(&self) -> GrooveParams {
        GrooveParams::new(self.s, self.c, self.r)
    }
}

/// Per-kind weights and Groove parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectiveConfig(pub BTreeMap<ObjectiveKind, TermConfig>);

impl Default for ObjectiveConfig {
    fn default() -> Self {
        let t = |weight, s, c, r| TermConfig { weight, s, c, r };
        // Smoothness terms use c = 0.3, r = 1 in per-tick units, rescaled
        // to the per-second derivatives at 60 Hz: c * 60^k and r / 60^(4k).
        let map = [
            (ObjectiveKind::SetTarget, t(30.0, 0.0, 0.1, 10.0)),
            (ObjectiveKind::Adjust, t(30.0, 0.0, 0.02, 10.0)),
            (ObjectiveKind::KeepDistance, t(10.0, 0.0, 0.1, 10.0)),
            (ObjectiveKind::Upright, t(5.0, 0.0, 0.1, 10.0)),
            (ObjectiveKind::JointVel, t(3.0, 0.0, 18.0, 7.716e-8)),
            (ObjectiveKind::JointAcc, t(2.0, 0.0, 1080.0, 5.954e-15)),
            (ObjectiveKind::JointJerk, t(1.0, 0.0, 64800.0, 4.594e-22)),
            (ObjectiveKind::EeVel, t(5.0, 0.0, 0.02, 10.0)),
            (ObjectiveKind::JointLimits, t(1.0, 0.0, 0.1, 10.0)),
            (ObjectiveKind::SelfCollision, t(1.0, 0.0, 1.0, 0.01)),
            (ObjectiveKind::EnvCollision, t(1.0, 0.0, 1.0, 0.01)),
        ]
        .into_iter()
        .collect();
        ObjectiveConfig(map)
    }
}

impl ObjectiveConfig {
    pub fn get(&self, kind: ObjectiveKind) -> TermConfig {
        self.0
            .get(&kind)
            .copied()
            .or_else(|| ObjectiveConfig::default().0.get(&kind).copied())
            .expect("defaults cover every kind")
    }

    pub fn term(&self, kind: TermKind) -> ObjectiveTerm {
        let cfg = self.get(kind.kind());
        ObjectiveTerm {
            kind,
            weight: cfg.weight,
            groove: cfg.groove(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (kind, cfg) in &self.0 {
            if !(cfg.weight >= 0.0) {
                return Err(Error::invalid(format!("{}: weight must be >= 0", kind.name())));
            }
            cfg.groove()
                .validate()
                .map_err(|e| Error::invalid(format!("{}: {e}", kind.name())))?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Raw objective values on poses and histories.

/// Orthogonal distance from `t` to the camera's forward ray. Targets behind
/// the camera measure to the ray origin.
pub fn chi_set_target(pose: &CameraPose, t: &Vec3) -> f64 {
    let w = t - pose.position;
    let v = pose.forward();
    let along = w.dot(&v);
    if along >= 0.0 {
        (w - along * v).norm()
    } else {
        w.norm()
    }
}

pub fn chi_adjust(pose_now: &CameraPose, pose_prev: &CameraPose, delta: &Vec3) -> f64 {
    (pose_prev.position + delta - pose_now.position).norm()
}

/// Signed: positive when the camera is farther than `d`.
pub fn chi_keep_distance(pose: &CameraPose, t: &Vec3, d: f64) -> f64 {
    (t - pose.position).norm() - d
}

/// Vertical component of the camera's left axis.
pub fn chi_upright(pose: &CameraPose) -> f64 {
    pose.left().z
}

/// Finite-difference coefficients applied to `q_t, q_{t-1}, ...`.
fn difference_coefficients(order: u8) -> &'static [f64] {
    match order {
        1 => &[1.0, -1.0],
        2 => &[1.0, -2.0, 1.0],
        _ => &[1.0, -3.0, 3.0, -1.0],
    }
}

/// Weighted joint velocity/acceleration/jerk from the newest `order + 1`
/// history entries. Joint `i` (0-based) carries weight `n - i`.
/// Returns 0 until the history is deep enough.
pub fn chi_joint_smoothness(history: &MotionHistory, order: u8) -> f64 {
    let k = order as usize;
    if !(1..=3).contains(&order) || history.len() < k + 1 {
        return 0.0;
    }
    let dt = (history.get(0).unwrap().time - history.get(k).unwrap().time) / k as f64;
    let configs: Vec<&[f64]> = (0..=k).map(|j| history.get(j).unwrap().q.as_slice()).collect();
    weighted_difference_norm(&configs, order, dt).0
}

/// Returns (chi, per-joint k-th differences).
fn weighted_difference_norm(configs: &[&[f64]], order: u8, dt: f64) -> (f64, Vec<f64>) {
    let coeffs = difference_coefficients(order);
    let n = configs[0].len();
    let scale = dt.powi(order as i32);
    let diffs: Vec<f64> = (0..n)
        .map(|i| coeffs.iter().zip(configs).map(|(c, q)| c * q[i]).sum::<f64>() / scale)
        .collect();
    let sum: f64 = diffs.iter().enumerate().map(|(i, d)| (n - i) as f64 * d * d).sum();
    (sum.sqrt(), diffs)
}

/// Camera displacement between the two newest history entries.
pub fn chi_ee_vel(history: &MotionHistory) -> f64 {
    match (history.get(0), history.get(1)) {
        (Some(a), Some(b)) => (a.pose.position - b.pose.position).norm(),
        _ => 0.0,
    }
}

const LIMIT_SCALE: f64 = 0.05;
const LIMIT_WIDTH: f64 = 0.45;
const LIMIT_POWER: i32 = 50;

pub fn chi_joint_limits(q: &JointConfig, model: &RobotModel) -> f64 {
    q.as_slice()
        .iter()
        .zip(model.lower_limits.iter().zip(&model.upper_limits))
        .map(|(&a, (&l, &u))| {
            let x = ((a - l) / (u - l) - 0.5) / LIMIT_WIDTH;
            LIMIT_SCALE * x.powi(LIMIT_POWER)
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CollisionMode {
    SelfCollision,
    Environment,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollisionValue {
    pub value: f64,
    pub in_collision: bool,
    /// Smallest pair distance seen (m), infinity for an empty sum.
    pub min_distance: f64,
}

/// Wrapped-link pairs that enter the self-collision sum: `(i, j)` with
/// `j >= i + 2`.
pub fn self_collision_pairs(m: usize) -> Vec<(usize, usize)> {
    (0..m).flat_map(|i| ((i + 2)..m).map(move |j| (i, j))).collect()
}

pub fn chi_collision(
    link_shapes: &[PlacedShape],
    others: &[PlacedShape],
    epsilon: f64,
    mode: CollisionMode,
) -> CollisionValue {
    let numerator = (5.0 * epsilon).powi(2);
    let mut acc = CollisionValue {
        value: 0.0,
        in_collision: false,
        min_distance: f64::INFINITY,
    };
    let mut add = |d: f64| {
        acc.min_distance = acc.min_distance.min(d);
        if d <= DIST_FLOOR {
            acc.in_collision = true;
        }
        let d = d.max(DIST_FLOOR);
        acc.value += numerator / (d * d);
    };
    match mode {
        CollisionMode::SelfCollision => {
            for (i, j) in self_collision_pairs(link_shapes.len()) {
                add(crate::geometry::distance(&link_shapes[i], &link_shapes[j]));
            }
        }
        CollisionMode::Environment => {
            for e in others {
                for l in link_shapes {
                    add(crate::geometry::distance(l, e));
                }
            }
        }
    }
    acc
}

// ---------------------------------------------------------------------------
// Joint-space evaluation with gradients.

/// Read-only inputs every term evaluation may need.
#[derive(Debug, Clone, Copy)]
pub struct EvalContext<'a> {
    pub model: &'a RobotModel,
    pub history: &'a MotionHistory,
    pub environment: &'a [PlacedShape],
    /// Control tick (s) used for the finite differences.
    pub dt: f64,
}

/// Raw term value with its gradient w.r.t. `q`.
#[derive(Debug, Clone, PartialEq)]
pub struct TermEval {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub in_collision: bool,
}

impl TermEval {
    fn smooth(value: f64, gradient: Vec<f64>) -> Self {
        TermEval {
            value,
            gradient,
            in_collision: false,
        }
    }
}

/// Per-configuration kinematic quantities shared by all terms.
pub struct Evaluated<'a> {
    pub q: &'a [f64],
    pub chain: ChainState,
    pub wrappers: Vec<PlacedShape>,
}

impl<'a> Evaluated<'a> {
    pub fn new(model: &RobotModel, q: &'a [f64]) -> Self {
        let chain = model.chain_state_unchecked(q);
        let wrappers = model.placed_wrappers(&chain);
        Evaluated { q, chain, wrappers }
    }
}

/// Raw value and analytic gradient of one term at `eval.q`.
pub fn evaluate_term(kind: &TermKind, ctx: &EvalContext<'_>, eval: &Evaluated<'_>) -> TermEval {
    let n = eval.q.len();
    let chain = &eval.chain;
    let cam = &chain.camera;
    match *kind {
        TermKind::SetTarget { target } => {
            let w = target - cam.position;
            let v = cam.forward();
            let along = w.dot(&v);
            let mut grad = vec![0.0; n];
            if along >= 0.0 {
                let u = w - along * v;
                let chi = u.norm();
                if chi > 1e-300 {
                    for (j, g) in grad.iter_mut().enumerate() {
                        let dw = -chain.camera_linear(j);
                        let dv = chain.camera_angular(j).cross(&v);
                        *g = (u.dot(&dw) - along * u.dot(&dv)) / chi;
                    }
                }
                TermEval::smooth(chi, grad)
            } else {
                let chi = w.norm();
                if chi > 1e-300 {
                    for (j, g) in grad.iter_mut().enumerate() {
                        *g = -w.dot(&chain.camera_linear(j)) / chi;
                    }
                }
                TermEval::smooth(chi, grad)
            }
        }
        TermKind::Adjust { delta } => match ctx.history.latest() {
            Some(prev) => {
                let e = prev.pose.position + delta - cam.position;
                point_distance_term(&e, -1.0, chain, n)
            }
            None => TermEval::smooth(0.0, vec![0.0; n]),
        },
        TermKind::KeepDistance { target, distance } => {
            let w = target - cam.position;
            let len = w.norm();
            let mut grad = vec![0.0; n];
            if len > 1e-300 {
                for (j, g) in grad.iter_mut().enumerate() {
                    *g = -w.dot(&chain.camera_linear(j)) / len;
                }
            }
            TermEval::smooth(len - distance, grad)
        }
        TermKind::Upright => {
            let left = cam.left();
            let grad = (0..n).map(|j| chain.camera_angular(j).cross(&left).z).collect();
            TermEval::smooth(left.z, grad)
        }
        TermKind::JointSmoothness { order } => {
            let k = order as usize;
            if ctx.history.len() < k {
                return TermEval::smooth(0.0, vec![0.0; n]);
            }
            let mut configs: Vec<&[f64]> = vec![eval.q];
            configs.extend((0..k).map(|j| ctx.history.get(j).unwrap().q.as_slice()));
            let (chi, diffs) = weighted_difference_norm(&configs, order, ctx.dt);
            let mut grad = vec![0.0; n];
            if chi > 1e-300 {
                let lead = 1.0 / ctx.dt.powi(order as i32);
                for (i, g) in grad.iter_mut().enumerate() {
                    *g = (n - i) as f64 * diffs[i] * lead / chi;
                }
            }
            TermEval::smooth(chi, grad)
        }
        TermKind::EeVel => match ctx.history.latest() {
            Some(prev) => {
                let e = cam.position - prev.pose.position;
                point_distance_term(&e, 1.0, chain, n)
            }
            None => TermEval::smooth(0.0, vec![0.0; n]),
        },
        TermKind::JointLimits => {
            let model = ctx.model;
            let mut value = 0.0;
            let mut grad = vec![0.0; n];
            for i in 0..n {
                let span = model.upper_limits[i] - model.lower_limits[i];
                let x = ((eval.q[i] - model.lower_limits[i]) / span - 0.5) / LIMIT_WIDTH;
                value += LIMIT_SCALE * x.powi(LIMIT_POWER);
                grad[i] = LIMIT_SCALE * LIMIT_POWER as f64 * x.powi(LIMIT_POWER - 1) / (LIMIT_WIDTH * span);
            }
            TermEval::smooth(value, grad)
        }
        TermKind::SelfCollision { epsilon } => {
            let wrappers = &ctx.model.link_wrappers;
            let pairs = self_collision_pairs(eval.wrappers.len()).into_iter().map(|(i, j)| {
                (
                    &eval.wrappers[i],
                    Some(wrappers[i].link),
                    &eval.wrappers[j],
                    Some(wrappers[j].link),
                )
            });
            collision_term(pairs, epsilon, chain, n)
        }
        TermKind::EnvCollision { epsilon } => {
            let wrappers = &ctx.model.link_wrappers;
            let pairs = ctx.environment.iter().flat_map(|e| {
                eval.wrappers
                    .iter()
                    .zip(wrappers)
                    .map(move |(placed, w)| (placed, Some(w.link), e, None))
            });
            collision_term(pairs, epsilon, chain, n)
        }
    }
}

/// `chi = |e|` where `de/dq_j = sign * J_j`.
fn point_distance_term(e: &Vector3<f64>, sign: f64, chain: &ChainState, n: usize) -> TermEval {
    let chi = e.norm();
    let mut grad = vec![0.0; n];
    if chi > 1e-300 {
        for (j, g) in grad.iter_mut().enumerate() {
            *g = sign * e.dot(&chain.camera_linear(j)) / chi;
        }
    }
    TermEval::smooth(chi, grad)
}

fn collision_term<'s>(
    pairs: impl Iterator<Item = (&'s PlacedShape, Option<usize>, &'s PlacedShape, Option<usize>)>,
    epsilon: f64,
    chain: &ChainState,
    n: usize,
) -> TermEval {
    let numerator = (5.0 * epsilon).powi(2);
    let mut value = 0.0;
    let mut grad = vec![0.0; n];
    let mut in_collision = false;
    for (a, link_a, b, link_b) in pairs {
        let prox = proximity(a, b);
        let (d, normal) = if prox.distance <= DIST_FLOOR {
            in_collision = true;
            // Push apart along the core witness direction, or the centers
            // when the cores themselves overlap.
            let dir = prox
                .normal
                .or_else(|| (prox.witness_a - prox.witness_b).try_normalize(1e-12))
                .or_else(|| (a.center() - b.center()).try_normalize(1e-12));
            (DIST_FLOOR, dir)
        } else {
            (prox.distance, prox.normal)
        };
        value += numerator / (d * d);
        let Some(normal) = normal else { continue };
        let factor = -2.0 * numerator / (d * d * d);
        for (j, g) in grad.iter_mut().enumerate() {
            let va = link_a.map_or(Vec3::zeros(), |l| chain.point_velocity(l, j, &prox.witness_a));
            let vb = link_b.map_or(Vec3::zeros(), |l| chain.point_velocity(l, j, &prox.witness_b));
            *g += factor * normal.dot(&(va - vb));
        }
    }
    TermEval {
        value,
        gradient: grad,
        in_collision,
    }
}

/// Raw value of a term at `q` (no gradient work beyond what the term needs).
pub fn term_value(kind: &TermKind, ctx: &EvalContext<'_>, q: &JointConfig) -> Result<f64> {
    if q.len() != ctx.model.dof() {
        return Err(Error::Dimension {
            expected: ctx.model.dof(),
            got: q.len(),
        });
    }
    let eval = Evaluated::new(ctx.model, q.as_slice());
    Ok(evaluate_term(kind, ctx, &eval).value)
}

//! Synthetic stand-in for the vision stack.
//!
//! Hand frames follow the 21-landmark hand topology and body frames the
//! 25-keypoint body topology. Landmarks are world-frame 3D points.

use std::collections::VecDeque;

use nalgebra::{Isometry3, Matrix3, Rotation3, Translation3, UnitQuaternion};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ConvexShape, PlacedShape, Vec3};

pub const HAND_LANDMARKS: usize = 21;
pub const BODY_KEYPOINTS: usize = 25;

pub mod hand {
    pub const WRIST: usize = 0;
    pub const THUMB_CMC: usize = 1;
    pub const THUMB_TIP: usize = 4;
    pub const INDEX_MCP: usize = 5;
    pub const INDEX_TIP: usize = 8;
    pub const MIDDLE_MCP: usize = 9;
    pub const MIDDLE_TIP: usize = 12;
    pub const RING_MCP: usize = 13;
    pub const RING_TIP: usize = 16;
    pub const PINKY_MCP: usize = 17;
    pub const PINKY_TIP: usize = 20;
}

pub mod body {
    pub const NOSE: usize = 0;
    pub const NECK: usize = 1;
    pub const R_SHOULDER: usize = 2;
    pub const R_ELBOW: usize = 3;
    pub const R_WRIST: usize = 4;
    pub const L_SHOULDER: usize = 5;
    pub const L_ELBOW: usize = 6;
    pub const L_WRIST: usize = 7;
    pub const MID_HIP: usize = 8;
    pub const R_HIP: usize = 9;
    pub const R_KNEE: usize = 10;
    pub const R_ANKLE: usize = 11;
    pub const L_HIP: usize = 12;
    pub const L_KNEE: usize = 13;
    pub const L_ANKLE: usize = 14;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkFrame {
    pub points: Vec<Vec3>,
    pub timestamp: f64,
}

impl LandmarkFrame {
    pub fn new(points: Vec<Vec3>, timestamp: f64) -> Result<Self> {
        let frame = LandmarkFrame { points, timestamp };
        frame.validate()?;
        Ok(frame)
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.len() != HAND_LANDMARKS {
            return Err(Error::invalid(format!(
                "hand frame needs {HAND_LANDMARKS} landmarks, got {}",
                self.points.len()
            )));
        }
        if self.points.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::invalid("hand frame contains non-finite landmarks"));
        }
        Ok(())
    }

    pub fn transformed(&self, iso: &Isometry3<f64>) -> LandmarkFrame {
        LandmarkFrame {
            points: self
                .points
                .iter()
                .map(|p| iso.transform_vector(p) + iso.translation.vector)
                .collect(),
            timestamp: self.timestamp,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BodyFrame {
    /// `None` marks an invalid keypoint.
    pub points: Vec<Option<Vec3>>,
    pub timestamp: f64,
}

impl BodyFrame {
    pub fn new(points: Vec<Option<Vec3>>, timestamp: f64) -> Result<Self> {
        let frame = BodyFrame { points, timestamp };
        frame.validate()?;
        Ok(frame)
    }

    pub fn empty(timestamp: f64) -> Self {
        BodyFrame {
            points: vec![None; BODY_KEYPOINTS],
            timestamp,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.len() != BODY_KEYPOINTS {
            return Err(Error::invalid(format!(
                "body frame needs {BODY_KEYPOINTS} keypoints, got {}",
                self.points.len()
            )));
        }
        Ok(())
    }

    pub fn get(&self, idx: usize) -> Option<Vec3> {
        self.points.get(idx).copied().flatten()
    }
}

/// Index fingertip when it is strictly farther from the thumb base than
/// every other fingertip (thumb tip included).
pub fn detect_pointing(frame: &LandmarkFrame) -> Option<Vec3> {
    if frame.points.len() != HAND_LANDMARKS {
        return None;
    }
    let base = frame.points[hand::THUMB_CMC];
    let index = (frame.points[hand::INDEX_TIP] - base).norm();
    let others = [hand::THUMB_TIP, hand::MIDDLE_TIP, hand::RING_TIP, hand::PINKY_TIP];
    others
        .iter()
        .all(|&i| index > (frame.points[i] - base).norm())
        .then_some(frame.points[hand::INDEX_TIP])
}

/// Mean of the wrist and the four finger bases.
pub fn hand_target(frame: &LandmarkFrame) -> Vec3 {
    let idx = [
        hand::WRIST,
        hand::INDEX_MCP,
        hand::MIDDLE_MCP,
        hand::RING_MCP,
        hand::PINKY_MCP,
    ];
    idx.iter().map(|&i| frame.points[i]).sum::<Vec3>() / idx.len() as f64
}

/// Per-keypoint, per-axis median over the last `window` frames.
#[derive(Debug, Clone)]
pub struct MedianFilter {
    window: usize,
    frames: VecDeque<BodyFrame>,
}

impl MedianFilter {
    pub fn new(window: usize) -> Result<Self> {
        if window < 3 || window.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "median window must be odd and >= 3, got {window}"
            )));
        }
        Ok(MedianFilter {
            window,
            frames: VecDeque::with_capacity(window),
        })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn push(&mut self, frame: BodyFrame) -> BodyFrame {
        if self.frames.len() == self.window {
            self.frames.pop_front();
        }
        self.frames.push_back(frame);
        self.current()
    }

    pub fn current(&self) -> BodyFrame {
        let timestamp = self.frames.back().map_or(0.0, |f| f.timestamp);
        let needed = self.window.div_ceil(2);
        let points = (0..BODY_KEYPOINTS)
            .map(|k| {
                let samples: Vec<Vec3> = self.frames.iter().filter_map(|f| f.get(k)).collect();
                if samples.len() < needed {
                    return None;
                }
                let axis = |a: usize| median(samples.iter().map(|p| p[a]).collect());
                Some(Vec3::new(axis(0), axis(1), axis(2)))
            })
            .collect();
        BodyFrame { points, timestamp }
    }

    pub fn reset(&mut self) {
        self.frames.clear();
    }
}

/// Runs a fresh filter over a whole stream, one output per input frame.
pub fn median_filter(stream: &[BodyFrame], window: usize) -> Result<Vec<BodyFrame>> {
    let mut filter = MedianFilter::new(window)?;
    Ok(stream.iter().map(|f| filter.push(f.clone())).collect())
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BodyWrapperConfig {
    pub head_radius: f64,
    pub limb_radius: f64,
    /// Half thickness of the torso box front to back.
    pub torso_half_depth: f64,
    /// Extra half-width/height added around the shoulder/hip rectangle.
    pub torso_margin: f64,
    /// Keypoint pairs wrapped by capsules.
    pub limb_segments: Vec<(usize, usize)>,
}

impl Default for BodyWrapperConfig {
    fn default() -> Self {
        use body::*;
        BodyWrapperConfig {
            head_radius: 0.12,
            limb_radius: 0.06,
            torso_half_depth: 0.1,
            torso_margin: 0.05,
            limb_segments: vec![
                (R_SHOULDER, R_ELBOW),
                (R_ELBOW, R_WRIST),
                (L_SHOULDER, L_ELBOW),
                (L_ELBOW, L_WRIST),
                (R_HIP, R_KNEE),
                (R_KNEE, R_ANKLE),
                (L_HIP, L_KNEE),
                (L_KNEE, L_ANKLE),
            ],
        }
    }
}

/// Convex wrappers for the valid parts of a (filtered) body frame.
pub fn body_wrappers(frame: &BodyFrame, cfg: &BodyWrapperConfig) -> Vec<PlacedShape> {
    let mut shapes = Vec::new();
    if let Some(head) = frame.get(body::NOSE) {
        shapes.push(PlacedShape::at(
            ConvexShape::Sphere {
                radius: cfg.head_radius,
            },
            head,
        ));
    }
    if let Some(torso) = torso_box(frame, cfg) {
        shapes.push(torso);
    }
    for &(a, b) in &cfg.limb_segments {
        if let (Some(pa), Some(pb)) = (frame.get(a), frame.get(b)) {
            shapes.push(segment_capsule(pa, pb, cfg.limb_radius));
        }
    }
    shapes
}

fn segment_capsule(a: Vec3, b: Vec3, radius: f64) -> PlacedShape {
    let axis = b - a;
    let len = axis.norm();
    let center = 0.5 * (a + b);
    if len < 1e-9 {
        return PlacedShape::at(ConvexShape::Sphere { radius }, center);
    }
    let rot = UnitQuaternion::rotation_between(&Vec3::z(), &axis)
        .unwrap_or_else(|| UnitQuaternion::from_axis_angle(&Vec3::x_axis(), std::f64::consts::PI));
    PlacedShape::new(
        ConvexShape::Capsule {
            half_length: 0.5 * len,
            radius,
        },
        Isometry3::from_parts(Translation3::from(center), rot),
    )
}

fn torso_box(frame: &BodyFrame, cfg: &BodyWrapperConfig) -> Option<PlacedShape> {
    let rs = frame.get(body::R_SHOULDER)?;
    let ls = frame.get(body::L_SHOULDER)?;
    let rh = frame.get(body::R_HIP)?;
    let lh = frame.get(body::L_HIP)?;
    let shoulders = 0.5 * (rs + ls);
    let hips = 0.5 * (rh + lh);
    let vertical = shoulders - hips;
    let height = vertical.norm();
    let up = vertical.try_normalize(1e-9).unwrap_or_else(Vec3::z);
    let across = (ls - rs) + (lh - rh);
    let mut side = across - up * up.dot(&across);
    if side.norm() < 1e-9 {
        side = up.cross(&Vec3::x());
        if side.norm() < 1e-9 {
            side = up.cross(&Vec3::y());
        }
    }
    let side = side.normalize();
    let depth = side.cross(&up);
    let half_width = 0.5 * (ls - rs).norm().max((lh - rh).norm());
    let rot = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[
        side, depth, up,
    ])));
    Some(PlacedShape::new(
        ConvexShape::Cuboid {
            half_extents: Vec3::new(
                half_width + cfg.torso_margin,
                cfg.torso_half_depth,
                0.5 * height + cfg.torso_margin,
            ),
        },
        Isometry3::from_parts(Translation3::from(0.5 * (shoulders + hips)), rot),
    ))
}

// ---------------------------------------------------------------------------
// Scripted actor.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Keyframe {
    pub t: f64,
    #[serde(default)]
    pub hand: Option<Vec<Vec3>>,
    #[serde(default)]
    pub body: Option<Vec<Option<Vec3>>>,
}

/// Sampled actor state; absent parts mean "not detected".
#[derive(Debug, Clone, PartialEq)]
pub struct ActorSample {
    pub hand: Option<LandmarkFrame>,
    pub body: Option<BodyFrame>,
}

/// Keyframed hand and body trajectory, linearly interpolated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorScript {
    pub keyframes: Vec<Keyframe>,
}

impl ActorScript {
    pub fn new(mut keyframes: Vec<Keyframe>) -> Result<Self> {
        keyframes.sort_by(|a, b| a.t.total_cmp(&b.t));
        let script = ActorScript { keyframes };
        script.validate()?;
        Ok(script)
    }

    pub fn validate(&self) -> Result<()> {
        if self.keyframes.is_empty() {
            return Err(Error::invalid("actor script has no keyframes"));
        }
        for (i, k) in self.keyframes.iter().enumerate() {
            if !k.t.is_finite() {
                return Err(Error::invalid(format!("keyframe {i}: time is not finite")));
            }
            if matches!(&k.hand, Some(h) if h.len() != HAND_LANDMARKS) {
                return Err(Error::invalid(format!(
                    "keyframe {i}: hand needs {HAND_LANDMARKS} points"
                )));
            }
            if matches!(&k.body, Some(b) if b.len() != BODY_KEYPOINTS) {
                return Err(Error::invalid(format!(
                    "keyframe {i}: body needs {BODY_KEYPOINTS} points"
                )));
            }
        }
        if self.keyframes.windows(2).any(|w| w[1].t < w[0].t) {
            return Err(Error::invalid("keyframes must be sorted by time"));
        }
        Ok(())
    }

    pub fn span(&self) -> (f64, f64) {
        (self.keyframes[0].t, self.keyframes[self.keyframes.len() - 1].t)
    }

    pub fn sample(&self, t: f64) -> ActorSample {
        let ks = &self.keyframes;
        let (start, end) = self.span();
        let frame_at = |k: &Keyframe| ActorSample {
            hand: k.hand.clone().map(|points| LandmarkFrame { points, timestamp: t }),
            body: k.body.clone().map(|points| BodyFrame { points, timestamp: t }),
        };
        if t <= start || ks.len() == 1 {
            return frame_at(&ks[0]);
        }
        if t >= end {
            return frame_at(&ks[ks.len() - 1]);
        }
        let i = ks.partition_point(|k| k.t <= t) - 1;
        let (a, b) = (&ks[i], &ks[i + 1]);
        let span = b.t - a.t;
        let alpha = if span > 0.0 { (t - a.t) / span } else { 0.0 };
        let lerp = |p: &Vec3, q: &Vec3| p + (q - p) * alpha;
        let hand = match (&a.hand, &b.hand) {
            (Some(ha), Some(hb)) => Some(ha.iter().zip(hb).map(|(p, q)| lerp(p, q)).collect()),
            (ha, _) => ha.clone(),
        };
        let body = match (&a.body, &b.body) {
            (Some(ba), Some(bb)) => Some(
                ba.iter()
                    .zip(bb)
                    .map(|(p, q)| match (p, q) {
                        (Some(p), Some(q)) => Some(lerp(p, q)),
                        _ => None,
                    })
                    .collect(),
            ),
            (ba, _) => ba.clone(),
        };
        ActorSample {
            hand: hand.map(|points| LandmarkFrame { points, timestamp: t }),
            body: body.map(|points| BodyFrame { points, timestamp: t }),
        }
    }
}

/// Same as [`ActorScript::sample`], for call sites holding a script by value.
pub fn scripted_actor(script: &ActorScript, t: f64) -> ActorSample {
    script.sample(t)
}

// ---------------------------------------------------------------------------
// Synthetic poses for scenarios and tests.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HandGesture {
    Open,
    Point,
    Fist,
}

/// A right hand with the palm facing down. `forward` is where the fingers
/// (or the pointing index) go; the wrist sits at `wrist`.
pub fn synthetic_hand(wrist: Vec3, forward: Vec3, gesture: HandGesture) -> Vec<Vec3> {
    let fwd = forward.try_normalize(1e-9).unwrap_or_else(Vec3::x);
    let mut side = Vec3::z().cross(&fwd);
    if side.norm() < 1e-6 {
        side = Vec3::y();
    }
    let side = side.normalize();
    let down = fwd.cross(&side);
    let at = |f: f64, s: f64, d: f64| wrist + fwd * f + side * s + down * d;

    let mut pts = vec![Vec3::zeros(); HAND_LANDMARKS];
    pts[hand::WRIST] = at(0.0, 0.0, 0.0);
    // Thumb chain on the index side.
    pts[1] = at(0.025, 0.03, 0.01);
    let thumb_out = matches!(gesture, HandGesture::Open);
    if thumb_out {
        pts[2] = at(0.045, 0.055, 0.01);
        pts[3] = at(0.06, 0.075, 0.01);
        pts[4] = at(0.075, 0.09, 0.01);
    } else {
        pts[2] = at(0.045, 0.035, 0.015);
        pts[3] = at(0.06, 0.025, 0.025);
        pts[4] = at(0.07, 0.01, 0.03);
    }
    let bases = [(5usize, 0.025), (9, 0.0), (13, -0.02), (17, -0.04)];
    for (k, &(mcp, s)) in bases.iter().enumerate() {
        let extended = match gesture {
            HandGesture::Open => true,
            HandGesture::Point => k == 0,
            HandGesture::Fist => false,
        };
        let base_f = if k == 3 { 0.075 } else { 0.085 };
        pts[mcp] = at(base_f, s, 0.0);
        if extended {
            pts[mcp + 1] = at(base_f + 0.04, s, 0.0);
            pts[mcp + 2] = at(base_f + 0.065, s, 0.0);
            pts[mcp + 3] = at(base_f + 0.085, s, 0.0);
        } else {
            pts[mcp + 1] = at(base_f + 0.02, s, 0.025);
            pts[mcp + 2] = at(base_f + 0.0, s, 0.035);
            pts[mcp + 3] = at(base_f - 0.015, s, 0.025);
        }
    }
    pts
}

/// Standing body facing `-x` (towards a robot at the origin), feet on the
/// floor plane `z = floor`, arms spread sideways.
pub fn synthetic_t_pose(pelvis: Vec3) -> Vec<Option<Vec3>> {
    use body::*;
    let mut pts = vec![None; BODY_KEYPOINTS];
    let at = |dy: f64, dz: f64| Some(pelvis + Vec3::new(0.0, dy, dz));
    pts[NOSE] = at(0.0, 0.62);
    pts[NECK] = at(0.0, 0.5);
    pts[R_SHOULDER] = at(-0.18, 0.48);
    pts[R_ELBOW] = at(-0.45, 0.48);
    pts[R_WRIST] = at(-0.7, 0.48);
    pts[L_SHOULDER] = at(0.18, 0.48);
    pts[L_ELBOW] = at(0.45, 0.48);
    pts[L_WRIST] = at(0.7, 0.48);
    pts[MID_HIP] = at(0.0, 0.0);
    pts[R_HIP] = at(-0.1, 0.0);
    pts[R_KNEE] = at(-0.1, -0.45);
    pts[R_ANKLE] = at(-0.1, -0.88);
    pts[L_HIP] = at(0.1, 0.0);
    pts[L_KNEE] = at(0.1, -0.45);
    pts[L_ANKLE] = at(0.1, -0.88);
    pts
}

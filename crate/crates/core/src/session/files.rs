//! Scene, session-config and scenario files.
//!
//! Parse failures carry the file path plus the JSON path of the offending
//! field (`robot.joints[2].axis`).

use std::path::{Path, PathBuf};

use nalgebra::{Isometry3, Matrix3, Quaternion, Rotation3, Translation3, Unit, UnitQuaternion};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::arbitration::{ArbitrationConfig, Role};
use crate::error::{Error, Result};
use crate::geometry::{ConvexShape, PlacedShape, Vec3};
use crate::kinematics::{JointConfig, JointSpec, LinkWrapper, RobotModel};
use crate::objectives::ObjectiveConfig;
use crate::optimizer::SolverConfig;
use crate::perception::{synthetic_hand, synthetic_t_pose, ActorScript, BodyWrapperConfig, HandGesture, Keyframe};
use crate::session::click::Intrinsics;

/// A rigid transform, either as a 4x4 row-major matrix or as position plus
/// quaternion `[x, y, z, w]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TransformSpec {
    Matrix {
        matrix: [[f64; 4]; 4],
    },
    Pose {
        #[serde(default)]
        position: [f64; 3],
        #[serde(default = "identity_quat")]
        quaternion: [f64; 4],
    },
}

fn identity_quat() -> [f64; 4] {
    [0.0, 0.0, 0.0, 1.0]
}

impl Default for TransformSpec {
    fn default() -> Self {
        TransformSpec::Pose {
            position: [0.0; 3],
            quaternion: identity_quat(),
        }
    }
}

impl TransformSpec {
    pub fn to_isometry(&self) -> std::result::Result<Isometry3<f64>, String> {
        match self {
            TransformSpec::Matrix { matrix: m } => {
                if !m.iter().flatten().all(|v| v.is_finite()) {
                    return Err("matrix has non-finite entries".into());
                }
                if m[3] != [0.0, 0.0, 0.0, 1.0] {
                    return Err("last matrix row must be [0, 0, 0, 1]".into());
                }
                let r = Matrix3::new(
                    m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2],
                );
                let ortho = (r.transpose() * r - Matrix3::identity()).abs().max();
                if ortho > 1e-6 || (r.determinant() - 1.0).abs() > 1e-6 {
                    return Err("rotation block is not a proper rotation".into());
                }
                let rot = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(r));
                Ok(Isometry3::from_parts(Translation3::new(m[0][3], m[1][3], m[2][3]), rot))
            }
            TransformSpec::Pose {
                position,
                quaternion: q,
            } => {
                if !position.iter().chain(q).all(|v| v.is_finite()) {
                    return Err("pose has non-finite entries".into());
                }
                let quat = Quaternion::new(q[3], q[0], q[1], q[2]);
                if quat.norm() < 1e-9 {
                    return Err("quaternion has zero norm".into());
                }
                Ok(Isometry3::from_parts(
                    Translation3::new(position[0], position[1], position[2]),
                    UnitQuaternion::from_quaternion(quat),
                ))
            }
        }
    }

    pub fn from_isometry(iso: &Isometry3<f64>) -> Self {
        let t = iso.translation.vector;
        let q = iso.rotation.coords;
        TransformSpec::Pose {
            position: [t.x, t.y, t.z],
            quaternion: [q.x, q.y, q.z, q.w],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointFile {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub origin: TransformSpec,
    pub axis: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WrapperFile {
    pub link: usize,
    pub shape: ConvexShape,
    #[serde(default)]
    pub offset: TransformSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotFile {
    pub joints: Vec<JointFile>,
    /// Defaults to -2π per joint.
    #[serde(default)]
    pub lower_limits: Option<Vec<f64>>,
    /// Defaults to +2π per joint.
    #[serde(default)]
    pub upper_limits: Option<Vec<f64>>,
    #[serde(default)]
    pub link_wrappers: Vec<WrapperFile>,
    #[serde(default)]
    pub camera_mount: TransformSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectFile {
    pub name: String,
    pub shape: ConvexShape,
    #[serde(default)]
    pub pose: TransformSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    pub robot: RobotFile,
    #[serde(default)]
    pub objects: Vec<ObjectFile>,
    pub reset_config: JointConfig,
    #[serde(default)]
    pub intrinsics: Intrinsics,
    #[serde(default = "default_fallback")]
    pub fallback_range: f64,
}

fn default_fallback() -> f64 {
    1.5
}

/// A named static object placed in the world.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneObject {
    pub name: String,
    pub shape: PlacedShape,
}

/// Validated, ready-to-run scene.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub model: RobotModel,
    pub objects: Vec<SceneObject>,
    pub reset_config: JointConfig,
    pub intrinsics: Intrinsics,
    pub fallback_range: f64,
    /// The source document, kept for log headers.
    pub source: SceneFile,
}

impl Scene {
    pub fn shapes(&self) -> Vec<PlacedShape> {
        self.objects.iter().map(|o| o.shape).collect()
    }

    /// The reference arm with a table and a few props in front of it.
    pub fn reference() -> Scene {
        SceneFile::reference()
            .build(Path::new("<builtin>"))
            .expect("reference scene is valid")
    }
}

impl SceneFile {
    pub fn reference() -> SceneFile {
        let model = RobotModel::reference();
        let robot = RobotFile {
            joints: model
                .joints
                .iter()
                .map(|j| JointFile {
                    name: j.name.clone(),
                    origin: TransformSpec::from_isometry(&j.origin),
                    axis: [j.axis.x, j.axis.y, j.axis.z],
                })
                .collect(),
            lower_limits: Some(model.lower_limits.clone()),
            upper_limits: Some(model.upper_limits.clone()),
            link_wrappers: model
                .link_wrappers
                .iter()
                .map(|w| WrapperFile {
                    link: w.link,
                    shape: w.shape,
                    offset: TransformSpec::from_isometry(&w.offset),
                })
                .collect(),
            camera_mount: TransformSpec::from_isometry(&model.camera_mount),
        };
        let at = |x: f64, y: f64, z: f64| TransformSpec::Pose {
            position: [x, y, z],
            quaternion: identity_quat(),
        };
        SceneFile {
            robot,
            objects: vec![
                ObjectFile {
                    name: "table".into(),
                    shape: ConvexShape::Cuboid {
                        half_extents: Vec3::new(0.3, 0.4, 0.02),
                    },
                    pose: at(0.75, 0.0, -0.05),
                },
                ObjectFile {
                    name: "part".into(),
                    shape: ConvexShape::Sphere { radius: 0.06 },
                    pose: at(0.7, 0.1, 0.03),
                },
                ObjectFile {
                    name: "fixture".into(),
                    shape: ConvexShape::Capsule {
                        half_length: 0.08,
                        radius: 0.03,
                    },
                    pose: at(0.65, -0.2, 0.08),
                },
            ],
            reset_config: JointConfig(vec![-0.6661, -2.2839, 1.8835, -1.8685, -1.0248, -0.554]),
            intrinsics: Intrinsics::default(),
            fallback_range: default_fallback(),
        }
    }

    pub fn build(&self, path: &Path) -> Result<Scene> {
        let err = |field: String, msg: String| Error::file(path, field, msg);
        let n = self.robot.joints.len();
        let mut joints = Vec::with_capacity(n);
        for (i, j) in self.robot.joints.iter().enumerate() {
            let origin = j
                .origin
                .to_isometry()
                .map_err(|m| err(format!("robot.joints[{i}].origin"), m))?;
            let axis = Vec3::from(j.axis);
            let axis = Unit::try_new(axis, 1e-9)
                .filter(|_| axis.iter().all(|c| c.is_finite()))
                .ok_or_else(|| {
                    err(
                        format!("robot.joints[{i}].axis"),
                        "axis must be a finite non-zero vector".into(),
                    )
                })?;
            joints.push(JointSpec {
                name: if j.name.is_empty() {
                    format!("joint_{i}")
                } else {
                    j.name.clone()
                },
                origin,
                axis,
            });
        }
        let two_pi = 2.0 * std::f64::consts::PI;
        let lower = self.robot.lower_limits.clone().unwrap_or_else(|| vec![-two_pi; n]);
        let upper = self.robot.upper_limits.clone().unwrap_or_else(|| vec![two_pi; n]);
        let mut link_wrappers = Vec::new();
        for (k, w) in self.robot.link_wrappers.iter().enumerate() {
            let offset = w
                .offset
                .to_isometry()
                .map_err(|m| err(format!("robot.link_wrappers[{k}].offset"), m))?;
            w.shape
                .validate()
                .map_err(|e| err(format!("robot.link_wrappers[{k}].shape"), e.to_string()))?;
            link_wrappers.push(LinkWrapper {
                link: w.link,
                shape: w.shape,
                offset,
            });
        }
        let camera_mount = self
            .robot
            .camera_mount
            .to_isometry()
            .map_err(|m| err("robot.camera_mount".into(), m))?;
        let model = RobotModel {
            joints,
            lower_limits: lower,
            upper_limits: upper,
            link_wrappers,
            camera_mount,
        };
        model.validate().map_err(|e| err("robot".into(), e.to_string()))?;

        let mut objects = Vec::new();
        for (k, o) in self.objects.iter().enumerate() {
            let pose = o.pose.to_isometry().map_err(|m| err(format!("objects[{k}].pose"), m))?;
            o.shape
                .validate()
                .map_err(|e| err(format!("objects[{k}].shape"), e.to_string()))?;
            objects.push(SceneObject {
                name: o.name.clone(),
                shape: PlacedShape::new(o.shape, pose),
            });
        }
        if self.reset_config.len() != n {
            return Err(err(
                "reset_config".into(),
                format!("expected {n} joint angles, got {}", self.reset_config.len()),
            ));
        }
        if !self.reset_config.is_finite() || !model.within_limits(&self.reset_config) {
            return Err(err(
                "reset_config".into(),
                "must be finite and inside the joint limits".into(),
            ));
        }
        self.intrinsics
            .validate()
            .map_err(|e| err("intrinsics".into(), e.to_string()))?;
        if !(self.fallback_range > 0.0 && self.fallback_range.is_finite()) {
            return Err(err("fallback_range".into(), "must be positive".into()));
        }
        Ok(Scene {
            model,
            objects,
            reset_config: self.reset_config.clone(),
            intrinsics: self.intrinsics,
            fallback_range: self.fallback_range,
            source: self.clone(),
        })
    }
}

/// Session configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    /// Control loop rate (Hz), within [10, 240].
    pub tick_rate: f64,
    /// Snapshot rate for non-loopback clients (Hz).
    pub remote_snapshot_rate: f64,
    pub listen: String,
    /// Overrides the scene's reset configuration.
    pub reset_config: Option<JointConfig>,
    pub scene: Option<PathBuf>,
    pub scenario: Option<PathBuf>,
    /// Odd window of the body keypoint median filter.
    pub median_window: usize,
    pub solver: SolverConfig,
    pub objectives: ObjectiveConfig,
    pub arbitration: ArbitrationConfig,
    pub body_wrappers: BodyWrapperConfig,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            tick_rate: 60.0,
            remote_snapshot_rate: 20.0,
            listen: "127.0.0.1:8765".into(),
            reset_config: None,
            scene: None,
            scenario: None,
            median_window: 5,
            solver: SolverConfig::default(),
            objectives: ObjectiveConfig::default(),
            arbitration: ArbitrationConfig::default(),
            body_wrappers: BodyWrapperConfig::default(),
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(10.0..=240.0).contains(&self.tick_rate) {
            return Err(Error::invalid(format!(
                "tick_rate {} outside [10, 240]",
                self.tick_rate
            )));
        }
        if !(self.remote_snapshot_rate > 0.0) {
            return Err(Error::invalid("remote_snapshot_rate must be positive"));
        }
        if self.median_window < 3 || self.median_window.is_multiple_of(2) {
            return Err(Error::invalid("median_window must be odd and at least 3"));
        }
        self.solver.validate()?;
        self.objectives.validate()?;
        self.arbitration.validate()?;
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.tick_rate
    }
}

/// Hand description in a scenario keyframe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HandSpec {
    Landmarks(Vec<Vec3>),
    Synthetic {
        wrist: Vec3,
        forward: Vec3,
        gesture: HandGesture,
    },
}

/// Body description in a scenario keyframe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BodySpec {
    Keypoints(Vec<Option<Vec3>>),
    TPose { t_pose: Vec3 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioKeyframe {
    pub t: f64,
    #[serde(default)]
    pub hand: Option<HandSpec>,
    #[serde(default)]
    pub body: Option<BodySpec>,
}

/// A scripted client command, in wire-protocol form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedCommand {
    pub t: f64,
    pub role: Role,
    pub message: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub description: String,
    /// Starting joint configuration; the scene's reset configuration if absent.
    #[serde(default)]
    pub initial_q: Option<JointConfig>,
    /// Default tick count for headless runs.
    #[serde(default)]
    pub ticks: Option<u64>,
    #[serde(default)]
    pub actor: Vec<ScenarioKeyframe>,
    #[serde(default)]
    pub commands: Vec<ScriptedCommand>,
}

impl ScenarioFile {
    pub fn actor_script(&self) -> Result<Option<ActorScript>> {
        if self.actor.is_empty() {
            return Ok(None);
        }
        let keyframes = self
            .actor
            .iter()
            .map(|k| Keyframe {
                t: k.t,
                hand: k.hand.as_ref().map(|h| match h {
                    HandSpec::Landmarks(p) => p.clone(),
                    HandSpec::Synthetic {
                        wrist,
                        forward,
                        gesture,
                    } => synthetic_hand(*wrist, *forward, *gesture),
                }),
                body: k.body.as_ref().map(|b| match b {
                    BodySpec::Keypoints(p) => p.clone(),
                    BodySpec::TPose { t_pose } => synthetic_t_pose(*t_pose),
                }),
            })
            .collect();
        ActorScript::new(keyframes).map(Some)
    }
}

/// Reads and deserializes a JSON file, reporting the failing field path.
pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::file(path, "<file>", "not found")
        } else {
            Error::Io(e)
        }
    })?;
    parse_json(&text, path)
}

pub fn parse_json<T: DeserializeOwned>(text: &str, path: &Path) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = match e.path().to_string() {
            p if p == "." => "<root>".to_string(),
            p => p,
        };
        let inner = e.into_inner();
        Error::file(path, field, format!("{inner}"))
    })
}

pub fn load_scene(path: &Path) -> Result<Scene> {
    load_json::<SceneFile>(path)?.build(path)
}

pub fn load_config(path: &Path) -> Result<SessionConfig> {
    let cfg: SessionConfig = load_json(path)?;
    cfg.validate()
        .map_err(|e| Error::file(path, "<config>", e.to_string()))?;
    Ok(cfg)
}

pub fn load_scenario(path: &Path) -> Result<ScenarioFile> {
    let sc: ScenarioFile = load_json(path)?;
    sc.actor_script()
        .map_err(|e| Error::file(path, "actor", e.to_string()))?;
    for (i, c) in sc.commands.iter().enumerate() {
        if !c.t.is_finite() || c.t < 0.0 {
            return Err(Error::file(
                path,
                format!("commands[{i}].t"),
                "must be a non-negative time",
            ));
        }
        crate::session::protocol::parse_client_value(&c.message, c.role)
            .map_err(|e| Error::Scenario(format!("{}: commands[{i}].message: {}", path.display(), e.message)))?;
    }
    Ok(sc)
}

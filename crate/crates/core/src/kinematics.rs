//! Serial-chain forward kinematics and camera-frame conventions.
//!
//! A chain is a list of revolute joints. Each joint carries a fixed
//! transform from its parent frame followed by a rotation about its local
//! axis. The camera frame hangs off the last link through `camera_mount`.
//!
//! Camera frame: +z is the optical axis (forward), +y points left and +x
//! points up. World up is +z.

use nalgebra::{Isometry3, Matrix3, Point3, Translation3, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ConvexShape, PlacedShape};

/// A joint-space configuration, one angle (rad) per joint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JointConfig(pub Vec<f64>);

impl JointConfig {
    pub fn new(angles: Vec<f64>) -> Self {
        JointConfig(angles)
    }

    pub fn zeros(n: usize) -> Self {
        JointConfig(vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|a| a.is_finite())
    }

    /// Largest absolute per-joint difference.
    pub fn max_abs_diff(&self, other: &JointConfig) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl std::ops::Index<usize> for JointConfig {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// One revolute joint: fixed transform from the parent frame, then a
/// rotation about `axis` (expressed in the joint's own frame).
#[derive(Debug, Clone, PartialEq)]
pub struct JointSpec {
    pub name: String,
    pub origin: Isometry3<f64>,
    pub axis: Unit<Vector3<f64>>,
}

/// A convex wrapper rigidly attached to one link.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkWrapper {
    pub link: usize,
    pub shape: ConvexShape,
    pub offset: Isometry3<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobotModel {
    pub joints: Vec<JointSpec>,
    pub lower_limits: Vec<f64>,
    pub upper_limits: Vec<f64>,
    pub link_wrappers: Vec<LinkWrapper>,
    pub camera_mount: Isometry3<f64>,
}

/// Camera position and orientation in the world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

impl CameraPose {
    pub fn new(position: Vector3<f64>, orientation: UnitQuaternion<f64>) -> Self {
        CameraPose { position, orientation }
    }

    pub fn identity() -> Self {
        CameraPose::new(Vector3::zeros(), UnitQuaternion::identity())
    }

    pub fn from_isometry(iso: &Isometry3<f64>) -> Self {
        CameraPose::new(iso.translation.vector, iso.rotation)
    }

    pub fn to_isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(Translation3::from(self.position), self.orientation)
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        *self.orientation.to_rotation_matrix().matrix()
    }

    pub fn forward(&self) -> Vector3<f64> {
        self.orientation * Vector3::z()
    }

    pub fn left(&self) -> Vector3<f64> {
        self.orientation * Vector3::y()
    }

    pub fn up(&self) -> Vector3<f64> {
        self.orientation * Vector3::x()
    }
}

/// Camera basis vectors in the world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraAxes {
    pub forward: Vector3<f64>,
    pub left: Vector3<f64>,
    pub up: Vector3<f64>,
}

pub fn camera_axes(pose: &CameraPose) -> CameraAxes {
    CameraAxes {
        forward: pose.forward(),
        left: pose.left(),
        up: pose.up(),
    }
}

/// Everything one FK pass produces: per-link frames, the world-frame joint
/// axes and pivots (for Jacobians), and the camera pose.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub links: Vec<Isometry3<f64>>,
    pub joint_axes: Vec<Vector3<f64>>,
    pub joint_pivots: Vec<Vector3<f64>>,
    pub camera: CameraPose,
}

impl ChainState {
    /// Velocity of a world point rigidly attached to `link` w.r.t. joint `j`.
    /// Zero when joint `j` is distal to the link.
    pub fn point_velocity(&self, link: usize, joint: usize, point: &Vector3<f64>) -> Vector3<f64> {
        if joint > link {
            return Vector3::zeros();
        }
        self.joint_axes[joint].cross(&(point - self.joint_pivots[joint]))
    }

    /// d(camera position)/dq_j.
    pub fn camera_linear(&self, joint: usize) -> Vector3<f64> {
        self.joint_axes[joint].cross(&(self.camera.position - self.joint_pivots[joint]))
    }

    /// Angular velocity axis of the camera w.r.t. joint `j`.
    pub fn camera_angular(&self, joint: usize) -> Vector3<f64> {
        self.joint_axes[joint]
    }

    /// Position Jacobian of the camera (3 x n), column per joint.
    pub fn camera_jacobian(&self) -> Vec<Vector3<f64>> {
        (0..self.joint_axes.len()).map(|j| self.camera_linear(j)).collect()
    }
}

impl RobotModel {
    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    /// Checks the structural invariants: limit ordering and wrapper indices.
    pub fn validate(&self) -> Result<()> {
        let n = self.dof();
        if self.lower_limits.len() != n || self.upper_limits.len() != n {
            return Err(Error::invalid(format!(
                "limit vectors must have {n} entries (got {} lower, {} upper)",
                self.lower_limits.len(),
                self.upper_limits.len()
            )));
        }
        for (i, (l, u)) in self.lower_limits.iter().zip(&self.upper_limits).enumerate() {
            if !(l < u) || !l.is_finite() || !u.is_finite() {
                return Err(Error::invalid(format!(
                    "joint {i}: lower limit {l} must be below upper limit {u}"
                )));
            }
        }
        for (k, w) in self.link_wrappers.iter().enumerate() {
            if w.link >= n {
                return Err(Error::invalid(format!(
                    "link wrapper {k} references link {} but the chain has {n} links",
                    w.link
                )));
            }
            w.shape.validate()?;
        }
        Ok(())
    }

    fn check_dim(&self, q: &JointConfig) -> Result<()> {
        if q.len() != self.dof() {
            return Err(Error::Dimension {
                expected: self.dof(),
                got: q.len(),
            });
        }
        if !q.is_finite() {
            return Err(Error::invalid("joint configuration contains non-finite angles"));
        }
        Ok(())
    }

    /// Full FK pass. Callers that need more than the camera pose should use
    /// this to avoid recomputing the chain.
    pub fn chain_state(&self, q: &JointConfig) -> Result<ChainState> {
        self.check_dim(q)?;
        Ok(self.chain_state_unchecked(q.as_slice()))
    }

    pub(crate) fn chain_state_unchecked(&self, q: &[f64]) -> ChainState {
        let n = self.dof();
        let mut links = Vec::with_capacity(n);
        let mut joint_axes = Vec::with_capacity(n);
        let mut joint_pivots = Vec::with_capacity(n);
        let mut frame = Isometry3::identity();
        for (joint, &angle) in self.joints.iter().zip(q) {
            let pivot_frame = frame * joint.origin;
            joint_axes.push(pivot_frame.rotation * joint.axis.into_inner());
            joint_pivots.push(pivot_frame.translation.vector);
            frame = pivot_frame * UnitQuaternion::from_axis_angle(&joint.axis, angle);
            links.push(frame);
        }
        let camera = CameraPose::from_isometry(&(frame * self.camera_mount));
        ChainState {
            links,
            joint_axes,
            joint_pivots,
            camera,
        }
    }

    pub fn forward_kinematics(&self, q: &JointConfig) -> Result<CameraPose> {
        Ok(self.chain_state(q)?.camera)
    }

    pub fn link_poses(&self, q: &JointConfig) -> Result<Vec<Isometry3<f64>>> {
        Ok(self.chain_state(q)?.links)
    }

    /// Link wrappers placed in the world frame for a given chain state.
    pub fn placed_wrappers(&self, state: &ChainState) -> Vec<PlacedShape> {
        self.link_wrappers
            .iter()
            .map(|w| PlacedShape::new(w.shape, state.links[w.link] * w.offset))
            .collect()
    }

    pub fn clamp(&self, q: &JointConfig) -> JointConfig {
        JointConfig(
            q.0.iter()
                .zip(self.lower_limits.iter().zip(&self.upper_limits))
                .map(|(&a, (&l, &u))| a.clamp(l, u))
                .collect(),
        )
    }

    pub fn within_limits(&self, q: &JointConfig) -> bool {
        q.0.iter()
            .zip(self.lower_limits.iter().zip(&self.upper_limits))
            .all(|(&a, (&l, &u))| l <= a && a <= u)
    }

    pub fn midpoint(&self) -> JointConfig {
        JointConfig(
            self.lower_limits
                .iter()
                .zip(&self.upper_limits)
                .map(|(l, u)| 0.5 * (l + u))
                .collect(),
        )
    }

    /// UR5-like 6-DoF arm with a camera on the flange.
    pub fn reference() -> RobotModel {
        use std::f64::consts::{FRAC_PI_2, PI};
        let tf = |x: f64, y: f64, z: f64, roll: f64, pitch: f64, yaw: f64| {
            Isometry3::from_parts(
                Translation3::new(x, y, z),
                UnitQuaternion::from_euler_angles(roll, pitch, yaw),
            )
        };
        let joint = |name: &str, origin: Isometry3<f64>, axis: Vector3<f64>| JointSpec {
            name: name.to_string(),
            origin,
            axis: Unit::new_normalize(axis),
        };
        let joints = vec![
            joint("shoulder_pan", tf(0.0, 0.0, 0.089159, 0.0, 0.0, 0.0), Vector3::z()),
            joint(
                "shoulder_lift",
                tf(0.0, 0.13585, 0.0, 0.0, FRAC_PI_2, 0.0),
                Vector3::y(),
            ),
            joint("elbow", tf(0.0, -0.1197, 0.425, 0.0, 0.0, 0.0), Vector3::y()),
            joint("wrist_1", tf(0.0, 0.0, 0.39225, 0.0, FRAC_PI_2, 0.0), Vector3::y()),
            joint("wrist_2", tf(0.0, 0.093, 0.0, 0.0, 0.0, 0.0), Vector3::z()),
            joint("wrist_3", tf(0.0, 0.0, 0.09465, 0.0, 0.0, 0.0), Vector3::y()),
        ];
        // Flange normal is +y of the last link; camera forward (+z) along it,
        // camera +x along the link's -z.
        let mount_rot = UnitQuaternion::from_rotation_matrix(&nalgebra::Rotation3::from_matrix_unchecked(
            Matrix3::from_columns(&[-Vector3::z(), -Vector3::x(), Vector3::y()]),
        ));
        let camera_mount = Isometry3::from_parts(Translation3::new(0.0, 0.0823 + 0.045, 0.0), mount_rot);
        let along_z = |x: f64, y: f64, z: f64| Isometry3::translation(x, y, z);
        let link_wrappers = vec![
            LinkWrapper {
                link: 1,
                shape: ConvexShape::Capsule {
                    half_length: 0.15,
                    radius: 0.06,
                },
                offset: along_z(0.0, -0.02, 0.2125),
            },
            LinkWrapper {
                link: 2,
                shape: ConvexShape::Capsule {
                    half_length: 0.14,
                    radius: 0.045,
                },
                offset: along_z(0.0, 0.0, 0.19),
            },
            LinkWrapper {
                link: 4,
                shape: ConvexShape::Sphere { radius: 0.05 },
                offset: along_z(0.0, 0.0, 0.045),
            },
            LinkWrapper {
                link: 5,
                shape: ConvexShape::Cuboid {
                    half_extents: Vector3::new(0.035, 0.03, 0.06),
                },
                offset: along_z(0.0, 0.0823 + 0.03, 0.0),
            },
        ];
        let mut lower = vec![-2.0 * PI; 6];
        let mut upper = vec![2.0 * PI; 6];
        lower[2] = -PI;
        upper[2] = PI;
        RobotModel {
            joints,
            lower_limits: lower,
            upper_limits: upper,
            link_wrappers,
            camera_mount,
        }
    }
}

/// World point helper for call sites that deal in `Point3`.
pub fn to_point(v: &Vector3<f64>) -> Point3<f64> {
    Point3::from(*v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_2;

    fn bare_model(mount: Isometry3<f64>) -> RobotModel {
        RobotModel {
            joints: vec![],
            lower_limits: vec![],
            upper_limits: vec![],
            link_wrappers: vec![],
            camera_mount: mount,
        }
    }

    #[test]
    fn empty_chain_returns_mount() {
        let mount = Isometry3::from_parts(
            Translation3::new(0.1, -0.2, 0.3),
            UnitQuaternion::from_euler_angles(0.3, 0.1, -0.7),
        );
        let model = bare_model(mount);
        let pose = model.forward_kinematics(&JointConfig::zeros(0)).unwrap();
        assert_eq!(pose.to_isometry(), mount);
        assert!(model.link_poses(&JointConfig::zeros(0)).unwrap().is_empty());
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let model = RobotModel::reference();
        let err = model.forward_kinematics(&JointConfig::zeros(5)).unwrap_err();
        assert!(matches!(err, Error::Dimension { expected: 6, got: 5 }));
        let err = model
            .forward_kinematics(&JointConfig(vec![0.0, f64::NAN, 0.0, 0.0, 0.0, 0.0]))
            .unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn base_rotation_preserves_height() {
        let model = RobotModel::reference();
        let q0 = JointConfig(vec![0.0, -1.2, 1.5, -0.3, 0.4, 0.2]);
        let z0 = model.forward_kinematics(&q0).unwrap().position.z;
        for delta in [-2.0, -0.4, 0.9, 3.0] {
            let mut q = q0.clone();
            q.0[0] += delta;
            let z = model.forward_kinematics(&q).unwrap().position.z;
            assert_relative_eq!(z, z0, epsilon = 1e-12);
        }
    }

    #[test]
    fn identity_axes() {
        let axes = camera_axes(&CameraPose::identity());
        assert_eq!(axes.forward, Vector3::z());
        assert_eq!(axes.left, Vector3::y());
        assert_eq!(axes.up, Vector3::x());
    }

    #[test]
    fn z_rotation_keeps_forward() {
        let pose = CameraPose::new(Vector3::zeros(), UnitQuaternion::from_euler_angles(0.0, 0.0, FRAC_PI_2));
        assert_relative_eq!(pose.forward(), Vector3::z(), epsilon = 1e-12);
    }

    #[test]
    fn last_link_composed_with_mount_is_camera() {
        let model = RobotModel::reference();
        let q = JointConfig(vec![0.3, -0.9, 1.1, 0.2, -0.5, 0.8]);
        let links = model.link_poses(&q).unwrap();
        let cam = model.forward_kinematics(&q).unwrap();
        let composed = links.last().unwrap() * model.camera_mount;
        assert_relative_eq!(composed.translation.vector, cam.position, epsilon = 1e-14);
        assert!(composed.rotation.angle_to(&cam.orientation) < 1e-12);
    }

    #[test]
    fn validate_rejects_bad_limits_and_wrappers() {
        let mut model = RobotModel::reference();
        model.lower_limits[3] = model.upper_limits[3];
        assert!(model.validate().is_err());
        let mut model = RobotModel::reference();
        model.link_wrappers[0].link = 9;
        assert!(model.validate().is_err());
        assert!(RobotModel::reference().validate().is_ok());
    }
}

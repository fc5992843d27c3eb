//! Virtual serial arm: chain definition, joint-state validation and forward
//! kinematics.
//!
//! Angles are degrees at every public boundary and radians internally. Each
//! joint first translates by its `link_offset_mm` (expressed in the parent
//! frame) and then rotates about its `rotation_axis` by the joint angle, so the
//! tool frame is `base * Π (translate(offset_i) * rotate(axis_i, q_i))`.

use std::collections::HashSet;
use std::fmt;

use nalgebra::{Isometry3, Matrix3, Rotation3, Translation3, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const CHAIN_SCHEMA: &str = "chain/1";

const AXIS_NORM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("expected {expected} joint angles, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("joint {index} (`{name}`) angle {angle_deg}° is outside [{min_deg}°, {max_deg}°]")]
    OutOfLimits {
        index: usize,
        name: String,
        angle_deg: f64,
        min_deg: f64,
        max_deg: f64,
    },
    #[error("joint {index} (`{name}`) angle is not finite")]
    NonFinite { index: usize, name: String },
    #[error("invalid chain: {0}")]
    InvalidChain(ChainReport),
}

impl KinematicsError {
    /// Index of the offending joint, when the error concerns one.
    pub fn joint_index(&self) -> Option<usize> {
        match self {
            Self::OutOfLimits { index, .. } | Self::NonFinite { index, .. } => Some(*index),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseFrame {
    pub position_mm: [f64; 3],
    /// Roll, pitch, yaw in degrees, applied as `Rz(yaw) * Ry(pitch) * Rx(roll)`.
    pub rotation_rpy_deg: [f64; 3],
}

impl Default for BaseFrame {
    fn default() -> Self {
        Self {
            position_mm: [0.0; 3],
            rotation_rpy_deg: [0.0; 3],
        }
    }
}

impl BaseFrame {
    fn isometry(&self) -> Isometry3<f64> {
        let [r, p, y] = self.rotation_rpy_deg.map(f64::to_radians);
        Isometry3::from_parts(
            Translation3::from(Vector3::from(self.position_mm)),
            UnitQuaternion::from_euler_angles(r, p, y),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointSpec {
    pub name: String,
    pub link_offset_mm: [f64; 3],
    pub rotation_axis: [f64; 3],
    pub min_deg: f64,
    pub max_deg: f64,
}

impl JointSpec {
    pub fn contains(&self, angle_deg: f64) -> bool {
        (self.min_deg..=self.max_deg).contains(&angle_deg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KinematicChain {
    pub name: String,
    #[serde(default)]
    pub base_frame: BaseFrame,
    pub joints: Vec<JointSpec>,
}

/// On-disk `chain.json` document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainFile {
    pub schema: String,
    pub name: String,
    pub base_frame: BaseFrame,
    pub joints: Vec<JointSpec>,
}

impl From<KinematicChain> for ChainFile {
    fn from(chain: KinematicChain) -> Self {
        Self {
            schema: CHAIN_SCHEMA.to_owned(),
            name: chain.name,
            base_frame: chain.base_frame,
            joints: chain.joints,
        }
    }
}

impl From<ChainFile> for KinematicChain {
    fn from(file: ChainFile) -> Self {
        Self {
            name: file.name,
            base_frame: file.base_frame,
            joints: file.joints,
        }
    }
}

/// Joint angles in degrees, one per joint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct JointVector(pub Vec<f64>);

impl JointVector {
    pub fn new(angles_deg: Vec<f64>) -> Self {
        Self(angles_deg)
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn angles_deg(&self) -> &[f64] {
        &self.0
    }

    /// Largest absolute per-joint difference in degrees.
    pub fn max_abs_delta(&self, other: &JointVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl From<Vec<f64>> for JointVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pose {
    pub position_mm: Vector3<f64>,
    pub orientation: Matrix3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainIssueKind {
    NoJoints,
    DuplicateName,
    DegenerateLimits,
    NonUnitAxis,
    NonFinite,
}

impl fmt::Display for ChainIssueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::NoJoints => "chain has no joints",
            Self::DuplicateName => "duplicate joint name",
            Self::DegenerateLimits => "degenerate limits",
            Self::NonUnitAxis => "non-unit axis",
            Self::NonFinite => "non-finite value",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainIssue {
    pub joint_index: Option<usize>,
    pub joint_name: Option<String>,
    pub kind: ChainIssueKind,
}

impl fmt::Display for ChainIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.joint_name {
            Some(name) => write!(f, "joint `{name}`: {}", self.kind),
            None => write!(f, "{}", self.kind),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ChainReport {
    pub issues: Vec<ChainIssue>,
}

impl ChainReport {
    pub fn is_empty(&self) -> bool {
        self.issues.is_empty()
    }
}

impl fmt::Display for ChainReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, issue) in self.issues.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{issue}")?;
        }
        Ok(())
    }
}

/// Lists every violated chain invariant. An empty report means the chain is usable.
pub fn validate_chain(chain: &KinematicChain) -> ChainReport {
    let mut issues = Vec::new();
    if chain.joints.is_empty() {
        issues.push(ChainIssue {
            joint_index: None,
            joint_name: None,
            kind: ChainIssueKind::NoJoints,
        });
    }
    let base_finite = chain
        .base_frame
        .position_mm
        .iter()
        .chain(&chain.base_frame.rotation_rpy_deg)
        .all(|v| v.is_finite());
    if !base_finite {
        issues.push(ChainIssue {
            joint_index: None,
            joint_name: None,
            kind: ChainIssueKind::NonFinite,
        });
    }

    let mut seen = HashSet::new();
    for (index, joint) in chain.joints.iter().enumerate() {
        let mut push = |kind| {
            issues.push(ChainIssue {
                joint_index: Some(index),
                joint_name: Some(joint.name.clone()),
                kind,
            })
        };
        if !seen.insert(joint.name.as_str()) {
            push(ChainIssueKind::DuplicateName);
        }
        let finite = joint
            .link_offset_mm
            .iter()
            .chain(&joint.rotation_axis)
            .chain([&joint.min_deg, &joint.max_deg])
            .all(|v| v.is_finite());
        if !finite {
            push(ChainIssueKind::NonFinite);
            continue;
        }
        if joint.min_deg >= joint.max_deg {
            push(ChainIssueKind::DegenerateLimits);
        }
        let norm = Vector3::from(joint.rotation_axis).norm();
        if (norm - 1.0).abs() > AXIS_NORM_TOLERANCE {
            push(ChainIssueKind::NonUnitAxis);
        }
    }
    ChainReport { issues }
}

impl KinematicChain {
    pub fn joint_count(&self) -> usize {
        self.joints.len()
    }

    pub fn validate(&self) -> Result<(), KinematicsError> {
        let report = validate_chain(self);
        if report.is_empty() {
            Ok(())
        } else {
            Err(KinematicsError::InvalidChain(report))
        }
    }

    fn check_len(&self, q: &JointVector) -> Result<(), KinematicsError> {
        if q.len() != self.joints.len() {
            return Err(KinematicsError::LengthMismatch {
                expected: self.joints.len(),
                got: q.len(),
            });
        }
        Ok(())
    }

    /// Checks arity and limits; the first offending joint is reported.
    pub fn check_limits(&self, q: &JointVector) -> Result<(), KinematicsError> {
        self.check_len(q)?;
        for (index, (joint, &angle)) in self.joints.iter().zip(q.angles_deg()).enumerate() {
            if !angle.is_finite() {
                return Err(KinematicsError::NonFinite {
                    index,
                    name: joint.name.clone(),
                });
            }
            if !joint.contains(angle) {
                return Err(KinematicsError::OutOfLimits {
                    index,
                    name: joint.name.clone(),
                    angle_deg: angle,
                    min_deg: joint.min_deg,
                    max_deg: joint.max_deg,
                });
            }
        }
        Ok(())
    }

    /// Clamps each angle into its joint's range. Idempotent.
    pub fn clamp_to_limits(&self, q: &JointVector) -> Result<JointVector, KinematicsError> {
        self.check_len(q)?;
        Ok(JointVector(
            self.joints
                .iter()
                .zip(q.angles_deg())
                .map(|(j, &a)| a.clamp(j.min_deg, j.max_deg))
                .collect(),
        ))
    }

    /// Frames of every joint after its rotation, base first excluded.
    fn frames(&self, q: &JointVector) -> Result<Vec<Isometry3<f64>>, KinematicsError> {
        self.check_limits(q)?;
        let mut current = self.base_frame.isometry();
        let mut frames = Vec::with_capacity(self.joints.len());
        for (joint, &angle) in self.joints.iter().zip(q.angles_deg()) {
            let offset = Translation3::from(Vector3::from(joint.link_offset_mm));
            let axis = Unit::new_normalize(Vector3::from(joint.rotation_axis));
            let rotation = UnitQuaternion::from_axis_angle(&axis, angle.to_radians());
            current = current * Isometry3::from_parts(offset, UnitQuaternion::identity()) * rotation;
            frames.push(current);
        }
        Ok(frames)
    }

    /// End-effector pose for the given joint angles.
    pub fn forward_kinematics(&self, q: &JointVector) -> Result<Pose, KinematicsError> {
        let frames = self.frames(q)?;
        let tip = frames.last().copied().unwrap_or_else(|| self.base_frame.isometry());
        Ok(Pose {
            position_mm: tip.translation.vector,
            orientation: Rotation3::from(tip.rotation).into_inner(),
        })
    }

    /// Origin of the base followed by the origin of each joint frame; consecutive
    /// points are the rendered link segments.
    pub fn link_positions(&self, q: &JointVector) -> Result<Vec<[f64; 3]>, KinematicsError> {
        let frames = self.frames(q)?;
        let base = self.base_frame.isometry().translation.vector;
        Ok(std::iter::once(base)
            .chain(frames.iter().map(|f| f.translation.vector))
            .map(|v| [v.x, v.y, v.z])
            .collect())
    }

    /// Approximate 6-joint desktop arm with ±165° limits and roughly 280 mm of
    /// reach from the shoulder. Geometry is illustrative, not a vendor model.
    pub fn default_six_dof() -> Self {
        let z = [0.0, 0.0, 1.0];
        let y = [0.0, 1.0, 0.0];
        let joint = |name: &str, offset: [f64; 3], axis: [f64; 3]| JointSpec {
            name: name.to_owned(),
            link_offset_mm: offset,
            rotation_axis: axis,
            min_deg: -165.0,
            max_deg: 165.0,
        };
        Self {
            name: "desktop-6dof".to_owned(),
            base_frame: BaseFrame::default(),
            joints: vec![
                joint("j1", [0.0, 0.0, 131.2], z),
                joint("j2", [0.0, 0.0, 0.0], y),
                joint("j3", [0.0, 0.0, 110.4], y),
                joint("j4", [0.0, 0.0, 96.0], y),
                joint("j5", [0.0, 0.0, 45.0], z),
                joint("j6", [0.0, 0.0, 28.6], y),
            ],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_joint(offset: [f64; 3], axis: [f64; 3]) -> KinematicChain {
        KinematicChain {
            name: "one".into(),
            base_frame: BaseFrame::default(),
            joints: vec![JointSpec {
                name: "j1".into(),
                link_offset_mm: offset,
                rotation_axis: axis,
                min_deg: -165.0,
                max_deg: 165.0,
            }],
        }
    }

    #[test]
    fn default_chain_is_valid() {
        assert!(validate_chain(&KinematicChain::default_six_dof()).is_empty());
    }

    #[test]
    fn degenerate_limits_are_named() {
        let mut chain = KinematicChain::default_six_dof();
        chain.joints[2].min_deg = 0.0;
        chain.joints[2].max_deg = 0.0;
        let report = validate_chain(&chain);
        assert_eq!(report.issues.len(), 1);
        assert_eq!(report.issues[0].joint_name.as_deref(), Some("j3"));
        assert_eq!(report.issues[0].kind, ChainIssueKind::DegenerateLimits);
        assert!(report.to_string().contains("degenerate limits"));
    }

    #[test]
    fn non_unit_axis_is_reported() {
        let chain = one_joint([0.0; 3], [0.0, 0.0, 2.0]);
        let report = validate_chain(&chain);
        assert_eq!(report.issues[0].kind, ChainIssueKind::NonUnitAxis);
        assert!(report.to_string().contains("non-unit axis"));
    }

    #[test]
    fn duplicate_names_and_empty_chain() {
        let mut chain = KinematicChain::default_six_dof();
        chain.joints[4].name = "j1".into();
        let kinds: Vec<_> = validate_chain(&chain).issues.iter().map(|i| i.kind).collect();
        assert_eq!(kinds, vec![ChainIssueKind::DuplicateName]);

        chain.joints.clear();
        let kinds: Vec<_> = validate_chain(&chain).issues.iter().map(|i| i.kind).collect();
        assert_eq!(kinds, vec![ChainIssueKind::NoJoints]);
    }

    #[test]
    fn zero_configuration_sums_offsets() {
        let chain = KinematicChain::default_six_dof();
        let pose = chain.forward_kinematics(&JointVector::zeros(6)).unwrap();
        let expected: f64 = chain.joints.iter().map(|j| j.link_offset_mm[2]).sum();
        assert_eq!(pose.position_mm, Vector3::new(0.0, 0.0, expected));
        assert_eq!(pose.orientation, Matrix3::identity());
    }

    #[test]
    fn quarter_turn_about_z_then_offset() {
        // Hand product: translate(100,0,0) * Rz(90°) leaves the origin at (100,0,0)
        // and maps x→y, y→−x.
        let chain = one_joint([100.0, 0.0, 0.0], [0.0, 0.0, 1.0]);
        let pose = chain.forward_kinematics(&JointVector::new(vec![90.0])).unwrap();
        assert!((pose.position_mm - Vector3::new(100.0, 0.0, 0.0)).norm() < 1e-12);
        let expected = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert!((pose.orientation - expected).abs().max() < 1e-12);
    }

    #[test]
    fn out_of_limits_names_joint() {
        let chain = KinematicChain::default_six_dof();
        let mut q = JointVector::zeros(6);
        q.0[0] = 200.0;
        let err = chain.forward_kinematics(&q).unwrap_err();
        assert_eq!(err.joint_index(), Some(0));
        match err {
            KinematicsError::OutOfLimits { name, max_deg, .. } => {
                assert_eq!(name, "j1");
                assert_eq!(max_deg, 165.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn length_mismatch() {
        let chain = KinematicChain::default_six_dof();
        let err = chain.forward_kinematics(&JointVector::zeros(5)).unwrap_err();
        assert_eq!(err, KinematicsError::LengthMismatch { expected: 6, got: 5 });
        assert!(chain.clamp_to_limits(&JointVector::zeros(7)).is_err());
    }

    #[test]
    fn clamp_examples() {
        let chain = KinematicChain::default_six_dof();
        let q = JointVector::new(vec![10.0, -20.0, 30.0, 0.0, 1.0, 2.0]);
        assert_eq!(chain.clamp_to_limits(&q).unwrap(), q);
        let q = JointVector::new(vec![200.0, -200.0, 0.0, 0.0, 0.0, 0.0]);
        let clamped = chain.clamp_to_limits(&q).unwrap();
        assert_eq!(clamped.0[0], 165.0);
        assert_eq!(clamped.0[1], -165.0);
    }

    #[test]
    fn base_frame_applies() {
        let mut chain = one_joint([10.0, 0.0, 0.0], [0.0, 0.0, 1.0]);
        chain.base_frame = BaseFrame {
            position_mm: [1.0, 2.0, 3.0],
            rotation_rpy_deg: [0.0, 0.0, 90.0],
        };
        let pose = chain.forward_kinematics(&JointVector::new(vec![0.0])).unwrap();
        assert!((pose.position_mm - Vector3::new(1.0, 12.0, 3.0)).norm() < 1e-12);
        let points = chain.link_positions(&JointVector::new(vec![0.0])).unwrap();
        assert_eq!(points.len(), 2);
        assert_eq!(points[0], [1.0, 2.0, 3.0]);
    }

    #[test]
    fn chain_file_round_trips() {
        let file = ChainFile::from(KinematicChain::default_six_dof());
        let json = serde_json::to_string(&file).unwrap();
        assert!(json.contains("\"schema\":\"chain/1\""));
        let back: ChainFile = serde_json::from_str(&json).unwrap();
        assert_eq!(back, file);
    }
}

//! Core library for eliciting, coding and verifying robot arm expressions.
//!
//! Modules follow the study pipeline: kinematic model and keyframe motion,
//! counterbalanced elicitation sessions, taxonomy and qualitative coding,
//! agreement and rank statistics, and the between-subjects verification survey.

pub mod bundle;
pub mod coding;
pub mod elicitation;
pub mod kinematics;
pub mod metrics;
pub mod motion;
pub mod reference_study;
pub mod report;
pub mod taxonomy;
pub mod verification;

pub use bundle::{BundleError, BundleIssue, StudyBundle};
pub use coding::{CodeBook, CodingError, ExpressionCategory, LabelGroup, MatchTable, ResponseLabeling, Theme};
pub use elicitation::{
    balanced_latin_square, create_session, ElicitationError, ElicitationRecord, Referent, ReferentKind, Session,
    SessionPlan,
};
pub use kinematics::{JointSpec, JointVector, KinematicChain, KinematicsError, Pose};
pub use metrics::{MannWhitney, MetricsError, MwuMethod};
pub use motion::{Keyframe, MotionClip, MotionError, Playback, SpeedMap, TransitSpeed};
pub use report::{Format, GridTable, ReportError, StudyReport};
pub use taxonomy::{Dimension, RawLabel, TaxonomyError, TaxonomyLabel};
pub use verification::{SharedStudy, StudyConfig, StudyState, VerificationError, VerificationResponse};

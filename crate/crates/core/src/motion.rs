//! Keyframed motion clips and their deterministic playback.
//!
//! A clip is a non-empty list of keyframes. Travel into keyframe `i` (for
//! `i ≥ 1`) is linear in joint space and lasts `max_joint_delta / rate` where
//! the rate comes from the keyframe's [`TransitSpeed`]; every keyframe then
//! holds for `hold_ms`. The first keyframe contributes only its hold.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{JointVector, KinematicChain, KinematicsError};

pub const CLIPS_SCHEMA: &str = "clips/1";
pub const DEFAULT_TICK_HZ: f64 = 50.0;
pub const FREEFORM: &str = "freeform";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MotionError {
    #[error("keyframe rejected: {0}")]
    InvalidJoints(#[from] KinematicsError),
    #[error("cannot empty a clip")]
    CannotEmpty,
    #[error("keyframe index {index} out of range for clip of {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("tick rate must be positive and finite, got {0}")]
    NonPositiveTickRate(f64),
    #[error("clip `{clip}` targets chain `{found}`, expected `{expected}`")]
    ChainMismatch {
        clip: String,
        expected: String,
        found: String,
    },
    #[error("clip `{0}` has no keyframes")]
    Empty(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TransitSpeed {
    Slow,
    #[default]
    Normal,
    Fast,
}

/// Angular rate for each transit speed, in degrees per second.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeedMap {
    pub slow_deg_per_s: f64,
    pub normal_deg_per_s: f64,
    pub fast_deg_per_s: f64,
}

impl Default for SpeedMap {
    fn default() -> Self {
        Self {
            slow_deg_per_s: 15.0,
            normal_deg_per_s: 30.0,
            fast_deg_per_s: 60.0,
        }
    }
}

impl SpeedMap {
    pub fn rate(&self, speed: TransitSpeed) -> f64 {
        match speed {
            TransitSpeed::Slow => self.slow_deg_per_s,
            TransitSpeed::Normal => self.normal_deg_per_s,
            TransitSpeed::Fast => self.fast_deg_per_s,
        }
    }

    pub fn fastest(&self) -> f64 {
        self.slow_deg_per_s.max(self.normal_deg_per_s).max(self.fast_deg_per_s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Keyframe {
    pub angles_deg: JointVector,
    pub hold_ms: u64,
    pub transit_speed: TransitSpeed,
    /// Replaces the speed-derived travel time into this keyframe when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segment_time_override_ms: Option<u64>,
}

impl Keyframe {
    pub fn new(angles_deg: impl Into<JointVector>, hold_ms: u64, transit_speed: TransitSpeed) -> Self {
        Self {
            angles_deg: angles_deg.into(),
            hold_ms,
            transit_speed,
            segment_time_override_ms: None,
        }
    }
}

/// Identity of a clip, shared by a draft before its first keyframe exists.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClipHeader {
    pub id: String,
    pub chain_name: String,
    pub created_by: String,
    /// Referent id, or [`FREEFORM`].
    pub provenance: String,
}

impl ClipHeader {
    /// Starts a clip from an empty draft.
    pub fn start(self, chain: &KinematicChain, first: Keyframe) -> Result<MotionClip, MotionError> {
        check_chain(&self, chain)?;
        chain.check_limits(&first.angles_deg)?;
        Ok(MotionClip {
            header: self,
            keyframes: vec![first],
        })
    }
}

fn check_chain(header: &ClipHeader, chain: &KinematicChain) -> Result<(), MotionError> {
    if header.chain_name != chain.name {
        return Err(MotionError::ChainMismatch {
            clip: header.id.clone(),
            expected: chain.name.clone(),
            found: header.chain_name.clone(),
        });
    }
    Ok(())
}

/// A recorded expression. Always holds at least one keyframe; every edit
/// returns a new clip and leaves `self` untouched.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionClip {
    header: ClipHeader,
    keyframes: Vec<Keyframe>,
}

impl MotionClip {
    pub fn new(header: ClipHeader, keyframes: Vec<Keyframe>) -> Result<Self, MotionError> {
        if keyframes.is_empty() {
            return Err(MotionError::Empty(header.id));
        }
        Ok(Self { header, keyframes })
    }

    pub fn header(&self) -> &ClipHeader {
        &self.header
    }

    pub fn id(&self) -> &str {
        &self.header.id
    }

    pub fn provenance(&self) -> &str {
        &self.header.provenance
    }

    /// Referent this clip was recorded for, unless freeform.
    pub fn referent_id(&self) -> Option<&str> {
        Some(self.header.provenance.as_str()).filter(|p| *p != FREEFORM)
    }

    pub fn keyframes(&self) -> &[Keyframe] {
        &self.keyframes
    }

    pub fn len(&self) -> usize {
        self.keyframes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn last(&self) -> &Keyframe {
        self.keyframes.last().expect("clip is never empty")
    }

    /// Checks chain binding and every keyframe's limits.
    pub fn validate(&self, chain: &KinematicChain) -> Result<(), MotionError> {
        check_chain(&self.header, chain)?;
        for kf in &self.keyframes {
            chain.check_limits(&kf.angles_deg)?;
        }
        Ok(())
    }

    pub fn append_keyframe(&self, chain: &KinematicChain, kf: Keyframe) -> Result<Self, MotionError> {
        check_chain(&self.header, chain)?;
        chain.check_limits(&kf.angles_deg)?;
        let mut next = self.clone();
        next.keyframes.push(kf);
        Ok(next)
    }

    pub fn undo_last_keyframe(&self) -> Result<Self, MotionError> {
        if self.keyframes.len() <= 1 {
            return Err(MotionError::CannotEmpty);
        }
        let mut next = self.clone();
        next.keyframes.pop();
        Ok(next)
    }

    pub fn set_segment_speed(&self, index: usize, speed: TransitSpeed) -> Result<Self, MotionError> {
        if index >= self.keyframes.len() {
            return Err(MotionError::IndexOutOfRange {
                index,
                len: self.keyframes.len(),
            });
        }
        let mut next = self.clone();
        next.keyframes[index].transit_speed = speed;
        Ok(next)
    }

    /// Travel time into keyframe `index`; zero for the first keyframe.
    pub fn travel_ms(&self, speeds: &SpeedMap, index: usize) -> f64 {
        if index == 0 {
            return 0.0;
        }
        let kf = &self.keyframes[index];
        if let Some(ms) = kf.segment_time_override_ms {
            return ms as f64;
        }
        let delta = kf.angles_deg.max_abs_delta(&self.keyframes[index - 1].angles_deg);
        delta / speeds.rate(kf.transit_speed) * 1000.0
    }

    pub fn duration_ms(&self, speeds: &SpeedMap) -> f64 {
        (0..self.keyframes.len())
            .map(|i| self.travel_ms(speeds, i) + self.keyframes[i].hold_ms as f64)
            .sum()
    }

    /// Joint angles at `t_ms` after playback start. Times past the end return the
    /// final keyframe; negative times return the first.
    pub fn sample(&self, speeds: &SpeedMap, t_ms: f64) -> JointVector {
        let mut start = 0.0;
        let mut previous = &self.keyframes[0].angles_deg;
        for (i, kf) in self.keyframes.iter().enumerate() {
            let travel = self.travel_ms(speeds, i);
            if travel > 0.0 && t_ms < start + travel {
                let alpha = ((t_ms - start) / travel).max(0.0);
                return lerp(previous, &kf.angles_deg, alpha);
            }
            start += travel;
            let hold = kf.hold_ms as f64;
            if t_ms < start + hold {
                return kf.angles_deg.clone();
            }
            start += hold;
            previous = &kf.angles_deg;
        }
        self.last().angles_deg.clone()
    }

    /// Samples at `k / tick_hz` seconds for every grid point within the clip's
    /// duration, starting at zero.
    pub fn frame_stream(&self, speeds: &SpeedMap, tick_hz: f64) -> Result<Vec<Frame>, MotionError> {
        if !(tick_hz.is_finite() && tick_hz > 0.0) {
            return Err(MotionError::NonPositiveTickRate(tick_hz));
        }
        let step_ms = 1000.0 / tick_hz;
        let duration = self.duration_ms(speeds);
        let count = frame_count(duration, tick_hz);
        Ok((0..count)
            .map(|k| {
                let t_ms = k as f64 * step_ms;
                Frame {
                    t_ms,
                    angles_deg: self.sample(speeds, t_ms),
                }
            })
            .collect())
    }
}

/// Grid points `0, 1/hz, 2/hz, …` that fall within `duration_ms`.
pub fn frame_count(duration_ms: f64, tick_hz: f64) -> usize {
    // The epsilon absorbs representation error when duration lands on the grid.
    (duration_ms * tick_hz / 1000.0 + 1e-9).floor() as usize + 1
}

fn lerp(from: &JointVector, to: &JointVector, alpha: f64) -> JointVector {
    JointVector(
        from.angles_deg()
            .iter()
            .zip(to.angles_deg())
            .map(|(a, b)| a + (b - a) * alpha)
            .collect(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub t_ms: f64,
    pub angles_deg: JointVector,
}

/// Live playback of one clip, advanced by a single clock driver.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlaybackState {
    pub clip_id: String,
    pub elapsed_ms: f64,
    pub current_joints: JointVector,
    pub playing: bool,
}

#[derive(Debug, Clone)]
pub struct Playback {
    clip: MotionClip,
    speeds: SpeedMap,
    duration_ms: f64,
    state: PlaybackState,
}

impl Playback {
    pub fn new(clip: MotionClip, speeds: SpeedMap) -> Self {
        let duration_ms = clip.duration_ms(&speeds);
        let state = PlaybackState {
            clip_id: clip.id().to_owned(),
            elapsed_ms: 0.0,
            current_joints: clip.sample(&speeds, 0.0),
            playing: true,
        };
        Self {
            clip,
            speeds,
            duration_ms,
            state,
        }
    }

    pub fn duration_ms(&self) -> f64 {
        self.duration_ms
    }

    pub fn clip(&self) -> &MotionClip {
        &self.clip
    }

    pub fn speeds(&self) -> &SpeedMap {
        &self.speeds
    }

    pub fn advance(&mut self, dt_ms: f64) -> &PlaybackState {
        if self.state.playing {
            self.state.elapsed_ms = (self.state.elapsed_ms + dt_ms.max(0.0)).min(self.duration_ms);
            self.state.current_joints = self.clip.sample(&self.speeds, self.state.elapsed_ms);
            if self.state.elapsed_ms >= self.duration_ms {
                self.state.playing = false;
            }
        }
        &self.state
    }

    pub fn snapshot(&self) -> PlaybackState {
        self.state.clone()
    }
}

// Serialized form: header fields flattened into the clip record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClipRecord {
    pub id: String,
    pub provenance: String,
    pub created_by: String,
    pub keyframes: Vec<Keyframe>,
}

/// On-disk `clips.json` document. All clips share one chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClipsFile {
    pub schema: String,
    pub chain: String,
    pub clips: Vec<ClipRecord>,
}

impl ClipsFile {
    pub fn from_clips(chain_name: &str, clips: &[MotionClip]) -> Self {
        Self {
            schema: CLIPS_SCHEMA.to_owned(),
            chain: chain_name.to_owned(),
            clips: clips
                .iter()
                .map(|c| ClipRecord {
                    id: c.header.id.clone(),
                    provenance: c.header.provenance.clone(),
                    created_by: c.header.created_by.clone(),
                    keyframes: c.keyframes.clone(),
                })
                .collect(),
        }
    }

    pub fn into_clips(self) -> Result<Vec<MotionClip>, MotionError> {
        let chain = self.chain;
        self.clips
            .into_iter()
            .map(|r| {
                MotionClip::new(
                    ClipHeader {
                        id: r.id,
                        chain_name: chain.clone(),
                        created_by: r.created_by,
                        provenance: r.provenance,
                    },
                    r.keyframes,
                )
            })
            .collect()
    }
}

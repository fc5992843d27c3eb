//! Phase-one study flow: referent ordering, the record/refine loop and the
//! rating battery.

use std::collections::HashSet;
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::KinematicChain;
use crate::motion::{ClipHeader, Keyframe, MotionClip, MotionError, TransitSpeed};

pub const REFERENTS_SCHEMA: &str = "referents/1";
pub const SESSION_SCHEMA: &str = "session/1";
pub const SESSIONS_SCHEMA: &str = "sessions/1";

/// Items of the per-clip rating battery, in submission order.
pub const RATING_ITEMS: [&str; 5] = ["engaged", "attentive", "explorative", "information_seeking", "curious"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ElicitationError {
    #[error("a Latin square needs at least one item")]
    EmptySquare,
    #[error("duplicate referent id `{0}`")]
    DuplicateReferent(String),
    #[error("`{event}` is not allowed during {stage}")]
    InvalidTransition { stage: StageKind, event: EventKind },
    #[error("expected {expected} ratings, got {got}")]
    RatingArity { expected: usize, got: usize },
    #[error("rating {index} = {value} is outside [0, 100]")]
    RatingRange { index: usize, value: i64 },
    #[error("no keyframes recorded for the current referent")]
    NoDraft,
    #[error(transparent)]
    Motion(#[from] MotionError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReferentKind {
    Target,
    Control,
    Tutorial,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Referent {
    pub id: String,
    pub prompt: String,
    pub kind: ReferentKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferentsFile {
    pub schema: String,
    pub referents: Vec<Referent>,
}

impl ReferentsFile {
    pub fn new(referents: Vec<Referent>) -> Self {
        Self {
            schema: REFERENTS_SCHEMA.to_owned(),
            referents,
        }
    }

    pub fn tutorials(&self) -> impl Iterator<Item = &Referent> {
        self.referents.iter().filter(|r| r.kind == ReferentKind::Tutorial)
    }

    pub fn studied(&self) -> impl Iterator<Item = &Referent> {
        self.referents.iter().filter(|r| r.kind != ReferentKind::Tutorial)
    }
}

/// Williams design over `n` items.
///
/// Even `n` yields `n` rows in which every ordered adjacency occurs exactly once;
/// odd `n` yields the square followed by its row reversals (`2n` rows). A seed
/// relabels the items with a seeded permutation and changes nothing else.
pub fn balanced_latin_square(n: usize, seed: Option<u64>) -> Result<Vec<Vec<usize>>, ElicitationError> {
    if n == 0 {
        return Err(ElicitationError::EmptySquare);
    }
    // First row 0, 1, n-1, 2, n-2, ...
    let mut first = Vec::with_capacity(n);
    let (mut lo, mut hi) = (0usize, n);
    for i in 0..n {
        if i % 2 == 0 {
            first.push(lo);
            lo += 1;
        } else {
            hi -= 1;
            first.push(hi);
        }
    }
    let mut rows: Vec<Vec<usize>> = (0..n).map(|r| first.iter().map(|&c| (c + r) % n).collect()).collect();
    if n % 2 == 1 {
        let reversed: Vec<_> = rows.iter().map(|row| row.iter().rev().copied().collect()).collect();
        rows.extend(reversed);
    }
    if let Some(seed) = seed {
        let mut labels: Vec<usize> = (0..n).collect();
        labels.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        for row in &mut rows {
            for item in row.iter_mut() {
                *item = labels[*item];
            }
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionPlan {
    pub participant_id: String,
    /// Tutorials first, then the counterbalanced referents.
    pub ordered_referents: Vec<String>,
    pub row_index: usize,
    pub tutorial_count: usize,
}

pub fn create_session(
    participant_id: &str,
    participant_index: usize,
    referents: &[Referent],
    tutorials: &[Referent],
    seed: Option<u64>,
) -> Result<SessionPlan, ElicitationError> {
    let mut seen = HashSet::new();
    for r in tutorials.iter().chain(referents) {
        if !seen.insert(r.id.as_str()) {
            return Err(ElicitationError::DuplicateReferent(r.id.clone()));
        }
    }
    let mut ordered: Vec<String> = tutorials.iter().map(|t| t.id.clone()).collect();
    let mut row_index = 0;
    if !referents.is_empty() {
        let square = balanced_latin_square(referents.len(), seed)?;
        row_index = participant_index % square.len();
        ordered.extend(square[row_index].iter().map(|&i| referents[i].id.clone()));
    }
    Ok(SessionPlan {
        participant_id: participant_id.to_owned(),
        ordered_referents: ordered,
        row_index,
        tutorial_count: tutorials.len(),
    })
}

/// A rating awaiting submission for one recorded clip.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PendingRecord {
    pub participant_id: String,
    pub referent_id: String,
    pub clip_id: String,
    pub notes: String,
}

impl PendingRecord {
    /// Seals the record. Values must be integers in `[0, 100]`, one per
    /// [`RATING_ITEMS`] entry.
    pub fn submit(self, ratings: &[i64]) -> Result<ElicitationRecord, ElicitationError> {
        if ratings.len() != RATING_ITEMS.len() {
            return Err(ElicitationError::RatingArity {
                expected: RATING_ITEMS.len(),
                got: ratings.len(),
            });
        }
        let mut sealed = [0u8; 5];
        for (index, (&value, slot)) in ratings.iter().zip(sealed.iter_mut()).enumerate() {
            if !(0..=100).contains(&value) {
                return Err(ElicitationError::RatingRange { index, value });
            }
            *slot = value as u8;
        }
        Ok(ElicitationRecord {
            participant_id: self.participant_id,
            referent_id: self.referent_id,
            clip_id: self.clip_id,
            ratings: sealed,
            notes: self.notes,
        })
    }
}

/// A sealed rating. Fields are read-only once constructed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, try_from = "RawRecord")]
pub struct ElicitationRecord {
    participant_id: String,
    referent_id: String,
    clip_id: String,
    ratings: [u8; 5],
    notes: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    participant_id: String,
    referent_id: String,
    clip_id: String,
    ratings: Vec<i64>,
    notes: String,
}

impl TryFrom<RawRecord> for ElicitationRecord {
    type Error = ElicitationError;

    fn try_from(raw: RawRecord) -> Result<Self, Self::Error> {
        PendingRecord {
            participant_id: raw.participant_id,
            referent_id: raw.referent_id,
            clip_id: raw.clip_id,
            notes: raw.notes,
        }
        .submit(&raw.ratings)
    }
}

impl ElicitationRecord {
    pub fn participant_id(&self) -> &str {
        &self.participant_id
    }
    pub fn referent_id(&self) -> &str {
        &self.referent_id
    }
    pub fn clip_id(&self) -> &str {
        &self.clip_id
    }
    pub fn ratings(&self) -> [u8; 5] {
        self.ratings
    }
    pub fn notes(&self) -> &str {
        &self.notes
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageKind {
    Tutorial,
    Recording,
    Rating,
    Complete,
}

impl fmt::Display for StageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Tutorial => "tutorial",
            Self::Recording => "recording",
            Self::Rating => "rating",
            Self::Complete => "complete",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    /// Save, undo, speed change or preview of the current draft.
    Edit,
    /// Accept the current draft and move to the next referent.
    Commit,
    Rate,
}

impl EventKind {
    pub const ALL: [EventKind; 3] = [EventKind::Edit, EventKind::Commit, EventKind::Rate];
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Edit => "edit",
            Self::Commit => "commit",
            Self::Rate => "rate",
        })
    }
}

impl StageKind {
    pub const ALL: [StageKind; 4] = [
        StageKind::Tutorial,
        StageKind::Recording,
        StageKind::Rating,
        StageKind::Complete,
    ];

    /// Transition table: which events a stage accepts.
    pub fn accepts(self, event: EventKind) -> bool {
        use EventKind::*;
        use StageKind::*;
        matches!(
            (self, event),
            (Tutorial, Edit) | (Tutorial, Commit) | (Recording, Edit) | (Recording, Commit) | (Rating, Rate)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stage {
    pub kind: StageKind,
    /// Index into the plan while recording, into the rating order while rating.
    pub position: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordedClip {
    pub referent_id: String,
    pub clip_id: String,
}

/// One participant's elicitation session.
#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    plan: SessionPlan,
    rating_seed: u64,
    stage: Stage,
    draft: Option<MotionClip>,
    recorded: Vec<RecordedClip>,
    rating_order: Vec<String>,
    records: Vec<ElicitationRecord>,
}

impl Session {
    pub fn new(plan: SessionPlan, rating_seed: u64) -> Self {
        let mut session = Self {
            plan,
            rating_seed,
            stage: Stage {
                kind: StageKind::Tutorial,
                position: 0,
            },
            draft: None,
            recorded: Vec::new(),
            rating_order: Vec::new(),
            records: Vec::new(),
        };
        session.settle_stage(0);
        session
    }

    pub fn participant_id(&self) -> &str {
        &self.plan.participant_id
    }
    pub fn plan(&self) -> &SessionPlan {
        &self.plan
    }
    pub fn stage(&self) -> Stage {
        self.stage
    }
    pub fn draft(&self) -> Option<&MotionClip> {
        self.draft.as_ref()
    }
    pub fn recorded(&self) -> &[RecordedClip] {
        &self.recorded
    }
    pub fn rating_order(&self) -> &[String] {
        &self.rating_order
    }
    pub fn records(&self) -> &[ElicitationRecord] {
        &self.records
    }
    pub fn rating_seed(&self) -> u64 {
        self.rating_seed
    }

    /// Referent being recorded, if the session is in a recording stage.
    pub fn current_referent(&self) -> Option<&str> {
        match self.stage.kind {
            StageKind::Tutorial | StageKind::Recording => {
                self.plan.ordered_referents.get(self.stage.position).map(String::as_str)
            }
            _ => None,
        }
    }

    /// Clip awaiting a rating, if in the rating stage.
    pub fn current_rating_clip(&self) -> Option<&RecordedClip> {
        if self.stage.kind != StageKind::Rating {
            return None;
        }
        let clip_id = self.rating_order.get(self.stage.position)?;
        self.recorded.iter().find(|r| &r.clip_id == clip_id)
    }

    fn guard(&self, event: EventKind) -> Result<(), ElicitationError> {
        if self.stage.kind.accepts(event) {
            Ok(())
        } else {
            Err(ElicitationError::InvalidTransition {
                stage: self.stage.kind,
                event,
            })
        }
    }

    fn clip_id_for(&self, referent: &str) -> String {
        format!("{}-{}", self.plan.participant_id, referent)
    }

    // Recomputes the stage from a plan position, entering rating once the plan is exhausted.
    fn settle_stage(&mut self, position: usize) {
        self.stage = if position < self.plan.tutorial_count {
            Stage {
                kind: StageKind::Tutorial,
                position,
            }
        } else if position < self.plan.ordered_referents.len() {
            Stage {
                kind: StageKind::Recording,
                position,
            }
        } else {
            self.rating_order = shuffled_clip_ids(&self.recorded, self.rating_seed);
            Stage {
                kind: if self.rating_order.is_empty() {
                    StageKind::Complete
                } else {
                    StageKind::Rating
                },
                position: 0,
            }
        };
    }

    pub fn save_keyframe(&mut self, chain: &KinematicChain, kf: Keyframe) -> Result<&MotionClip, ElicitationError> {
        self.guard(EventKind::Edit)?;
        let next = match &self.draft {
            Some(clip) => clip.append_keyframe(chain, kf)?,
            None => {
                let referent = self.current_referent().expect("recording stage has a referent");
                ClipHeader {
                    id: self.clip_id_for(referent),
                    chain_name: chain.name.clone(),
                    created_by: self.plan.participant_id.clone(),
                    provenance: referent.to_owned(),
                }
                .start(chain, kf)?
            }
        };
        Ok(self.draft.insert(next))
    }

    pub fn undo(&mut self) -> Result<&MotionClip, ElicitationError> {
        self.guard(EventKind::Edit)?;
        let draft = self.draft.as_ref().ok_or(ElicitationError::NoDraft)?;
        let next = draft.undo_last_keyframe()?;
        Ok(self.draft.insert(next))
    }

    pub fn set_speed(&mut self, index: usize, speed: TransitSpeed) -> Result<&MotionClip, ElicitationError> {
        self.guard(EventKind::Edit)?;
        let draft = self.draft.as_ref().ok_or(ElicitationError::NoDraft)?;
        let next = draft.set_segment_speed(index, speed)?;
        Ok(self.draft.insert(next))
    }

    /// Accepts the draft. Returns the clip to persist; tutorial clips are
    /// practice and are dropped.
    pub fn commit(&mut self) -> Result<Option<MotionClip>, ElicitationError> {
        self.guard(EventKind::Commit)?;
        if self.draft.is_none() {
            return Err(ElicitationError::NoDraft);
        }
        let clip = self.draft.take().expect("checked above");
        let kept = if self.stage.kind == StageKind::Recording {
            self.recorded.push(RecordedClip {
                referent_id: clip.provenance().to_owned(),
                clip_id: clip.id().to_owned(),
            });
            Some(clip)
        } else {
            None
        };
        self.settle_stage(self.stage.position + 1);
        Ok(kept)
    }

    pub fn submit_ratings(&mut self, ratings: &[i64], notes: &str) -> Result<&ElicitationRecord, ElicitationError> {
        self.guard(EventKind::Rate)?;
        let target = self.current_rating_clip().expect("rating stage has a clip").clone();
        let record = PendingRecord {
            participant_id: self.plan.participant_id.clone(),
            referent_id: target.referent_id,
            clip_id: target.clip_id,
            notes: notes.to_owned(),
        }
        .submit(ratings)?;
        self.records.push(record);
        let next = self.stage.position + 1;
        self.stage = if next < self.rating_order.len() {
            Stage {
                kind: StageKind::Rating,
                position: next,
            }
        } else {
            Stage {
                kind: StageKind::Complete,
                position: 0,
            }
        };
        Ok(self.records.last().expect("just pushed"))
    }

    pub fn to_file(&self) -> SessionFile {
        SessionFile {
            schema: SESSION_SCHEMA.to_owned(),
            participant_id: self.plan.participant_id.clone(),
            row_index: self.plan.row_index,
            tutorial_count: self.plan.tutorial_count,
            plan: self.plan.ordered_referents.clone(),
            rating_seed: self.rating_seed,
            stage: self.stage,
            draft: self.draft.as_ref().map(|c| c.keyframes().to_vec()),
            recorded: self.recorded.clone(),
            rating_order: self.rating_order.clone(),
            records: self.records.clone(),
        }
    }

    /// Restores a session. The draft, if any, is rebound to `chain_name`.
    pub fn from_file(file: SessionFile, chain_name: &str) -> Result<Self, ElicitationError> {
        let plan = SessionPlan {
            participant_id: file.participant_id,
            ordered_referents: file.plan,
            row_index: file.row_index,
            tutorial_count: file.tutorial_count,
        };
        let mut session = Self {
            plan,
            rating_seed: file.rating_seed,
            stage: file.stage,
            draft: None,
            recorded: file.recorded,
            rating_order: file.rating_order,
            records: file.records,
        };
        if let Some(keyframes) = file.draft {
            let referent = session
                .current_referent()
                .ok_or(ElicitationError::InvalidTransition {
                    stage: session.stage.kind,
                    event: EventKind::Edit,
                })?
                .to_owned();
            let header = ClipHeader {
                id: session.clip_id_for(&referent),
                chain_name: chain_name.to_owned(),
                created_by: session.plan.participant_id.clone(),
                provenance: referent,
            };
            session.draft = Some(MotionClip::new(header, keyframes)?);
        }
        Ok(session)
    }
}

/// Seeded permutation of recorded clip ids used as the rating playback order.
pub fn shuffled_clip_ids(recorded: &[RecordedClip], seed: u64) -> Vec<String> {
    let mut ids: Vec<String> = recorded.iter().map(|r| r.clip_id.clone()).collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    ids
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionFile {
    pub schema: String,
    pub participant_id: String,
    pub row_index: usize,
    pub tutorial_count: usize,
    pub plan: Vec<String>,
    pub rating_seed: u64,
    pub stage: Stage,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub draft: Option<Vec<Keyframe>>,
    pub recorded: Vec<RecordedClip>,
    pub rating_order: Vec<String>,
    pub records: Vec<ElicitationRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionsFile {
    pub schema: String,
    pub sessions: Vec<SessionFile>,
}

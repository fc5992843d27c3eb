//! Phase-two survey: balanced between-subjects assignment, gated response
//! collection and exclusion rules.
//!
//! Each participant sees exactly one expression video. The interpretation
//! must be sealed after at least one completed viewing and before any
//! slider values are accepted.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const STUDY_SCHEMA: &str = "study/1";
pub const RESPONSES_SCHEMA: &str = "responses/1";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum VerificationError {
    #[error("participant `{0}` already has an assignment")]
    AlreadyAssigned(String),
    #[error("every expression has reached its quota")]
    QuotaFull,
    #[error("participant `{0}` has no assignment")]
    NotAssigned(String),
    #[error("the video has not been watched to the end")]
    VideoNotCompleted,
    #[error("interpretation text is empty")]
    EmptyInterpretation,
    #[error("interpretation sealed")]
    InterpretationSealed,
    #[error("interpretation must be submitted before the rating scales")]
    InterpretationMissing,
    #[error("response already submitted")]
    AlreadySubmitted,
    #[error("response not yet submitted")]
    NotSubmitted,
    #[error("quota slot already released")]
    AlreadyReleased,
    #[error("expected {expected} {field}, got {got}")]
    Arity {
        field: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("expected {expected} untouched flags, got {got}")]
    UntouchedArity { expected: usize, got: usize },
    #[error("{field}[{index}] = {value} is outside [0, 100]")]
    Range {
        field: &'static str,
        index: usize,
        value: i64,
    },
    #[error("invalid study configuration: {0}")]
    InvalidConfig(String),
}

impl VerificationError {
    /// Whether the error is an ordering or capacity conflict rather than a
    /// malformed request.
    pub fn is_conflict(&self) -> bool {
        matches!(
            self,
            Self::AlreadyAssigned(_)
                | Self::QuotaFull
                | Self::VideoNotCompleted
                | Self::InterpretationSealed
                | Self::InterpretationMissing
                | Self::AlreadySubmitted
                | Self::NotSubmitted
                | Self::AlreadyReleased
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpressionVideo {
    pub category_id: String,
    pub video_uri: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatteryItem {
    pub key: String,
    pub text: String,
    pub reverse_scored: bool,
}

/// A slider the participant is told to move into `[min, max]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttentionCheck {
    /// Position of the check within the slider page.
    pub position: usize,
    pub prompt: String,
    pub min: u8,
    pub max: u8,
}

impl AttentionCheck {
    pub fn passes(&self, value: u8) -> bool {
        (self.min..=self.max).contains(&value)
    }
}

/// On-disk `study.json` document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub schema: String,
    pub study_id: String,
    pub expressions: Vec<ExpressionVideo>,
    pub quota_per_expression: u32,
    pub battery: Vec<BatteryItem>,
    pub attention_checks: Vec<AttentionCheck>,
}

impl StudyConfig {
    pub fn validate(&self) -> Result<(), VerificationError> {
        let invalid = |m: String| Err(VerificationError::InvalidConfig(m));
        if self.quota_per_expression == 0 {
            return invalid("quota must be at least 1".into());
        }
        if self.expressions.is_empty() {
            return invalid("no expressions".into());
        }
        let mut ids = BTreeSet::new();
        for e in &self.expressions {
            if !ids.insert(&e.category_id) {
                return invalid(format!("duplicate expression `{}`", e.category_id));
            }
        }
        let mut keys = BTreeSet::new();
        let mut texts = BTreeSet::new();
        for item in &self.battery {
            if !keys.insert(&item.key) || !texts.insert(&item.text) {
                return invalid(format!("duplicate battery item `{}`", item.key));
            }
        }
        for check in &self.attention_checks {
            if check.min > check.max || check.max > 100 {
                return invalid(format!("attention check at {} has an invalid region", check.position));
            }
        }
        Ok(())
    }

    pub fn video_uri(&self, category_id: &str) -> Option<&str> {
        self.expressions
            .iter()
            .find(|e| e.category_id == category_id)
            .map(|e| e.video_uri.as_str())
    }

    /// Slider values as reported: reverse-scored items become `100 - x`.
    pub fn reported_vas(&self, raw: &[u8]) -> Vec<u8> {
        raw.iter()
            .zip(&self.battery)
            .map(|(&v, item)| if item.reverse_scored { 100 - v } else { v })
            .collect()
    }

    /// Ten-item perception battery; `intrusive` and `disturbing` are reverse scored.
    pub fn default_battery() -> Vec<BatteryItem> {
        [
            ("engaged", "The gesture seems engaged.", false),
            ("attentive", "The gesture seems attentive.", false),
            ("explorative", "The gesture seems explorative.", false),
            ("information_seeking", "The gesture seems to seek information.", false),
            ("curious", "The gesture seems curious.", false),
            ("understandable", "The gesture is easy to understand.", false),
            (
                "effective",
                "The gesture conveys the robot's intent effectively.",
                false,
            ),
            ("intrusive", "The gesture feels intrusive.", true),
            ("noticeable", "The gesture is easy to notice.", false),
            ("disturbing", "The gesture feels disturbing.", true),
        ]
        .into_iter()
        .map(|(key, text, reverse_scored)| BatteryItem {
            key: key.into(),
            text: text.into(),
            reverse_scored,
        })
        .collect()
    }
}

/// Logical event stamp: `seq` orders events within a study; `unix_ms` is the
/// server wall clock, kept for audit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stamp {
    pub seq: u64,
    pub unix_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Assignment {
    pub participant_id: String,
    pub category_id: String,
    pub issued_at: Stamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResponseTimeline {
    pub assigned: Stamp,
    pub first_video_completed: Stamp,
    pub interpretation_sealed: Stamp,
    pub vas_submitted: Stamp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerificationResponse {
    pub participant_id: String,
    pub category_id: String,
    pub interpretation: String,
    /// Raw slider values in battery order; reverse scoring is applied only in reports.
    pub vas: Vec<u8>,
    /// Per-slider flag for handles left at their initial position; empty when not reported.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub vas_untouched: Vec<bool>,
    pub attention_answers: Vec<u8>,
    pub watch_count: u32,
    pub duration_s: f64,
    /// Set by a researcher when the answer describes motion instead of meaning.
    #[serde(default)]
    pub movement_only: bool,
    pub timeline: ResponseTimeline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExclusionReason {
    Attention,
    MovementOnly,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Exclusion {
    pub participant_id: String,
    pub reasons: Vec<ExclusionReason>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExclusionOutcome {
    pub kept: Vec<VerificationResponse>,
    pub excluded: Vec<(VerificationResponse, Vec<ExclusionReason>)>,
}

impl ExclusionOutcome {
    pub fn exclusions(&self) -> Vec<Exclusion> {
        self.excluded
            .iter()
            .map(|(r, reasons)| Exclusion {
                participant_id: r.participant_id.clone(),
                reasons: reasons.clone(),
            })
            .collect()
    }
}

pub fn exclusion_reasons(response: &VerificationResponse, checks: &[AttentionCheck]) -> Vec<ExclusionReason> {
    let mut reasons = Vec::new();
    let failed = checks
        .iter()
        .enumerate()
        .any(|(i, check)| response.attention_answers.get(i).is_none_or(|&v| !check.passes(v)));
    if failed {
        reasons.push(ExclusionReason::Attention);
    }
    if response.movement_only {
        reasons.push(ExclusionReason::MovementOnly);
    }
    reasons
}

/// Splits responses into kept and excluded. Attention failures are detected
/// from the answers; movement-only exclusions come from the researcher flag.
pub fn apply_exclusions(responses: &[VerificationResponse], checks: &[AttentionCheck]) -> ExclusionOutcome {
    let mut outcome = ExclusionOutcome {
        kept: Vec::new(),
        excluded: Vec::new(),
    };
    for r in responses {
        let reasons = exclusion_reasons(r, checks);
        if reasons.is_empty() {
            outcome.kept.push(r.clone());
        } else {
            outcome.excluded.push((r.clone(), reasons));
        }
    }
    outcome
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SurveyStage {
    Video,
    Interpretation,
    Vas,
    Done,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticipantProgress {
    pub assignment: Assignment,
    pub video_completions: Vec<Stamp>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interpretation: Option<(String, Stamp)>,
    pub submitted: bool,
    /// Excluded after submission; the quota slot went back to the pool.
    #[serde(default)]
    pub released: bool,
}

impl ParticipantProgress {
    pub fn watch_count(&self) -> u32 {
        self.video_completions.len() as u32
    }

    pub fn stage(&self) -> SurveyStage {
        match (self.submitted, &self.interpretation, self.video_completions.is_empty()) {
            (true, _, _) => SurveyStage::Done,
            (false, Some(_), _) => SurveyStage::Vas,
            (false, None, true) => SurveyStage::Video,
            (false, None, false) => SurveyStage::Interpretation,
        }
    }
}

fn parse_scale(field: &'static str, values: &[i64], expected: usize) -> Result<Vec<u8>, VerificationError> {
    if values.len() != expected {
        return Err(VerificationError::Arity {
            field,
            expected,
            got: values.len(),
        });
    }
    values
        .iter()
        .enumerate()
        .map(|(index, &value)| {
            u8::try_from(value)
                .ok()
                .filter(|v| *v <= 100)
                .ok_or(VerificationError::Range { field, index, value })
        })
        .collect()
}

/// Mutable study state. Callers serialize access (see [`SharedStudy`]).
#[derive(Debug, Clone, PartialEq)]
pub struct StudyState {
    config: StudyConfig,
    next_seq: u64,
    counts: BTreeMap<String, u32>,
    progress: BTreeMap<String, ParticipantProgress>,
    responses: Vec<VerificationResponse>,
}

impl StudyState {
    pub fn new(config: StudyConfig) -> Result<Self, VerificationError> {
        config.validate()?;
        let counts = config.expressions.iter().map(|e| (e.category_id.clone(), 0)).collect();
        Ok(Self {
            config,
            next_seq: 0,
            counts,
            progress: BTreeMap::new(),
            responses: Vec::new(),
        })
    }

    /// Rebuilds state from stored responses. Excluded participants keep their
    /// record but no longer count toward the quota.
    pub fn with_responses(
        config: StudyConfig,
        responses: Vec<VerificationResponse>,
        exclusions: &[Exclusion],
    ) -> Result<Self, VerificationError> {
        let mut state = Self::new(config)?;
        let excluded: BTreeSet<&str> = exclusions.iter().map(|e| e.participant_id.as_str()).collect();
        for r in &responses {
            let released = excluded.contains(r.participant_id.as_str());
            if !released {
                *state.counts.entry(r.category_id.clone()).or_default() += 1;
            }
            state.next_seq = state.next_seq.max(r.timeline.vas_submitted.seq + 1);
            state.progress.insert(
                r.participant_id.clone(),
                ParticipantProgress {
                    assignment: Assignment {
                        participant_id: r.participant_id.clone(),
                        category_id: r.category_id.clone(),
                        issued_at: r.timeline.assigned,
                    },
                    video_completions: vec![r.timeline.first_video_completed; r.watch_count as usize],
                    interpretation: Some((r.interpretation.clone(), r.timeline.interpretation_sealed)),
                    submitted: true,
                    released,
                },
            );
        }
        state.responses = responses;
        Ok(state)
    }

    pub fn config(&self) -> &StudyConfig {
        &self.config
    }

    pub fn counts(&self) -> &BTreeMap<String, u32> {
        &self.counts
    }

    pub fn responses(&self) -> &[VerificationResponse] {
        &self.responses
    }

    pub fn progress(&self, participant_id: &str) -> Option<&ParticipantProgress> {
        self.progress.get(participant_id)
    }

    fn stamp(&mut self, unix_ms: u64) -> Stamp {
        let seq = self.next_seq;
        self.next_seq += 1;
        Stamp { seq, unix_ms }
    }

    fn progress_mut(&mut self, participant_id: &str) -> Result<&mut ParticipantProgress, VerificationError> {
        self.progress
            .get_mut(participant_id)
            .ok_or_else(|| VerificationError::NotAssigned(participant_id.to_owned()))
    }

    /// Assigns the least-filled expression, breaking ties by lowest category id.
    pub fn assign(&mut self, participant_id: &str, unix_ms: u64) -> Result<Assignment, VerificationError> {
        if self.progress.contains_key(participant_id) {
            return Err(VerificationError::AlreadyAssigned(participant_id.to_owned()));
        }
        let quota = self.config.quota_per_expression;
        let category_id = self
            .counts
            .iter()
            .filter(|(_, &n)| n < quota)
            .min_by(|(a_id, a), (b_id, b)| a.cmp(b).then_with(|| a_id.cmp(b_id)))
            .map(|(id, _)| id.clone())
            .ok_or(VerificationError::QuotaFull)?;
        *self.counts.get_mut(&category_id).expect("known category") += 1;
        let assignment = Assignment {
            participant_id: participant_id.to_owned(),
            category_id,
            issued_at: self.stamp(unix_ms),
        };
        self.progress.insert(
            participant_id.to_owned(),
            ParticipantProgress {
                assignment: assignment.clone(),
                video_completions: Vec::new(),
                interpretation: None,
                submitted: false,
                released: false,
            },
        );
        Ok(assignment)
    }

    /// Records a client-reported video-ended event. Allowed at every stage.
    pub fn record_video_completed(&mut self, participant_id: &str, unix_ms: u64) -> Result<u32, VerificationError> {
        let stamp = self.stamp(unix_ms);
        let progress = self.progress_mut(participant_id)?;
        progress.video_completions.push(stamp);
        Ok(progress.watch_count())
    }

    pub fn submit_interpretation(
        &mut self,
        participant_id: &str,
        text: &str,
        unix_ms: u64,
    ) -> Result<(), VerificationError> {
        let progress = self.progress_mut(participant_id)?;
        if progress.submitted || progress.interpretation.is_some() {
            return Err(VerificationError::InterpretationSealed);
        }
        if progress.video_completions.is_empty() {
            return Err(VerificationError::VideoNotCompleted);
        }
        if text.trim().is_empty() {
            return Err(VerificationError::EmptyInterpretation);
        }
        let stamp = self.stamp(unix_ms);
        self.progress_mut(participant_id)?.interpretation = Some((text.to_owned(), stamp));
        Ok(())
    }

    pub fn submit_vas(
        &mut self,
        participant_id: &str,
        values: &[i64],
        attention_answers: &[i64],
        untouched: &[bool],
        unix_ms: u64,
    ) -> Result<&VerificationResponse, VerificationError> {
        let battery_len = self.config.battery.len();
        let checks_len = self.config.attention_checks.len();
        let progress = self.progress_mut(participant_id)?;
        if progress.submitted {
            return Err(VerificationError::AlreadySubmitted);
        }
        if progress.interpretation.is_none() {
            return Err(VerificationError::InterpretationMissing);
        }
        let vas = parse_scale("values", values, battery_len)?;
        let attention_answers = parse_scale("attention", attention_answers, checks_len)?;
        if !untouched.is_empty() && untouched.len() != battery_len {
            return Err(VerificationError::UntouchedArity {
                expected: battery_len,
                got: untouched.len(),
            });
        }
        let stamp = self.stamp(unix_ms);
        let progress = self.progress_mut(participant_id)?;
        progress.submitted = true;
        let (interpretation, sealed) = progress.interpretation.clone().expect("checked");
        let response = VerificationResponse {
            participant_id: participant_id.to_owned(),
            category_id: progress.assignment.category_id.clone(),
            interpretation,
            vas,
            vas_untouched: untouched.to_vec(),
            attention_answers,
            watch_count: progress.watch_count(),
            duration_s: stamp.unix_ms.saturating_sub(progress.assignment.issued_at.unix_ms) as f64 / 1000.0,
            movement_only: false,
            timeline: ResponseTimeline {
                assigned: progress.assignment.issued_at,
                first_video_completed: progress.video_completions[0],
                interpretation_sealed: sealed,
                vas_submitted: stamp,
            },
        };
        self.responses.push(response);
        Ok(self.responses.last().expect("just pushed"))
    }

    /// Returns the quota slot of an excluded, submitted response so that a
    /// replacement participant can be assigned.
    pub fn release_slot(&mut self, participant_id: &str) -> Result<(), VerificationError> {
        let progress = self.progress_mut(participant_id)?;
        if !progress.submitted {
            return Err(VerificationError::NotSubmitted);
        }
        if progress.released {
            return Err(VerificationError::AlreadyReleased);
        }
        progress.released = true;
        let category = progress.assignment.category_id.clone();
        *self.counts.get_mut(&category).expect("known category") -= 1;
        Ok(())
    }

    /// Researcher flag for answers that describe motion rather than meaning.
    pub fn flag_movement_only(&mut self, participant_id: &str, flag: bool) -> Result<(), VerificationError> {
        let response = self
            .responses
            .iter_mut()
            .find(|r| r.participant_id == participant_id)
            .ok_or_else(|| VerificationError::NotAssigned(participant_id.to_owned()))?;
        response.movement_only = flag;
        Ok(())
    }
}

/// A study whose mutations are serialized behind one lock.
#[derive(Debug)]
pub struct SharedStudy {
    inner: Mutex<StudyState>,
}

impl SharedStudy {
    pub fn new(state: StudyState) -> Self {
        Self {
            inner: Mutex::new(state),
        }
    }

    pub fn with<R>(&self, f: impl FnOnce(&mut StudyState) -> R) -> R {
        let mut guard = self.inner.lock().unwrap_or_else(|e| e.into_inner());
        f(&mut guard)
    }

    pub fn assign(&self, participant_id: &str, unix_ms: u64) -> Result<Assignment, VerificationError> {
        self.with(|s| s.assign(participant_id, unix_ms))
    }

    pub fn snapshot(&self) -> StudyState {
        self.with(|s| s.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResponsesFile {
    pub schema: String,
    pub study_id: String,
    pub responses: Vec<VerificationResponse>,
    pub exclusions: Vec<Exclusion>,
    /// Coded labels per response; `response_id` is the participant id.
    pub labelings: Vec<crate::coding::ResponseLabeling>,
}

use std::collections::{BTreeMap, VecDeque};
use std::path::{Path, PathBuf};

use expressforge_core::bundle::MANIFEST_FILE;
use expressforge_core::elicitation::SessionsFile;
use expressforge_core::motion::ClipsFile;
use expressforge_core::verification::apply_exclusions;
use expressforge_core::{reference_study, KinematicChain, MotionClip, Session, SpeedMap, StudyBundle, StudyState};

use crate::error::ApiError;

const MAX_PLAYBACKS: usize = 256;

/// A clip queued for streaming.
#[derive(Debug, Clone)]
pub struct PlaybackHandle {
    pub clip: MotionClip,
    pub speeds: SpeedMap,
}

/// In-memory view of one bundle directory. Every mutation is written back
/// before the handler returns.
#[derive(Debug)]
pub struct Store {
    dir: Option<PathBuf>,
    base: StudyBundle,
    chain: KinematicChain,
    pub speeds: SpeedMap,
    pub sessions: BTreeMap<String, Session>,
    pub clips: Vec<MotionClip>,
    pub study: StudyState,
    playbacks: BTreeMap<u64, PlaybackHandle>,
    playback_order: VecDeque<u64>,
    next_playback: u64,
}

impl Store {
    /// Opens `dir`, seeding it with an empty study when no manifest exists.
    pub fn open(dir: &Path) -> Result<Self, ApiError> {
        let bundle = if dir.join(MANIFEST_FILE).exists() {
            StudyBundle::load(dir)?
        } else {
            let bundle = reference_study::blank();
            bundle.save(dir)?;
            bundle
        };
        let mut store = Self::from_bundle(bundle)?;
        store.dir = Some(dir.to_owned());
        Ok(store)
    }

    /// A store that never touches disk.
    pub fn in_memory(bundle: StudyBundle) -> Result<Self, ApiError> {
        Self::from_bundle(bundle)
    }

    fn from_bundle(bundle: StudyBundle) -> Result<Self, ApiError> {
        let chain = bundle.chain();
        let clips = bundle.motion_clips().map_err(|e| ApiError::internal(e.to_string()))?;
        let sessions = bundle
            .sessions
            .sessions
            .iter()
            .map(|f| {
                Session::from_file(f.clone(), &chain.name)
                    .map(|s| (f.participant_id.clone(), s))
                    .map_err(|e| ApiError::internal(e.to_string()))
            })
            .collect::<Result<_, _>>()?;
        let study = StudyState::with_responses(
            bundle.study.clone(),
            bundle.responses.responses.clone(),
            &bundle.responses.exclusions,
        )
        .map_err(|e| ApiError::internal(e.to_string()))?;
        Ok(Self {
            dir: None,
            base: bundle,
            chain,
            speeds: SpeedMap::default(),
            sessions,
            clips,
            study,
            playbacks: BTreeMap::new(),
            playback_order: VecDeque::new(),
            next_playback: 0,
        })
    }

    pub fn chain(&self) -> &KinematicChain {
        &self.chain
    }

    pub fn base(&self) -> &StudyBundle {
        &self.base
    }

    pub fn to_bundle(&self) -> StudyBundle {
        let mut bundle = self.base.clone();
        bundle.sessions = SessionsFile {
            schema: bundle.sessions.schema.clone(),
            sessions: self.sessions.values().map(Session::to_file).collect(),
        };
        bundle.clips = ClipsFile::from_clips(&self.chain.name, &self.clips);
        let responses = self.study.responses().to_vec();
        bundle.responses.exclusions = apply_exclusions(&responses, &self.study.config().attention_checks).exclusions();
        bundle.responses.responses = responses;
        bundle
    }

    pub fn persist(&self) -> Result<(), ApiError> {
        match &self.dir {
            Some(dir) => Ok(self.to_bundle().save(dir)?),
            None => Ok(()),
        }
    }

    pub fn add_playback(&mut self, clip: MotionClip) -> String {
        let id = self.next_playback;
        self.next_playback += 1;
        self.playbacks.insert(
            id,
            PlaybackHandle {
                clip,
                speeds: self.speeds,
            },
        );
        self.playback_order.push_back(id);
        while self.playback_order.len() > MAX_PLAYBACKS {
            if let Some(old) = self.playback_order.pop_front() {
                self.playbacks.remove(&old);
            }
        }
        format!("pb-{id}")
    }

    pub fn playback(&self, id: &str) -> Option<&PlaybackHandle> {
        let n: u64 = id.strip_prefix("pb-")?.parse().ok()?;
        self.playbacks.get(&n)
    }
}

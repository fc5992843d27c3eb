//! Study bundle: a directory of canonical JSON files plus a hash manifest.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::coding::{CodeBook, CODES_SCHEMA};
use crate::elicitation::{ReferentsFile, SessionsFile, REFERENTS_SCHEMA, SESSIONS_SCHEMA, SESSION_SCHEMA};
use crate::kinematics::{ChainFile, KinematicChain, CHAIN_SCHEMA};
use crate::motion::{ClipsFile, MotionClip, MotionError, CLIPS_SCHEMA, FREEFORM};
use crate::verification::{exclusion_reasons, ResponsesFile, StudyConfig, RESPONSES_SCHEMA, STUDY_SCHEMA};

pub const MANIFEST_SCHEMA: &str = "manifest/1";
pub const MANIFEST_FILE: &str = "manifest.json";

pub const CHAIN_FILE: &str = "chain.json";
pub const REFERENTS_FILE: &str = "referents.json";
pub const SESSIONS_FILE: &str = "sessions.json";
pub const CLIPS_FILE: &str = "clips.json";
pub const CODES_FILE: &str = "codes.json";
pub const STUDY_FILE: &str = "study.json";
pub const RESPONSES_FILE: &str = "responses.json";

/// Canonical serialization: sorted keys, two-space indent, trailing newline.
pub fn canonical_json<T: Serialize + ?Sized>(value: &T) -> String {
    let value = serde_json::to_value(value).expect("serializable value");
    let mut out = serde_json::to_string_pretty(&value).expect("serializable value");
    out.push('\n');
    out
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema: String,
    pub files: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BundleIssue {
    pub file: String,
    pub path: String,
    pub message: String,
}

impl fmt::Display for BundleIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}: {}", self.file, self.path, self.message)
    }
}

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("cannot access {}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bundle is invalid:\n{}", .0.iter().map(|i| format!("  {i}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<BundleIssue>),
}

impl BundleError {
    pub fn issues(&self) -> &[BundleIssue] {
        match self {
            Self::Invalid(issues) => issues,
            Self::Io { .. } => &[],
        }
    }
}

fn issue(file: &str, path: impl Into<String>, message: impl Into<String>) -> BundleIssue {
    BundleIssue {
        file: file.to_owned(),
        path: path.into(),
        message: message.into(),
    }
}

/// Parses `text` as `T`, reporting the failing field path on error.
pub fn parse_with_path<T: DeserializeOwned>(file: &str, text: &str) -> Result<T, BundleIssue> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        issue(file, path, e.into_inner().to_string())
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyBundle {
    pub chain: ChainFile,
    pub referents: ReferentsFile,
    pub sessions: SessionsFile,
    pub clips: ClipsFile,
    pub codes: CodeBook,
    pub study: StudyConfig,
    pub responses: ResponsesFile,
}

impl StudyBundle {
    pub fn chain(&self) -> KinematicChain {
        self.chain.clone().into()
    }

    pub fn motion_clips(&self) -> Result<Vec<MotionClip>, MotionError> {
        self.clips.clone().into_clips()
    }

    /// Canonical file contents keyed by file name, manifest included.
    pub fn to_files(&self) -> BTreeMap<&'static str, String> {
        let mut files = BTreeMap::from([
            (CHAIN_FILE, canonical_json(&self.chain)),
            (REFERENTS_FILE, canonical_json(&self.referents)),
            (SESSIONS_FILE, canonical_json(&self.sessions)),
            (CLIPS_FILE, canonical_json(&self.clips)),
            (CODES_FILE, canonical_json(&self.codes)),
            (STUDY_FILE, canonical_json(&self.study)),
            (RESPONSES_FILE, canonical_json(&self.responses)),
        ]);
        let manifest = Manifest {
            schema: MANIFEST_SCHEMA.to_owned(),
            files: files
                .iter()
                .map(|(name, text)| ManifestEntry {
                    name: (*name).to_owned(),
                    sha256: sha256_hex(text.as_bytes()),
                })
                .collect(),
        };
        files.insert(MANIFEST_FILE, canonical_json(&manifest));
        files
    }

    pub fn save(&self, dir: &Path) -> Result<(), BundleError> {
        fs::create_dir_all(dir).map_err(|source| BundleError::Io {
            path: dir.to_owned(),
            source,
        })?;
        for (name, text) in self.to_files() {
            let path = dir.join(name);
            fs::write(&path, text).map_err(|source| BundleError::Io { path, source })?;
        }
        Ok(())
    }

    /// Reads, hash-checks and cross-validates a bundle directory.
    pub fn load(dir: &Path) -> Result<Self, BundleError> {
        let read = |name: &str| {
            let path = dir.join(name);
            fs::read_to_string(&path).map_err(|source| BundleError::Io { path, source })
        };
        let manifest_text = read(MANIFEST_FILE)?;
        let mut texts = HashMap::new();
        for name in [
            CHAIN_FILE,
            REFERENTS_FILE,
            SESSIONS_FILE,
            CLIPS_FILE,
            CODES_FILE,
            STUDY_FILE,
            RESPONSES_FILE,
        ] {
            texts.insert(name, read(name)?);
        }
        Self::from_texts(&manifest_text, &texts)
    }

    fn from_texts(manifest_text: &str, texts: &HashMap<&str, String>) -> Result<Self, BundleError> {
        let mut issues = Vec::new();
        match parse_with_path::<Manifest>(MANIFEST_FILE, manifest_text) {
            Ok(manifest) => {
                if manifest.schema != MANIFEST_SCHEMA {
                    issues.push(schema_issue(MANIFEST_FILE, MANIFEST_SCHEMA, &manifest.schema));
                }
                let listed: HashMap<&str, &str> = manifest
                    .files
                    .iter()
                    .map(|e| (e.name.as_str(), e.sha256.as_str()))
                    .collect();
                let mut names: Vec<&&str> = texts.keys().collect();
                names.sort();
                for name in names {
                    match listed.get(*name) {
                        None => issues.push(issue(MANIFEST_FILE, "files", format!("`{name}` is not listed"))),
                        Some(hash) if *hash != sha256_hex(texts[*name].as_bytes()) => {
                            issues.push(issue(name, "", "content hash does not match the manifest"))
                        }
                        Some(_) => {}
                    }
                }
                for (i, e) in manifest.files.iter().enumerate() {
                    if !texts.contains_key(e.name.as_str()) {
                        issues.push(issue(
                            MANIFEST_FILE,
                            format!("files[{i}].name"),
                            format!("unknown file `{}`", e.name),
                        ));
                    }
                }
            }
            Err(e) => issues.push(e),
        }

        fn parse<T: DeserializeOwned>(
            name: &str,
            texts: &HashMap<&str, String>,
            issues: &mut Vec<BundleIssue>,
        ) -> Option<T> {
            parse_with_path(name, &texts[name]).map_err(|e| issues.push(e)).ok()
        }
        let chain = parse::<ChainFile>(CHAIN_FILE, texts, &mut issues);
        let referents = parse::<ReferentsFile>(REFERENTS_FILE, texts, &mut issues);
        let sessions = parse::<SessionsFile>(SESSIONS_FILE, texts, &mut issues);
        let clips = parse::<ClipsFile>(CLIPS_FILE, texts, &mut issues);
        let codes = parse::<CodeBook>(CODES_FILE, texts, &mut issues);
        let study = parse::<StudyConfig>(STUDY_FILE, texts, &mut issues);
        let responses = parse::<ResponsesFile>(RESPONSES_FILE, texts, &mut issues);
        let (Some(chain), Some(referents), Some(sessions), Some(clips), Some(codes), Some(study), Some(responses)) =
            (chain, referents, sessions, clips, codes, study, responses)
        else {
            return Err(BundleError::Invalid(issues));
        };
        let bundle = Self {
            chain,
            referents,
            sessions,
            clips,
            codes,
            study,
            responses,
        };
        issues.extend(bundle.validate());
        if issues.is_empty() {
            Ok(bundle)
        } else {
            Err(BundleError::Invalid(issues))
        }
    }

    /// Schema strings and cross-file references.
    pub fn validate(&self) -> Vec<BundleIssue> {
        let mut issues = Vec::new();
        let mut schema = |file: &str, expected: &str, found: &str| {
            if expected != found {
                issues.push(schema_issue(file, expected, found));
            }
        };
        schema(CHAIN_FILE, CHAIN_SCHEMA, &self.chain.schema);
        schema(REFERENTS_FILE, REFERENTS_SCHEMA, &self.referents.schema);
        schema(SESSIONS_FILE, SESSIONS_SCHEMA, &self.sessions.schema);
        for s in &self.sessions.sessions {
            schema(SESSIONS_FILE, SESSION_SCHEMA, &s.schema);
        }
        schema(CLIPS_FILE, CLIPS_SCHEMA, &self.clips.schema);
        schema(CODES_FILE, CODES_SCHEMA, &self.codes.schema);
        schema(STUDY_FILE, STUDY_SCHEMA, &self.study.schema);
        schema(RESPONSES_FILE, RESPONSES_SCHEMA, &self.responses.schema);

        let chain = self.chain();
        if let Err(e) = chain.validate() {
            issues.push(issue(CHAIN_FILE, "joints", e.to_string()));
        }

        // referents
        let mut referent_kinds = HashMap::new();
        for (i, r) in self.referents.referents.iter().enumerate() {
            if referent_kinds.insert(r.id.as_str(), r.kind).is_some() {
                issues.push(issue(
                    REFERENTS_FILE,
                    format!("referents[{i}].id"),
                    format!("duplicate id `{}`", r.id),
                ));
            }
        }

        // clips
        if self.clips.chain != chain.name {
            issues.push(issue(
                CLIPS_FILE,
                "chain",
                format!("chain `{}` does not match `{}`", self.clips.chain, chain.name),
            ));
        }
        let mut clip_ids = HashSet::new();
        for (i, c) in self.clips.clips.iter().enumerate() {
            if !clip_ids.insert(c.id.as_str()) {
                issues.push(issue(
                    CLIPS_FILE,
                    format!("clips[{i}].id"),
                    format!("duplicate id `{}`", c.id),
                ));
            }
            if c.provenance != FREEFORM && !referent_kinds.contains_key(c.provenance.as_str()) {
                issues.push(issue(
                    CLIPS_FILE,
                    format!("clips[{i}].provenance"),
                    format!("unknown referent `{}`", c.provenance),
                ));
            }
            if c.keyframes.is_empty() {
                issues.push(issue(CLIPS_FILE, format!("clips[{i}].keyframes"), "no keyframes"));
            }
            for (k, kf) in c.keyframes.iter().enumerate() {
                if let Err(e) = chain.check_limits(&kf.angles_deg) {
                    issues.push(issue(
                        CLIPS_FILE,
                        format!("clips[{i}].keyframes[{k}].angles_deg"),
                        e.to_string(),
                    ));
                }
            }
        }

        // sessions
        let mut participants = HashSet::new();
        for (i, s) in self.sessions.sessions.iter().enumerate() {
            if !participants.insert(s.participant_id.as_str()) {
                issues.push(issue(
                    SESSIONS_FILE,
                    format!("sessions[{i}].participant_id"),
                    format!("duplicate participant `{}`", s.participant_id),
                ));
            }
            for (j, r) in s.plan.iter().enumerate() {
                if !referent_kinds.contains_key(r.as_str()) {
                    issues.push(issue(
                        SESSIONS_FILE,
                        format!("sessions[{i}].plan[{j}]"),
                        format!("unknown referent `{r}`"),
                    ));
                }
            }
            for (j, r) in s.recorded.iter().enumerate() {
                if !clip_ids.contains(r.clip_id.as_str()) {
                    issues.push(issue(
                        SESSIONS_FILE,
                        format!("sessions[{i}].recorded[{j}].clip_id"),
                        format!("unknown clip `{}`", r.clip_id),
                    ));
                }
            }
            for (j, r) in s.records.iter().enumerate() {
                if !clip_ids.contains(r.clip_id()) {
                    issues.push(issue(
                        SESSIONS_FILE,
                        format!("sessions[{i}].records[{j}].clip_id"),
                        format!("unknown clip `{}`", r.clip_id()),
                    ));
                }
            }
        }

        // codes
        for i in self.codes.validate(Some(&clip_ids)) {
            issues.push(issue(CODES_FILE, i.path, i.message));
        }
        for (i, c) in self.codes.categories.iter().enumerate() {
            for r in &c.origin_referents {
                if !referent_kinds.contains_key(r.as_str()) {
                    issues.push(issue(
                        CODES_FILE,
                        format!("categories[{i}].origin_referents"),
                        format!("unknown referent `{r}`"),
                    ));
                }
            }
        }
        for (i, (_, referent)) in self.codes.match_table.keys().enumerate() {
            if !referent_kinds.contains_key(referent) {
                issues.push(issue(
                    CODES_FILE,
                    format!("match_table[{i}].referent"),
                    format!("unknown referent `{referent}`"),
                ));
            }
        }

        // study
        if let Err(e) = self.study.validate() {
            issues.push(issue(STUDY_FILE, "", e.to_string()));
        }
        for (i, e) in self.study.expressions.iter().enumerate() {
            if self.codes.category(&e.category_id).is_none() {
                issues.push(issue(
                    STUDY_FILE,
                    format!("expressions[{i}].category_id"),
                    format!("unknown category `{}`", e.category_id),
                ));
            }
        }

        // responses
        if self.responses.study_id != self.study.study_id {
            issues.push(issue(
                RESPONSES_FILE,
                "study_id",
                format!(
                    "study `{}` does not match `{}`",
                    self.responses.study_id, self.study.study_id
                ),
            ));
        }
        let mut responders = HashMap::new();
        let battery = self.study.battery.len();
        let checks = self.study.attention_checks.len();
        for (i, r) in self.responses.responses.iter().enumerate() {
            if responders.insert(r.participant_id.as_str(), r).is_some() {
                issues.push(issue(
                    RESPONSES_FILE,
                    format!("responses[{i}].participant_id"),
                    format!("duplicate participant `{}`", r.participant_id),
                ));
            }
            if self.study.video_uri(&r.category_id).is_none() {
                issues.push(issue(
                    RESPONSES_FILE,
                    format!("responses[{i}].category_id"),
                    format!("unknown expression `{}`", r.category_id),
                ));
            }
            if r.vas.len() != battery || r.vas.iter().any(|v| *v > 100) {
                issues.push(issue(
                    RESPONSES_FILE,
                    format!("responses[{i}].vas"),
                    format!("expected {battery} values in [0, 100]"),
                ));
            }
            if !r.vas_untouched.is_empty() && r.vas_untouched.len() != battery {
                issues.push(issue(
                    RESPONSES_FILE,
                    format!("responses[{i}].vas_untouched"),
                    format!("expected {battery} flags"),
                ));
            }
            if r.attention_answers.len() != checks || r.attention_answers.iter().any(|v| *v > 100) {
                issues.push(issue(
                    RESPONSES_FILE,
                    format!("responses[{i}].attention_answers"),
                    format!("expected {checks} values in [0, 100]"),
                ));
            }
            let t = &r.timeline;
            if !(t.assigned.seq < t.first_video_completed.seq
                && t.first_video_completed.seq < t.interpretation_sealed.seq
                && t.interpretation_sealed.seq < t.vas_submitted.seq)
            {
                issues.push(issue(
                    RESPONSES_FILE,
                    format!("responses[{i}].timeline"),
                    "events out of order",
                ));
            }
        }
        let mut excluded = HashSet::new();
        for (i, e) in self.responses.exclusions.iter().enumerate() {
            excluded.insert(e.participant_id.as_str());
            match responders.get(e.participant_id.as_str()) {
                None => issues.push(issue(
                    RESPONSES_FILE,
                    format!("exclusions[{i}].participant_id"),
                    format!("unknown participant `{}`", e.participant_id),
                )),
                Some(r) if exclusion_reasons(r, &self.study.attention_checks) != e.reasons => issues.push(issue(
                    RESPONSES_FILE,
                    format!("exclusions[{i}].reasons"),
                    "reasons do not follow from the response",
                )),
                Some(_) => {}
            }
        }
        for (i, r) in self.responses.responses.iter().enumerate() {
            if !excluded.contains(r.participant_id.as_str())
                && !exclusion_reasons(r, &self.study.attention_checks).is_empty()
            {
                issues.push(issue(
                    RESPONSES_FILE,
                    format!("responses[{i}]"),
                    format!("participant `{}` meets an exclusion rule but is kept", r.participant_id),
                ));
            }
        }
        let label_index = self.codes.label_index();
        let mut labeled = HashSet::new();
        for (i, l) in self.responses.labelings.iter().enumerate() {
            if !labeled.insert(l.response_id.as_str()) {
                issues.push(issue(
                    RESPONSES_FILE,
                    format!("labelings[{i}].response_id"),
                    format!("response `{}` labeled twice", l.response_id),
                ));
            }
            if !responders.contains_key(l.response_id.as_str()) {
                issues.push(issue(
                    RESPONSES_FILE,
                    format!("labelings[{i}].response_id"),
                    format!("unknown response `{}`", l.response_id),
                ));
            }
            for (j, label) in l.labels.iter().enumerate() {
                if !label_index.contains_key(label.as_str()) {
                    issues.push(issue(
                        RESPONSES_FILE,
                        format!("labelings[{i}].labels[{j}]"),
                        format!("label `{label}` belongs to no label group"),
                    ));
                }
            }
        }
        issues
    }
}

fn schema_issue(file: &str, expected: &str, found: &str) -> BundleIssue {
    issue(file, "schema", format!("expected `{expected}`, found `{found}`"))
}

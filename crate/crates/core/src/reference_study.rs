//! Deterministic reconstruction of the published curiosity study as a bundle.
//!
//! Proposal counts are derived from the published occurrence-score table
//! (16 proposals per referent). Response labels are synthetic, sized so the
//! rounded response accuracies equal the published accuracy table. Motion,
//! ratings and slider values are seeded synthetic data.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bundle::StudyBundle;
use crate::coding::{
    ClipAssignment, CodeBook, DistinctExpression, ExpressionCategory, LabelGroup, MatchTable, ResponseLabeling, Theme,
};
use crate::elicitation::{
    create_session, Referent, ReferentKind, ReferentsFile, Session, SessionsFile, SESSIONS_SCHEMA,
};
use crate::kinematics::{ChainFile, KinematicChain};
use crate::motion::{ClipsFile, Keyframe, MotionClip, TransitSpeed};
use crate::taxonomy::RawLabel;
use crate::verification::{
    apply_exclusions, AttentionCheck, ExpressionVideo, ResponsesFile, StudyConfig, StudyState, RESPONSES_SCHEMA,
    STUDY_SCHEMA,
};

pub const SEED: u64 = 0x00C0_FFEE;
pub const PARTICIPANTS: usize = 16;
pub const STUDY_ID: &str = "curiosity-verification";
pub const QUOTA: u32 = 20;
const BASE_UNIX_MS: u64 = 1_690_000_000_000;

/// Published occurrence scores in rounded percent: (category, referent, percent).
pub const PUBLISHED_OS: [(&str, &str, u64); 22] = [
    ("E01", "R1", 25),
    ("E01", "R3", 38),
    ("E01", "R4", 19),
    ("E02", "R1", 38),
    ("E02", "R3", 25),
    ("E03", "R1", 38),
    ("E03", "R3", 38),
    ("E04", "R2", 38),
    ("E05", "R2", 44),
    ("E06", "R2", 19),
    ("E07", "R4", 62),
    ("E07", "R5", 38),
    ("E07", "R6", 50),
    ("E08", "R4", 19),
    ("E08", "R5", 12),
    ("E08", "R6", 12),
    ("E09", "R5", 50),
    ("E09", "R6", 38),
    ("E10", "R7", 69),
    ("E11", "R7", 31),
    ("E12", "R8", 56),
    ("E13", "R8", 44),
];

/// Published response accuracies in rounded percent: (category, referent, percent).
pub const PUBLISHED_QRA: [(&str, &str, u64); 21] = [
    ("E01", "R1", 75),
    ("E01", "R3", 75),
    ("E02", "R1", 86),
    ("E02", "R3", 86),
    ("E03", "R1", 94),
    ("E03", "R3", 94),
    ("E04", "R2", 3),
    ("E05", "R2", 7),
    ("E06", "R2", 15),
    ("E07", "R4", 96),
    ("E07", "R5", 96),
    ("E07", "R6", 100),
    ("E08", "R4", 88),
    ("E08", "R5", 88),
    ("E08", "R6", 88),
    ("E09", "R5", 80),
    ("E09", "R6", 80),
    ("E10", "R7", 29),
    ("E11", "R7", 13),
    ("E12", "R8", 73),
    ("E13", "R8", 21),
];

/// The unique `k` with `|percent/100 - k/n| <= 0.005`, if any.
pub fn representable_count(percent: u64, n: u64) -> Option<u64> {
    // |100k - p n| <= 0.5 n, scaled by 2 to stay in integers.
    let candidates: Vec<u64> = (0..=n).filter(|k| (200 * k).abs_diff(2 * percent * n) <= n).collect();
    match candidates.as_slice() {
        [k] => Some(*k),
        _ => None,
    }
}

/// Per-referent proposal counts implied by [`PUBLISHED_OS`].
pub fn published_counts() -> BTreeMap<String, BTreeMap<String, u64>> {
    let mut out: BTreeMap<String, BTreeMap<String, u64>> = BTreeMap::new();
    for (category, referent, percent) in PUBLISHED_OS {
        let k = representable_count(percent, PARTICIPANTS as u64).expect("published cell is representable");
        out.entry(referent.into()).or_default().insert(category.into(), k);
    }
    out
}

fn referents() -> Vec<Referent> {
    let r = |id: &str, kind, prompt: &str| Referent {
        id: id.into(),
        prompt: prompt.into(),
        kind,
    };
    use ReferentKind::*;
    vec![
        r("T1", Tutorial, "Show that you are happy."),
        r("T2", Tutorial, "Show that you are sad."),
        r(
            "R1",
            Target,
            "An object you may not touch sits on the table. Inspect it by sight to learn about it.",
        ),
        r(
            "R2",
            Target,
            "A steady noise comes from one corner of the room. Orient yourself to hear it better.",
        ),
        r(
            "R3",
            Target,
            "An object on the table behaves in a way you cannot explain. Work out how it functions.",
        ),
        r(
            "R4",
            Target,
            "Someone explains a topic to you. Acknowledge that you follow along.",
        ),
        r(
            "R5",
            Target,
            "Someone begins speaking to you. Take an open stance that signals you are listening.",
        ),
        r(
            "R6",
            Target,
            "Someone is speaking with you. Show that you are engaged with them.",
        ),
        r("R7", Control, "Something frightening appears. Retreat from it."),
        r(
            "R8",
            Control,
            "Someone begins speaking to you. Take a closed stance that signals you reject their point.",
        ),
    ]
}

struct CategorySpec {
    id: &'static str,
    description: &'static str,
    variants: usize,
    taxonomy: [&'static str; 6],
    direction: Option<&'static str>,
    keyframes: &'static [([f64; 6], u64, TransitSpeed)],
}

use TransitSpeed::{Fast, Normal, Slow};

const HOME: [f64; 6] = [0.0; 6];

// taxonomy order: speed, complexity, flow, binding, dynamics, focus
const CATEGORIES: [CategorySpec; 13] = [
    CategorySpec {
        id: "E01",
        description: "Approaches the object with the end-effector and sweeps along one axis.",
        variants: 3,
        taxonomy: ["normal", "single", "continuous", "object", "dynamic", "focused"],
        direction: Some("toward the object"),
        keyframes: &[
            (HOME, 300, Normal),
            ([0.0, 25.0, 35.0, -15.0, 0.0, 0.0], 400, Normal),
            ([0.0, 25.0, 35.0, -15.0, 25.0, 0.0], 200, Slow),
            ([0.0, 25.0, 35.0, -15.0, -25.0, 0.0], 400, Slow),
        ],
    },
    CategorySpec {
        id: "E02",
        description: "Approaches the object and circles it while pointing the end-effector at it.",
        variants: 3,
        taxonomy: ["normal", "compound", "continuous", "object", "dynamic", "focused"],
        direction: Some("toward the object"),
        keyframes: &[
            (HOME, 300, Normal),
            ([0.0, 30.0, 30.0, -10.0, 0.0, 0.0], 300, Normal),
            ([20.0, 30.0, 30.0, -10.0, 0.0, 15.0], 200, Slow),
            ([-20.0, 30.0, 30.0, -10.0, 0.0, -15.0], 200, Slow),
            ([0.0, 30.0, 30.0, -10.0, 0.0, 0.0], 500, Normal),
        ],
    },
    CategorySpec {
        id: "E03",
        description: "Circles the object repeatedly, inspecting it from both sides.",
        variants: 3,
        taxonomy: ["normal", "compound", "combined", "object", "dynamic", "focused"],
        direction: Some("toward the object"),
        keyframes: &[
            (HOME, 300, Normal),
            ([0.0, 30.0, 30.0, -10.0, 0.0, 0.0], 300, Normal),
            ([25.0, 30.0, 30.0, -10.0, 0.0, 20.0], 300, Slow),
            ([-25.0, 30.0, 30.0, -10.0, 0.0, -20.0], 300, Slow),
            ([25.0, 30.0, 30.0, -10.0, 0.0, 20.0], 300, Slow),
            ([-25.0, 30.0, 30.0, -10.0, 0.0, -20.0], 300, Slow),
        ],
    },
    CategorySpec {
        id: "E04",
        description: "Leans forward and pans the end-effector left and right across the room.",
        variants: 3,
        taxonomy: [
            "normal",
            "compound",
            "continuous",
            "environment",
            "dynamic",
            "unfocused",
        ],
        direction: Some("toward the sound"),
        keyframes: &[
            (HOME, 300, Normal),
            ([0.0, 20.0, 10.0, 0.0, 0.0, 0.0], 200, Normal),
            ([0.0, 20.0, 10.0, 0.0, 40.0, 0.0], 300, Slow),
            ([0.0, 20.0, 10.0, 0.0, -40.0, 0.0], 300, Slow),
            ([0.0, 20.0, 10.0, 0.0, 0.0, 0.0], 300, Normal),
        ],
    },
    CategorySpec {
        id: "E05",
        description: "Leans forward and holds the end-effector toward one spot.",
        variants: 3,
        taxonomy: ["slow", "single", "discrete", "environment", "static", "focused"],
        direction: None,
        keyframes: &[(HOME, 300, Normal), ([35.0, 20.0, 10.0, 0.0, 0.0, 0.0], 1500, Slow)],
    },
    CategorySpec {
        id: "E06",
        description: "Leans toward one spot several times in a row.",
        variants: 2,
        taxonomy: ["normal", "single", "discrete", "environment", "dynamic", "focused"],
        direction: Some("toward the sound"),
        keyframes: &[
            (HOME, 300, Normal),
            ([35.0, 20.0, 10.0, 0.0, 0.0, 0.0], 300, Normal),
            ([35.0, 0.0, 0.0, 0.0, 0.0, 0.0], 200, Normal),
            ([35.0, 20.0, 10.0, 0.0, 0.0, 0.0], 300, Normal),
        ],
    },
    CategorySpec {
        id: "E07",
        description: "Nods with the end-effector.",
        variants: 3,
        taxonomy: ["fast", "single", "discrete", "person", "static", "focused"],
        direction: None,
        keyframes: &[
            (HOME, 200, Normal),
            ([0.0, 5.0, 5.0, 0.0, 0.0, 0.0], 100, Normal),
            ([0.0, 5.0, 5.0, 0.0, 0.0, 25.0], 100, Fast),
            ([0.0, 5.0, 5.0, 0.0, 0.0, 0.0], 100, Fast),
            ([0.0, 5.0, 5.0, 0.0, 0.0, 25.0], 100, Fast),
            ([0.0, 5.0, 5.0, 0.0, 0.0, 0.0], 300, Fast),
        ],
    },
    CategorySpec {
        id: "E08",
        description: "Nods, shifts the body, then nods again.",
        variants: 3,
        taxonomy: ["normal", "compound", "combined", "person", "static", "focused"],
        direction: None,
        keyframes: &[
            (HOME, 200, Normal),
            ([0.0, 5.0, 5.0, 0.0, 0.0, 25.0], 100, Fast),
            ([0.0, 5.0, 5.0, 0.0, 0.0, 0.0], 200, Fast),
            ([10.0, 15.0, 0.0, 5.0, 0.0, 0.0], 200, Normal),
            ([10.0, 15.0, 0.0, 5.0, 0.0, 25.0], 100, Fast),
            ([10.0, 15.0, 0.0, 5.0, 0.0, 0.0], 300, Fast),
        ],
    },
    CategorySpec {
        id: "E09",
        description: "Signals attention through small body movements.",
        variants: 3,
        taxonomy: ["slow", "compound", "continuous", "person", "dynamic", "unfocused"],
        direction: Some("toward the speaker"),
        keyframes: &[
            (HOME, 300, Normal),
            ([0.0, 15.0, -10.0, 10.0, 0.0, 0.0], 300, Slow),
            ([10.0, 15.0, -10.0, 10.0, 0.0, 0.0], 300, Slow),
            ([-10.0, 15.0, -10.0, 10.0, 0.0, 0.0], 300, Slow),
        ],
    },
    CategorySpec {
        id: "E10",
        description: "Leans the body back while the end-effector stays on the target.",
        variants: 3,
        taxonomy: ["fast", "single", "discrete", "object", "dynamic", "focused"],
        direction: Some("away from the target"),
        keyframes: &[(HOME, 200, Normal), ([0.0, -35.0, -20.0, 20.0, 0.0, 0.0], 2000, Fast)],
    },
    CategorySpec {
        id: "E11",
        description: "Leans toward the target first, then pulls back with the end-effector on it.",
        variants: 2,
        taxonomy: ["fast", "compound", "discrete", "object", "dynamic", "focused"],
        direction: Some("away from the target"),
        keyframes: &[
            (HOME, 200, Normal),
            ([0.0, 20.0, 10.0, 0.0, 0.0, 0.0], 300, Normal),
            ([0.0, -35.0, -20.0, 20.0, 0.0, 0.0], 1500, Fast),
        ],
    },
    CategorySpec {
        id: "E12",
        description: "Turns the end-effector from side to side several times.",
        variants: 3,
        taxonomy: ["fast", "single", "continuous", "person", "static", "unfocused"],
        direction: None,
        keyframes: &[
            (HOME, 200, Normal),
            ([0.0, 0.0, 0.0, 0.0, 30.0, 0.0], 50, Fast),
            ([0.0, 0.0, 0.0, 0.0, -30.0, 0.0], 50, Fast),
            ([0.0, 0.0, 0.0, 0.0, 30.0, 0.0], 50, Fast),
            ([0.0, 0.0, 0.0, 0.0, -30.0, 0.0], 50, Fast),
            ([0.0, 0.0, 0.0, 0.0, 0.0, 0.0], 300, Fast),
        ],
    },
    CategorySpec {
        id: "E13",
        description: "Rotates the body and moves away from the target.",
        variants: 3,
        taxonomy: ["normal", "compound", "continuous", "person", "dynamic", "unfocused"],
        direction: Some("away from the speaker"),
        keyframes: &[
            (HOME, 200, Normal),
            ([60.0, -20.0, 0.0, 0.0, 0.0, 0.0], 200, Normal),
            ([90.0, -30.0, -10.0, 0.0, 0.0, 0.0], 1000, Slow),
        ],
    },
];

fn taxonomy_label(template: &CategorySpec) -> crate::taxonomy::TaxonomyLabel {
    let [speed, complexity, flow, binding, dynamics, focus] = template.taxonomy;
    RawLabel {
        speed: speed.into(),
        complexity: complexity.into(),
        flow: flow.into(),
        binding: binding.into(),
        dynamics: dynamics.into(),
        direction: template.direction.map(Into::into),
        focus: focus.into(),
    }
    .try_into()
    .expect("fixture taxonomy is valid")
}

const LABEL_GROUPS: [(&str, Theme, &[&str]); 12] = [
    (
        "task-evaluation",
        Theme::Exploratory,
        &[
            "assessing task",
            "examining",
            "inspecting",
            "evaluating",
            "checking",
            "analyzing",
            "measuring",
            "searching",
        ],
    ),
    (
        "curiosity-and-interest",
        Theme::Exploratory,
        &[
            "curiosity",
            "interest",
            "exploring",
            "wondering",
            "investigating",
            "fascination",
            "looking closely",
        ],
    ),
    (
        "negative-emotion",
        Theme::Negative,
        &["sadness", "anger", "annoyance", "frustration"],
    ),
    (
        "negative-social-interaction",
        Theme::Negative,
        &["ignoring", "distancing", "avoiding", "turning away", "dismissing"],
    ),
    (
        "negative-consensus",
        Theme::Negative,
        &["disagreement", "unwillingness", "refusal", "denial"],
    ),
    (
        "fearful-reactions",
        Theme::Negative,
        &["fear", "shock", "startled", "flinching", "retreating", "hiding"],
    ),
    (
        "uncertainty-and-confusion",
        Theme::Negative,
        &[
            "confusion",
            "uncertainty",
            "hesitation",
            "doubt",
            "puzzlement",
            "searching for something",
        ],
    ),
    (
        "positive-social-interaction",
        Theme::Positive,
        &[
            "approaching",
            "available",
            "submissive",
            "greeting",
            "bowing",
            "friendliness",
            "welcoming",
            "listening",
        ],
    ),
    (
        "positive-emotion",
        Theme::Positive,
        &["empathy", "happiness", "excitement", "joy"],
    ),
    (
        "positive-consensus",
        Theme::Positive,
        &[
            "acceptance",
            "agreement",
            "confirmation",
            "nodding yes",
            "understanding",
            "approval",
        ],
    ),
    (
        "active-social-interaction",
        Theme::Interactive,
        &["dancing", "laughing", "playing", "celebrating"],
    ),
    (
        "indicative-social-interaction",
        Theme::Interactive,
        &[
            "commanding",
            "taking",
            "pointing",
            "giving",
            "showing direction",
            "requesting",
        ],
    ),
];

/// Groups counted as a match for each referent.
const REFERENT_MATCHES: [(&str, &[&str]); 8] = [
    ("R1", &["task-evaluation", "curiosity-and-interest"]),
    ("R2", &["curiosity-and-interest"]),
    ("R3", &["task-evaluation", "curiosity-and-interest"]),
    ("R4", &["positive-consensus", "positive-social-interaction"]),
    ("R5", &["positive-social-interaction", "positive-consensus"]),
    (
        "R6",
        &[
            "positive-social-interaction",
            "positive-consensus",
            "curiosity-and-interest",
        ],
    ),
    ("R7", &["fearful-reactions"]),
    ("R8", &["negative-consensus", "negative-social-interaction"]),
];

struct LabelPlan {
    category: &'static str,
    total: usize,
    /// Labels drawn from groups matching every referent of the category.
    matching: usize,
    /// Labels from groups matching only some of the category's referents.
    partial: usize,
    matching_groups: &'static [&'static str],
    partial_groups: &'static [&'static str],
    other_groups: &'static [&'static str],
}

const LABEL_PLANS: [LabelPlan; 13] = {
    const EXPLORE: &[&str] = &["task-evaluation", "curiosity-and-interest"];
    const SOCIAL: &[&str] = &["positive-consensus", "positive-social-interaction"];
    const NONE: &[&str] = &[];
    const fn plan(
        category: &'static str,
        matching: usize,
        total: usize,
        matching_groups: &'static [&'static str],
        other_groups: &'static [&'static str],
    ) -> LabelPlan {
        LabelPlan {
            category,
            total,
            matching,
            partial: 0,
            matching_groups,
            partial_groups: NONE,
            other_groups,
        }
    }
    [
        plan(
            "E01",
            18,
            24,
            EXPLORE,
            &["uncertainty-and-confusion", "indicative-social-interaction"],
        ),
        plan(
            "E02",
            24,
            28,
            EXPLORE,
            &["uncertainty-and-confusion", "positive-emotion"],
        ),
        plan("E03", 30, 32, EXPLORE, &["uncertainty-and-confusion"]),
        plan(
            "E04",
            1,
            29,
            &["curiosity-and-interest"],
            &[
                "task-evaluation",
                "uncertainty-and-confusion",
                "negative-social-interaction",
            ],
        ),
        plan(
            "E05",
            2,
            28,
            &["curiosity-and-interest"],
            &[
                "positive-social-interaction",
                "task-evaluation",
                "uncertainty-and-confusion",
            ],
        ),
        plan(
            "E06",
            3,
            20,
            &["curiosity-and-interest"],
            &[
                "positive-consensus",
                "indicative-social-interaction",
                "positive-social-interaction",
            ],
        ),
        LabelPlan {
            category: "E07",
            total: 25,
            matching: 24,
            partial: 1,
            matching_groups: SOCIAL,
            partial_groups: &["curiosity-and-interest"],
            other_groups: NONE,
        },
        plan(
            "E08",
            22,
            25,
            SOCIAL,
            &["uncertainty-and-confusion", "active-social-interaction"],
        ),
        plan(
            "E09",
            20,
            25,
            SOCIAL,
            &["indicative-social-interaction", "positive-emotion"],
        ),
        plan(
            "E10",
            7,
            24,
            &["fearful-reactions"],
            &[
                "negative-social-interaction",
                "uncertainty-and-confusion",
                "negative-emotion",
            ],
        ),
        plan(
            "E11",
            3,
            23,
            &["fearful-reactions"],
            &[
                "uncertainty-and-confusion",
                "negative-social-interaction",
                "task-evaluation",
            ],
        ),
        plan(
            "E12",
            19,
            26,
            &["negative-consensus", "negative-social-interaction"],
            &["negative-emotion", "uncertainty-and-confusion"],
        ),
        plan(
            "E13",
            5,
            24,
            &["negative-social-interaction", "negative-consensus"],
            &[
                "fearful-reactions",
                "task-evaluation",
                "negative-emotion",
                "active-social-interaction",
            ],
        ),
    ]
};

fn group_labels(group: &str) -> &'static [&'static str] {
    LABEL_GROUPS
        .iter()
        .find(|(id, _, _)| *id == group)
        .map(|(_, _, labels)| *labels)
        .expect("known group")
}

/// Picks `n` labels cycling through the groups and through each group's labels.
fn draw_labels(groups: &[&str], n: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
    (0..n)
        .map(|i| {
            let labels = group_labels(groups[i % groups.len()]);
            labels[rng.random_range(0..labels.len())].to_owned()
        })
        .collect()
}

fn jitter(value: f64, rng: &mut ChaCha8Rng, amplitude: f64) -> f64 {
    ((value + rng.random_range(-amplitude..=amplitude)) * 2.0).round() / 2.0
}

fn clip_keyframes(template: &CategorySpec, variant: usize, rng: &mut ChaCha8Rng) -> Vec<Keyframe> {
    let scale = 1.0 + 0.15 * variant as f64;
    template.keyframes
        .iter()
        .enumerate()
        .map(|(i, (angles, hold, speed))| {
            let angles: Vec<f64> = if i == 0 {
                angles.to_vec()
            } else {
                angles.iter().map(|a| jitter(a * scale, rng, 4.0)).collect()
            };
            let hold_ms = hold + 100 * rng.random_range(0..4);
            Keyframe::new(angles, hold_ms, *speed)
        })
        .collect()
}

fn tutorial_keyframes(referent: &str) -> Vec<Keyframe> {
    let lift = if referent == "T1" { 20.0 } else { -25.0 };
    vec![
        Keyframe::new(HOME.to_vec(), 200, Normal),
        Keyframe::new(vec![0.0, lift, lift / 2.0, 0.0, 0.0, 0.0], 500, Normal),
    ]
}

struct Elicitation {
    sessions: SessionsFile,
    clips: Vec<MotionClip>,
    assignments: Vec<ClipAssignment>,
    distinct: Vec<DistinctExpression>,
}

fn elicitation(chain: &KinematicChain, all_referents: &[Referent], rng: &mut ChaCha8Rng) -> Elicitation {
    let tutorials: Vec<Referent> = all_referents
        .iter()
        .filter(|r| r.kind == ReferentKind::Tutorial)
        .cloned()
        .collect();
    let studied: Vec<Referent> = all_referents
        .iter()
        .filter(|r| r.kind != ReferentKind::Tutorial)
        .cloned()
        .collect();
    let participants: Vec<String> = (1..=PARTICIPANTS).map(|i| format!("P{i:02}")).collect();

    // (participant, referent) -> category, spreading each referent's counts over shuffled participants
    let mut category_of: BTreeMap<(String, String), &'static str> = BTreeMap::new();
    for (referent, per_category) in published_counts() {
        let mut order = participants.clone();
        order.shuffle(rng);
        let mut slots = order.into_iter();
        for (category, k) in per_category {
            let template = CATEGORIES.iter().find(|c| c.id == category).expect("known category");
            for pid in slots.by_ref().take(k as usize) {
                category_of.insert((pid, referent.clone()), template.id);
            }
        }
        assert!(slots.next().is_none(), "counts for {referent} cover all participants");
    }

    // clip id -> distinct id, round-robin over each category's clips in id order
    let mut by_category: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    for ((pid, referent), category) in &category_of {
        by_category
            .entry(category)
            .or_default()
            .push(format!("{pid}-{referent}"));
    }
    let mut distinct_of: BTreeMap<String, (usize, String)> = BTreeMap::new();
    let mut distinct = Vec::new();
    let mut next_distinct = 1;
    for template in &CATEGORIES {
        let ids: Vec<String> = (0..template.variants)
            .map(|v| format!("D{:02}", next_distinct + v))
            .collect();
        for (v, id) in ids.iter().enumerate() {
            distinct.push(DistinctExpression {
                id: id.clone(),
                description: format!("{} Variant {}.", template.description, v + 1),
            });
        }
        next_distinct += template.variants;
        let mut clips = by_category.remove(template.id).unwrap_or_default();
        clips.sort();
        for (i, clip) in clips.into_iter().enumerate() {
            distinct_of.insert(clip, (i % template.variants, ids[i % template.variants].clone()));
        }
    }

    let mut sessions = Vec::new();
    let mut clips = Vec::new();
    for (index, pid) in participants.iter().enumerate() {
        let plan = create_session(pid, index, &studied, &tutorials, Some(SEED)).expect("valid referents");
        let mut session = Session::new(plan, SEED ^ index as u64);
        while let Some(referent) = session.current_referent().map(str::to_owned) {
            let keyframes = match category_of.get(&(pid.clone(), referent.clone())) {
                Some(category) => {
                    let template = CATEGORIES.iter().find(|c| c.id == *category).expect("known category");
                    let (variant, _) = &distinct_of[&format!("{pid}-{referent}")];
                    clip_keyframes(template, *variant, rng)
                }
                None => tutorial_keyframes(&referent),
            };
            for kf in keyframes {
                session
                    .save_keyframe(chain, kf)
                    .expect("fixture keyframe within limits");
            }
            // Participants often tried an extra pose and took it back.
            if rng.random_bool(0.3) {
                let extra = Keyframe::new(vec![0.0, 10.0, 10.0, 0.0, 0.0, 0.0], 100, Normal);
                session.save_keyframe(chain, extra).expect("within limits");
                session.undo().expect("clip has several keyframes");
            }
            if let Some(clip) = session.commit().expect("draft present") {
                clips.push(clip);
            }
        }
        while session.current_rating_clip().is_some() {
            let ratings: Vec<i64> = (0..5).map(|_| rng.random_range(0..=100)).collect();
            session.submit_ratings(&ratings, "").expect("valid ratings");
        }
        sessions.push(session.to_file());
    }
    clips.sort_by(|a, b| a.id().cmp(b.id()));
    let assignments = clips
        .iter()
        .map(|c| ClipAssignment {
            clip_id: c.id().to_owned(),
            distinct_id: distinct_of[c.id()].1.clone(),
        })
        .collect();
    Elicitation {
        sessions: SessionsFile {
            schema: SESSIONS_SCHEMA.to_owned(),
            sessions,
        },
        clips,
        assignments,
        distinct,
    }
}

fn codebook(distinct: Vec<DistinctExpression>, assignments: Vec<ClipAssignment>) -> CodeBook {
    let mut next = 1;
    let categories = CATEGORIES
        .iter()
        .map(|template| {
            let members: BTreeSet<String> = (next..next + template.variants).map(|i| format!("D{i:02}")).collect();
            next += template.variants;
            ExpressionCategory {
                id: template.id.to_owned(),
                description: template.description.to_owned(),
                member_distinct_ids: members,
                origin_referents: PUBLISHED_OS
                    .iter()
                    .filter(|(c, _, _)| *c == template.id)
                    .map(|(_, r, _)| (*r).to_owned())
                    .collect(),
                taxonomy: taxonomy_label(template),
            }
        })
        .collect();
    let label_groups = LABEL_GROUPS
        .iter()
        .map(|(id, theme, labels)| LabelGroup {
            group_id: (*id).to_owned(),
            theme: *theme,
            member_labels: labels.iter().map(|l| (*l).to_owned()).collect(),
        })
        .collect();
    let mut match_table = MatchTable::default();
    for (category, referent, _) in PUBLISHED_QRA {
        let groups = REFERENT_MATCHES
            .iter()
            .find(|(r, _)| *r == referent)
            .map(|(_, g)| *g)
            .expect("known referent");
        match_table.insert(category, referent, groups.iter().copied());
    }
    CodeBook {
        schema: crate::coding::CODES_SCHEMA.to_owned(),
        distinct_expressions: distinct,
        categories,
        assignments,
        label_groups,
        match_table,
    }
}

fn study_config() -> StudyConfig {
    StudyConfig {
        schema: STUDY_SCHEMA.to_owned(),
        study_id: STUDY_ID.to_owned(),
        expressions: CATEGORIES
            .iter()
            .map(|c| ExpressionVideo {
                category_id: c.id.to_owned(),
                video_uri: format!("https://media.example.org/expressforge/{}.mp4", c.id),
            })
            .collect(),
        quota_per_expression: QUOTA,
        battery: StudyConfig::default_battery(),
        attention_checks: vec![AttentionCheck {
            position: 5,
            prompt: "Please move this slider all the way to the left.".to_owned(),
            min: 0,
            max: 10,
        }],
    }
}

/// Number of participants recruited: kept plus the attention and movement-only exclusions.
pub const RECRUITED: usize = 289;
pub const ATTENTION_FAILURES: usize = 3;
pub const MOVEMENT_ONLY: usize = 26;

fn verification(config: StudyConfig, rng: &mut ChaCha8Rng) -> ResponsesFile {
    let mut state = StudyState::new(config).expect("valid study");
    let mut flags: Vec<u8> = std::iter::repeat_n(1u8, ATTENTION_FAILURES)
        .chain(std::iter::repeat_n(2, MOVEMENT_ONLY))
        .chain(std::iter::repeat_n(0, RECRUITED - ATTENTION_FAILURES - MOVEMENT_ONLY))
        .collect();
    // keep the last recruits clean so every replacement slot is refilled
    flags[..RECRUITED - 13].shuffle(rng);

    let battery_len = state.config().battery.len();
    let mut plans: BTreeMap<&str, (Vec<Vec<String>>, usize)> = LABEL_PLANS
        .iter()
        .map(|plan| {
            let mut labels = draw_labels(plan.matching_groups, plan.matching, rng);
            labels.extend(draw_labels(plan.partial_groups, plan.partial, rng));
            labels.extend(draw_labels(
                plan.other_groups,
                plan.total - plan.matching - plan.partial,
                rng,
            ));
            labels.shuffle(rng);
            // 20 responses; the first `total - 20` carry a second label
            let quota = QUOTA as usize;
            let extra = plan.total - quota;
            let mut per_response = Vec::with_capacity(quota);
            let mut it = labels.into_iter();
            for i in 0..quota {
                let n = if i < extra { 2 } else { 1 };
                per_response.push(it.by_ref().take(n).collect());
            }
            (plan.category, (per_response, 0))
        })
        .collect();

    let mut labelings = Vec::new();
    let mut clock = BASE_UNIX_MS;
    for (i, flag) in flags.iter().enumerate() {
        let pid = format!("V{:03}", i + 1);
        clock += 60_000 + rng.random_range(0..120_000);
        let assignment = state.assign(&pid, clock).expect("quota not exhausted");
        let category = assignment.category_id.clone();
        let start = clock;
        let watches = rng.random_range(1..=6);
        let mut t = start;
        for w in 0..watches {
            t += 9_000 + rng.random_range(0..4_000);
            state.record_video_completed(&pid, t).expect("assigned");
            if w == 0 {
                let labels: Vec<String> = if *flag == 0 {
                    let (per_response, next) = plans.get_mut(category.as_str()).expect("planned category");
                    let labels = per_response[*next].clone();
                    *next += 1;
                    labels
                } else {
                    Vec::new()
                };
                let text = if *flag == 2 || labels.is_empty() {
                    "The arm moves forward and then turns to the side.".to_owned()
                } else {
                    format!("It seems to be showing {}.", labels.join(" and "))
                };
                t += 30_000 + rng.random_range(0..60_000);
                state.submit_interpretation(&pid, &text, t).expect("video watched");
                if !labels.is_empty() {
                    labelings.push(ResponseLabeling {
                        response_id: pid.clone(),
                        labels,
                    });
                }
            }
        }
        let vas: Vec<i64> = (0..battery_len).map(|_| rng.random_range(0..=100)).collect();
        let attention = if *flag == 1 {
            rng.random_range(40..=95)
        } else {
            rng.random_range(0..=8)
        };
        let untouched: Vec<bool> = vas.iter().map(|v| *v == 50).collect();
        t += 60_000 + rng.random_range(0..90_000);
        state
            .submit_vas(&pid, &vas, &[attention], &untouched, t)
            .expect("interpretation sealed");
        if *flag == 2 {
            state.flag_movement_only(&pid, true).expect("submitted");
        }
        if *flag != 0 {
            state.release_slot(&pid).expect("submitted");
        }
        clock = t;
    }
    let responses = state.responses().to_vec();
    let outcome = apply_exclusions(&responses, &state.config().attention_checks);
    ResponsesFile {
        schema: RESPONSES_SCHEMA.to_owned(),
        study_id: STUDY_ID.to_owned(),
        exclusions: outcome.exclusions(),
        responses,
        labelings,
    }
}

/// Builds the reference bundle. Output is identical on every call.
pub fn build() -> StudyBundle {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let chain = KinematicChain::default_six_dof();
    let referents = referents();
    let elicited = elicitation(&chain, &referents, &mut rng);
    let codes = codebook(elicited.distinct, elicited.assignments);
    let responses = verification(study_config(), &mut rng);
    StudyBundle {
        clips: ClipsFile::from_clips(&chain.name, &elicited.clips),
        chain: ChainFile::from(chain),
        referents: ReferentsFile::new(referents),
        sessions: elicited.sessions,
        codes,
        study: study_config(),
        responses,
    }
}

/// The reference design (chain, referents, codebook, study) with no recorded
/// sessions, clips, assignments or responses.
pub fn blank() -> StudyBundle {
    let mut bundle = build();
    bundle.sessions.sessions.clear();
    bundle.clips.clips.clear();
    bundle.codes.assignments.clear();
    bundle.responses.responses.clear();
    bundle.responses.exclusions.clear();
    bundle.responses.labelings.clear();
    bundle
}

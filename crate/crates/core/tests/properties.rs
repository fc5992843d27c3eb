use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use expressforge_core::bundle::canonical_json;
use expressforge_core::coding::{
    count_matches, merge_counts, proposal_counts, CodeBook, LabelGroup, MatchTable, ResponseLabeling, Theme,
};
use expressforge_core::elicitation::balanced_latin_square;
use expressforge_core::kinematics::{JointVector, KinematicChain};
use expressforge_core::metrics::stats::{kruskal_wallis, mann_whitney_u};
use expressforge_core::metrics::{
    agreement_rate, agreement_score, consensus_distinct_ratio, max_consensus, occurrence_score, qra, GroupSizes,
};
use expressforge_core::motion::{ClipHeader, ClipsFile, Keyframe, MotionClip, SpeedMap, TransitSpeed};
use expressforge_core::reference_study;
use expressforge_core::taxonomy::{distribution, Dimension, RawLabel, TaxonomyLabel};
use expressforge_core::verification::{apply_exclusions, AttentionCheck, StudyConfig, StudyState};
use proptest::prelude::*;

fn study() -> StudyConfig {
    static CONFIG: OnceLock<StudyConfig> = OnceLock::new();
    CONFIG.get_or_init(|| reference_study::build().study).clone()
}

fn chain() -> KinematicChain {
    KinematicChain::default_six_dof()
}

fn angles(range: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-range..range, 6)
}

fn speed() -> impl Strategy<Value = TransitSpeed> {
    prop_oneof![
        Just(TransitSpeed::Slow),
        Just(TransitSpeed::Normal),
        Just(TransitSpeed::Fast)
    ]
}

fn keyframe() -> impl Strategy<Value = Keyframe> {
    (angles(160.0), 0u64..1000, speed()).prop_map(|(a, hold, s)| Keyframe::new(a, hold, s))
}

fn clip(max_len: usize) -> impl Strategy<Value = MotionClip> {
    prop::collection::vec(keyframe(), 1..=max_len).prop_map(|kfs| {
        let chain = chain();
        let header = ClipHeader {
            id: "P01-R1".into(),
            chain_name: chain.name.clone(),
            created_by: "P01".into(),
            provenance: "R1".into(),
        };
        let mut iter = kfs.into_iter();
        let mut clip = header.start(&chain, iter.next().unwrap()).unwrap();
        for kf in iter {
            clip = clip.append_keyframe(&chain, kf).unwrap();
        }
        clip
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn fk_is_deterministic_and_orthonormal(q in angles(165.0)) {
        let chain = chain();
        let q = JointVector(q);
        let a = chain.forward_kinematics(&q).unwrap();
        let b = chain.forward_kinematics(&q).unwrap();
        prop_assert!(a.position_mm.iter().zip(b.position_mm.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
        prop_assert!(a.orientation.iter().zip(b.orientation.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
        let r = a.orientation;
        let identity = r.transpose() * r;
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((identity[(i, j)] - want).abs() <= 1e-6);
            }
        }
        prop_assert!((r.determinant() - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn clamp_is_idempotent_and_in_limits(q in angles(400.0)) {
        let chain = chain();
        let once = chain.clamp_to_limits(&JointVector(q)).unwrap();
        let twice = chain.clamp_to_limits(&once).unwrap();
        prop_assert_eq!(&once, &twice);
        prop_assert!(chain.check_limits(&once).is_ok());
    }

    #[test]
    fn edits_do_not_mutate_input(c in clip(6), kf in keyframe(), s in speed()) {
        let chain = chain();
        let before = c.clone();
        let appended = c.append_keyframe(&chain, kf).unwrap();
        prop_assert_eq!(&c, &before);
        prop_assert_eq!(appended.undo_last_keyframe().unwrap(), c.clone());
        let _ = c.set_segment_speed(c.len() - 1, s);
        prop_assert_eq!(&c, &before);
    }

    #[test]
    fn duration_grows_under_append(c in clip(6), kf in keyframe()) {
        let speeds = SpeedMap::default();
        let longer = c.append_keyframe(&chain(), kf).unwrap();
        prop_assert!(longer.duration_ms(&speeds) >= c.duration_ms(&speeds));
    }

    #[test]
    fn sample_is_continuous(c in clip(5), frac in 0.0f64..1.0) {
        let speeds = SpeedMap::default();
        let t = frac * c.duration_ms(&speeds);
        let a = c.sample(&speeds, t);
        let b = c.sample(&speeds, t + 1.0);
        prop_assert!(a.max_abs_delta(&b) <= speeds.fastest() * 0.002);
    }

    #[test]
    fn sample_is_constant_during_holds(c in clip(5), frac in 0.0f64..1.0) {
        let speeds = SpeedMap::default();
        let mut start = 0.0;
        for (i, kf) in c.keyframes().iter().enumerate() {
            start += c.travel_ms(&speeds, i);
            let t = start + frac * kf.hold_ms as f64;
            if kf.hold_ms > 0 && t < start + kf.hold_ms as f64 {
                prop_assert_eq!(c.sample(&speeds, t), kf.angles_deg.clone());
            }
            start += kf.hold_ms as f64;
        }
    }

    #[test]
    fn frame_stream_replay_is_bitwise_identical(c in clip(5)) {
        let speeds = SpeedMap::default();
        let file = ClipsFile::from_clips(&chain().name, std::slice::from_ref(&c));
        let text = canonical_json(&file);
        let back: ClipsFile = serde_json::from_str(&text).unwrap();
        let replay = back.into_clips().unwrap().remove(0);
        let bits = |clip: &MotionClip| -> Vec<u64> {
            clip.frame_stream(&speeds, 50.0)
                .unwrap()
                .iter()
                .flat_map(|f| std::iter::once(f.t_ms).chain(f.angles_deg.angles_deg().iter().copied()))
                .map(f64::to_bits)
                .collect()
        };
        prop_assert_eq!(bits(&c), bits(&replay));
    }

    #[test]
    fn latin_square_rows_are_permutations(n in 1usize..12, seed in any::<Option<u64>>()) {
        let rows = balanced_latin_square(n, seed).unwrap();
        prop_assert_eq!(rows.len(), if n % 2 == 0 { n } else { 2 * n });
        for row in &rows {
            let set: BTreeSet<_> = row.iter().copied().collect();
            prop_assert_eq!(set, (0..n).collect::<BTreeSet<_>>());
        }
    }
}

fn raw_label() -> impl Strategy<Value = TaxonomyLabel> {
    let pick = |options: &'static [&'static str]| prop::sample::select(options);
    (
        pick(&["slow", "normal", "fast"]),
        pick(&["single", "compound"]),
        pick(&["continuous", "discrete", "combined"]),
        pick(&["environment", "object", "person"]),
        prop::option::of(pick(&["toward the object", "away from the target"])),
        pick(&["focused", "unfocused"]),
    )
        .prop_map(|(speed, complexity, flow, binding, direction, focus)| {
            RawLabel {
                speed: speed.into(),
                complexity: complexity.into(),
                flow: flow.into(),
                binding: binding.into(),
                dynamics: if direction.is_some() { "dynamic" } else { "static" }.into(),
                direction: direction.map(Into::into),
                focus: focus.into(),
            }
            .try_into()
            .unwrap()
        })
}

fn counts_map() -> impl Strategy<Value = BTreeMap<String, u64>> {
    prop::collection::btree_map("E[0-9]{2}", 1u64..50, 1..10)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn distribution_is_scale_invariant(labels in prop::collection::vec(raw_label(), 1..20)) {
        let doubled: Vec<_> = labels.iter().chain(&labels).cloned().collect();
        let a = distribution(&labels).unwrap();
        let b = distribution(&doubled).unwrap();
        prop_assert_eq!(&a, &b);
        for (dimension, shares) in &a {
            for category in shares.keys() {
                prop_assert!(Dimension::categories(*dimension).contains(category));
            }
        }
    }

    #[test]
    fn occurrence_scores_sum_to_one(counts in counts_map()) {
        let sum: f64 = occurrence_score(&counts).unwrap().values().sum();
        prop_assert!((sum - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn qra_and_complement_sum_to_one(plus in 0u64..500, minus in 0u64..500) {
        prop_assume!(plus + minus > 0);
        let total = qra(plus, minus).unwrap() + qra(minus, plus).unwrap();
        prop_assert!((total - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn agreement_chain_and_order_invariance(mut sizes in prop::collection::vec(1u64..12, 1..8)) {
        prop_assume!(sizes.iter().sum::<u64>() >= 2);
        let g = GroupSizes::new(sizes.clone()).unwrap();
        let (a, ar, mc) = (agreement_score(&g), agreement_rate(&g).unwrap(), max_consensus(&g));
        prop_assert!(ar <= a + 1e-12 && a <= mc + 1e-12 && mc <= 1.0);
        sizes.reverse();
        let r = GroupSizes::new(sizes).unwrap();
        prop_assert!((agreement_score(&r) - a).abs() <= 1e-12);
        prop_assert_eq!(agreement_rate(&r).unwrap(), ar);
        prop_assert_eq!(max_consensus(&r), mc);
        prop_assert_eq!(consensus_distinct_ratio(&r, 2), consensus_distinct_ratio(&g, 2));
    }

    #[test]
    fn rank_tests_ignore_input_order(
        a in prop::collection::vec(0u8..40, 1..12),
        b in prop::collection::vec(0u8..40, 1..12),
        c in prop::collection::vec(0u8..40, 1..12),
    ) {
        let f = |v: &[u8]| v.iter().map(|&x| f64::from(x)).collect::<Vec<_>>();
        let (a, b, c) = (f(&a), f(&b), f(&c));
        let mut a_rev = a.clone();
        a_rev.reverse();
        let forward = mann_whitney_u(&a, &b).unwrap();
        let shuffled = mann_whitney_u(&a_rev, &b).unwrap();
        prop_assert_eq!(forward.p_two_sided, shuffled.p_two_sided);
        let swapped = mann_whitney_u(&b, &a).unwrap();
        prop_assert!((forward.p_two_sided - swapped.p_two_sided).abs() <= 1e-12);
        if a.len() + b.len() + c.len() >= 3 {
            let one = kruskal_wallis(&[a.clone(), b.clone(), c.clone()]);
            let two = kruskal_wallis(&[c, a_rev, b]);
            if let (Ok(one), Ok(two)) = (one, two) {
                prop_assert!((one.h - two.h).abs() <= 1e-9);
                prop_assert!((one.p - two.p).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn count_matches_ignores_labeling_order(picks in prop::collection::vec(prop::collection::vec(0usize..9, 1..4), 1..15)) {
        let groups: Vec<LabelGroup> = (0..3)
            .map(|g| LabelGroup {
                group_id: format!("g{g}"),
                theme: Theme::Negative,
                member_labels: (0..3).map(|l| format!("l{}", g * 3 + l)).collect(),
            })
            .collect();
        let mut table = MatchTable::default();
        table.insert("E", "R", ["g0", "g2"]);
        let mut labelings: Vec<ResponseLabeling> = picks
            .iter()
            .enumerate()
            .map(|(i, p)| ResponseLabeling {
                response_id: format!("r{i}"),
                labels: p.iter().map(|l| format!("l{l}")).collect(),
            })
            .collect();
        let before = count_matches("E", "R", &labelings, &groups, &table).unwrap();
        labelings.reverse();
        prop_assert_eq!(count_matches("E", "R", &labelings, &groups, &table).unwrap(), before);
    }

    #[test]
    fn merging_counts_preserves_totals(counts in prop::collection::btree_map("R[1-8]", counts_map(), 1..8)) {
        let merged = merge_counts(&counts, "E01", "E02", "E01+E02");
        for (referent, per) in &counts {
            prop_assert_eq!(per.values().sum::<u64>(), merged[referent].values().sum::<u64>());
            let pair = per.get("E01").copied().unwrap_or(0) + per.get("E02").copied().unwrap_or(0);
            prop_assert_eq!(merged[referent].get("E01+E02").copied().unwrap_or(0), pair);
        }
    }

    #[test]
    fn reverse_scoring_is_an_involution(raw in prop::collection::vec(0u8..=100, 10)) {
        let config = study();
        let once = config.reported_vas(&raw);
        prop_assert_eq!(config.reported_vas(&once), raw);
    }

    #[test]
    fn assignment_stays_balanced(k in 1usize..=260) {
        let mut state = StudyState::new(study()).unwrap();
        for i in 0..k {
            state.assign(&format!("X{i}"), i as u64).unwrap();
            let counts = state.counts();
            let (min, max) = (counts.values().min().unwrap(), counts.values().max().unwrap());
            prop_assert!(max - min <= 1);
        }
    }

    #[test]
    fn exclusions_partition_responses(failures in prop::collection::vec((0u8..=100, any::<bool>()), 1..40)) {
        let config = study();
        let mut state = StudyState::new(config.clone()).unwrap();
        for (i, (attention, movement)) in failures.iter().enumerate() {
            let pid = format!("Y{i}");
            state.assign(&pid, 1).unwrap();
            state.record_video_completed(&pid, 2).unwrap();
            state.submit_interpretation(&pid, "looking", 3).unwrap();
            state.submit_vas(&pid, &[40; 10], &[i64::from(*attention)], &[], 4).unwrap();
            state.flag_movement_only(&pid, *movement).unwrap();
        }
        let checks: Vec<AttentionCheck> = config.attention_checks.clone();
        let outcome = apply_exclusions(state.responses(), &checks);
        let mut ids: Vec<&str> = outcome.kept.iter().map(|r| r.participant_id.as_str()).collect();
        ids.extend(outcome.excluded.iter().map(|(r, _)| r.participant_id.as_str()));
        ids.sort_unstable();
        let mut input: Vec<&str> = state.responses().iter().map(|r| r.participant_id.as_str()).collect();
        input.sort_unstable();
        prop_assert_eq!(ids, input);
        for r in state.responses() {
            let t = &r.timeline;
            prop_assert!(t.first_video_completed.seq < t.interpretation_sealed.seq);
            prop_assert!(t.interpretation_sealed.seq < t.vas_submitted.seq);
        }
    }
}

#[test]
fn proposal_counts_conserve_clip_totals() {
    let bundle = reference_study::build();
    let clips = bundle.motion_clips().unwrap();
    let counts = proposal_counts(&bundle.codes, &clips).unwrap();
    let mut per_referent: BTreeMap<&str, u64> = BTreeMap::new();
    for c in &clips {
        *per_referent.entry(c.referent_id().unwrap()).or_default() += 1;
    }
    for (referent, total) in per_referent {
        assert_eq!(counts[referent].values().sum::<u64>(), total);
    }
}

#[test]
fn report_is_a_pure_function_of_the_bundle() {
    let bundle = reference_study::build();
    let a = expressforge_core::report::study_report(&bundle).unwrap();
    let b = expressforge_core::report::study_report(&bundle).unwrap();
    assert_eq!(a.to_markdown(), b.to_markdown());
}

#[test]
fn merged_codebook_counts_match_merged_counts() {
    let bundle = reference_study::build();
    let clips = bundle.motion_clips().unwrap();
    let counts = proposal_counts(&bundle.codes, &clips).unwrap();
    let merged_book: CodeBook = bundle.codes.merge_categories("E07", "E08", "E07+E08").unwrap();
    let direct = proposal_counts(&merged_book, &clips).unwrap();
    assert_eq!(direct, merge_counts(&counts, "E07", "E08", "E07+E08"));
}

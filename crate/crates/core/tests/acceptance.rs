//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits non-zero
//! when a criterion fails that is not listed in `KNOWN_FAILURES`.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use expressforge_core::bundle::StudyBundle;
use expressforge_core::coding::{count_matches, proposal_counts, LabelGroup, MatchTable, ResponseLabeling, Theme};
use expressforge_core::elicitation::{balanced_latin_square, create_session, Referent, ReferentKind};
use expressforge_core::kinematics::{BaseFrame, JointSpec, JointVector, KinematicChain};
use expressforge_core::metrics::stats::{kruskal_wallis, mann_whitney_u_with, MwuMethod};
use expressforge_core::metrics::{
    agreement_rate, agreement_score, consensus_distinct_ratio, max_consensus, occurrence_ratios, occurrence_score, qra,
    GroupSizes,
};
use expressforge_core::motion::{ClipHeader, ClipsFile, Keyframe, MotionClip, SpeedMap, TransitSpeed};
use expressforge_core::reference_study;
use expressforge_core::report::os_table;
use expressforge_core::verification::{SharedStudy, StudyState};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Criteria that fail for a documented reason; they still print FAIL.
const KNOWN_FAILURES: &[&str] = &["mwu-normal-approximation", "kruskal-wallis-permutation"];

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/curiosity-study")
}

// Published occurrence table, transcribed independently of the library constants.
const PUBLISHED_OS: &[(&str, &str, u64)] = &[
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

/// All k in 0..=16 with |p/100 - k/16| <= 0.005, i.e. |16p - 100k| <= 8.
fn k_candidates(p: u64) -> Vec<u64> {
    (0..=16).filter(|k| (16 * p).abs_diff(100 * k) <= 8).collect()
}

fn os_table_reproduction() -> Outcome {
    let start = Instant::now();
    let bundle = StudyBundle::load(&fixture_dir()).map_err(|e| e.to_string())?;
    let clips = bundle.motion_clips().map_err(|e| e.to_string())?;
    let counts = proposal_counts(&bundle.codes, &clips).map_err(|e| e.to_string())?;
    let categories: Vec<String> = bundle.codes.categories.iter().map(|c| c.id.clone()).collect();
    let table = os_table(&counts, &categories).map_err(|e| e.to_string())?;
    let csv = table.to_csv();
    let elapsed = start.elapsed();
    for (category, referent, percent) in PUBLISHED_OS {
        let k = counts
            .get(*referent)
            .and_then(|m| m.get(*category))
            .copied()
            .unwrap_or(0);
        ensure(k_candidates(*percent) == [k], || {
            format!("{category}/{referent}: count {k}")
        })?;
        let cell = table
            .cell(category, referent)
            .ok_or_else(|| format!("{category}/{referent} missing"))?;
        ensure(cell.percent == *percent, || {
            format!("{category}/{referent}: {} != {percent}", cell.percent)
        })?;
        ensure(csv.contains(&format!("{referent}={percent}")), || {
            format!("csv lacks {referent}={percent}")
        })?;
    }
    ensure(table.entries().count() == PUBLISHED_OS.len(), || "extra cells".into())?;
    ensure(elapsed < Duration::from_secs(1), || format!("took {elapsed:?}"))?;
    Ok(format!("{} cells in {elapsed:?}", PUBLISHED_OS.len()))
}

fn k16_audit() -> Outcome {
    let examples = [
        (25, 4),
        (38, 6),
        (69, 11),
        (12, 2),
        (19, 3),
        (44, 7),
        (50, 8),
        (56, 9),
        (62, 10),
    ];
    for (p, k) in examples {
        ensure(k_candidates(p) == [k], || format!("{p} -> {:?}", k_candidates(p)))?;
    }
    for (category, referent, p) in PUBLISHED_OS {
        let candidates = k_candidates(*p);
        ensure(candidates.len() == 1, || {
            format!("{category}/{referent}={p}: {candidates:?}")
        })?;
        ensure(
            reference_study::representable_count(*p, 16) == Some(candidates[0]),
            || format!("library disagrees at {p}"),
        )?;
    }
    Ok(format!("{} percentages each admit exactly one k", PUBLISHED_OS.len()))
}

fn random_counts(rng: &mut ChaCha8Rng) -> BTreeMap<String, u64> {
    let n = rng.random_range(1..=10);
    let max = if rng.random_bool(0.5) { 8 } else { 200 };
    (0..n)
        .map(|i| (format!("E{i:02}"), rng.random_range(1..=max)))
        .collect()
}

fn os_conservation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut exact_checked = 0;
    for _ in 0..1000 {
        let counts = random_counts(&mut rng);
        let total: u64 = counts.values().sum();
        let scores = occurrence_score(&counts).map_err(|e| e.to_string())?;
        let sum: f64 = scores.values().sum();
        ensure((sum - 1.0).abs() <= 1e-12, || format!("sum {sum} for {counts:?}"))?;
        if total <= 64 {
            exact_checked += 1;
            let ratios = occurrence_ratios(&counts).map_err(|e| e.to_string())?;
            for (c, &n) in &counts {
                let r = ratios[c];
                // r == n / total  <=>  numer * total == n * denom
                ensure(r.numer() * total == n * r.denom(), || {
                    format!("{c}: {r} != {n}/{total}")
                })?;
            }
        }
    }
    Ok(format!("1000 maps, {exact_checked} checked exactly"))
}

fn qra_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for round in 0..1000 {
        let group_count = rng.random_range(1..=6);
        let groups: Vec<LabelGroup> = (0..group_count)
            .map(|g| LabelGroup {
                group_id: format!("g{g}"),
                theme: Theme::Positive,
                member_labels: (0..rng.random_range(1..=4)).map(|l| format!("g{g}-l{l}")).collect(),
            })
            .collect();
        let matching: Vec<String> = groups
            .iter()
            .filter(|_| rng.random_bool(0.5))
            .map(|g| g.group_id.clone())
            .collect();
        let mut table = MatchTable::default();
        table.insert("E", "R", matching.iter().cloned());
        let all: Vec<&String> = groups.iter().flat_map(|g| &g.member_labels).collect();
        let labelings: Vec<ResponseLabeling> = (0..rng.random_range(1..=12))
            .map(|i| ResponseLabeling {
                response_id: format!("r{i}"),
                labels: (0..rng.random_range(1..=3))
                    .map(|_| all[rng.random_range(0..all.len())].clone())
                    .collect(),
            })
            .collect();
        // oracle: linear scan of groups for each label
        let (mut plus, mut total) = (0u64, 0u64);
        for label in labelings.iter().flat_map(|l| &l.labels) {
            total += 1;
            let owner = groups.iter().find(|g| g.member_labels.contains(label)).unwrap();
            if matching.contains(&owner.group_id) {
                plus += 1;
            }
        }
        let (p, m) = count_matches("E", "R", &labelings, &groups, &table).map_err(|e| e.to_string())?;
        ensure((p, p + m) == (plus, total), || {
            format!("round {round}: ({p},{m}) vs ({plus},{total})")
        })?;
        let value = qra(p, m).map_err(|e| e.to_string())?;
        ensure(value == plus as f64 / total as f64, || {
            format!("round {round}: qra {value}")
        })?;
    }
    ensure(qra(25, 0) == Ok(1.0), || "all-match case is not 1.0".into())?;
    Ok("1000 labelings; all-match yields 1.0".into())
}

/// Every multiset of positive parts summing to `n`, parts non-increasing.
fn partitions(n: u64) -> Vec<Vec<u64>> {
    fn go(rest: u64, max: u64, prefix: &mut Vec<u64>, out: &mut Vec<Vec<u64>>) {
        if rest == 0 {
            out.push(prefix.clone());
            return;
        }
        for part in (1..=rest.min(max)).rev() {
            prefix.push(part);
            go(rest - part, part, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    go(n, n, &mut Vec::new(), &mut out);
    out
}

/// Expands group sizes into a proposal list where each entry is its group index.
fn proposals(sizes: &[u64]) -> Vec<usize> {
    sizes
        .iter()
        .enumerate()
        .flat_map(|(g, &s)| std::iter::repeat_n(g, s as usize))
        .collect()
}

fn oracle_a(sizes: &[u64]) -> f64 {
    let p = proposals(sizes);
    let n = p.len() as f64;
    (0..sizes.len())
        .map(|g| {
            let share = p.iter().filter(|&&x| x == g).count() as f64 / n;
            share * share
        })
        .sum()
}

fn oracle_ar(sizes: &[u64]) -> f64 {
    let p = proposals(sizes);
    let mut agreeing = 0u64;
    let mut pairs = 0u64;
    for i in 0..p.len() {
        for j in 0..p.len() {
            if i != j {
                pairs += 1;
                agreeing += u64::from(p[i] == p[j]);
            }
        }
    }
    agreeing as f64 / pairs as f64
}

fn oracle_mc(sizes: &[u64]) -> f64 {
    let p = proposals(sizes);
    let best = (0..sizes.len())
        .map(|g| p.iter().filter(|&&x| x == g).count())
        .max()
        .unwrap();
    best as f64 / p.len() as f64
}

fn oracle_cdr(sizes: &[u64]) -> f64 {
    sizes.iter().filter(|&&s| s >= 2).count() as f64 / sizes.len() as f64
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12
}

fn agreement_brute_force() -> Outcome {
    let mut checked = 0;
    for total in 2..=8 {
        for partition in partitions(total) {
            let mut orderings = vec![partition.clone()];
            let mut rev = partition.clone();
            rev.reverse();
            orderings.push(rev);
            for r in 1..partition.len() {
                let mut rotated = partition.clone();
                rotated.rotate_left(r);
                orderings.push(rotated);
            }
            let (a0, ar0, mc0, cdr0) = (
                oracle_a(&partition),
                oracle_ar(&partition),
                oracle_mc(&partition),
                oracle_cdr(&partition),
            );
            for sizes in orderings {
                let g = GroupSizes::new(sizes.clone()).map_err(|e| e.to_string())?;
                let a = agreement_score(&g);
                let ar = agreement_rate(&g).map_err(|e| e.to_string())?;
                let mc = max_consensus(&g);
                let cdr = consensus_distinct_ratio(&g, 2);
                ensure(
                    close(a, a0) && close(ar, ar0) && close(mc, mc0) && close(cdr, cdr0),
                    || format!("{sizes:?}: ({a},{ar},{mc},{cdr}) vs ({a0},{ar0},{mc0},{cdr0})"),
                )?;
                ensure(ar <= a + 1e-12 && a <= mc + 1e-12, || {
                    format!("{sizes:?}: chain broken")
                })?;
                checked += 1;
            }
        }
    }
    Ok(format!("{checked} orderings of all partitions of 2..=8"))
}

fn diversity_penalty() -> Outcome {
    let mut splits = 0;
    for total in 2..=8 {
        for partition in partitions(total) {
            let base = GroupSizes::new(partition.clone()).map_err(|e| e.to_string())?;
            let as_map = |sizes: &[u64]| -> BTreeMap<String, u64> {
                sizes
                    .iter()
                    .enumerate()
                    .map(|(i, &s)| (format!("g{i:02}"), s))
                    .collect()
            };
            let base_os = occurrence_score(&as_map(&partition)).map_err(|e| e.to_string())?;
            for (gi, &size) in partition.iter().enumerate().filter(|(_, s)| **s >= 2) {
                for left in 1..size {
                    let mut split = partition.clone();
                    split[gi] = left;
                    split.push(size - left);
                    let g = GroupSizes::new(split.clone()).map_err(|e| e.to_string())?;
                    ensure(agreement_score(&g) < agreement_score(&base), || {
                        format!("A {partition:?}->{split:?}")
                    })?;
                    let (ar_split, ar_base) = (agreement_rate(&g).unwrap(), agreement_rate(&base).unwrap());
                    ensure(ar_split < ar_base, || format!("AR {partition:?}->{split:?}"))?;
                    let os = occurrence_score(&as_map(&split)).map_err(|e| e.to_string())?;
                    for (i, _) in partition.iter().enumerate().filter(|(i, _)| *i != gi) {
                        let key = format!("g{i:02}");
                        ensure(os[&key] == base_os[&key], || format!("OS of {key} moved in {split:?}"))?;
                    }
                    splits += 1;
                }
            }
        }
    }
    Ok(format!("{splits} binary splits"))
}

/// U of `a` against `b`: pairs with a > b, ties counting one half.
fn oracle_u(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .flat_map(|x| b.iter().map(move |y| (x, y)))
        .map(|(x, y)| {
            if x > y {
                1.0
            } else if x == y {
                0.5
            } else {
                0.0
            }
        })
        .sum()
}

/// Two-sided p by enumerating every way to split the pooled values into groups of
/// size `m` and `n`: twice the smaller tail, capped at 1.
fn enumerated_p(pooled: &[f64], m: usize, u_obs: f64) -> f64 {
    let n_total = pooled.len();
    let (mut le, mut ge, mut all) = (0u64, 0u64, 0u64);
    for mask in 0u32..(1 << n_total) {
        if mask.count_ones() as usize != m {
            continue;
        }
        let (a, b): (Vec<f64>, Vec<f64>) = {
            let mut a = Vec::new();
            let mut b = Vec::new();
            for (i, &v) in pooled.iter().enumerate() {
                if mask & (1 << i) != 0 {
                    a.push(v)
                } else {
                    b.push(v)
                }
            }
            (a, b)
        };
        let u = oracle_u(&a, &b);
        all += 1;
        le += u64::from(u <= u_obs);
        ge += u64::from(u >= u_obs);
    }
    (2.0 * le.min(ge) as f64 / all as f64).min(1.0)
}

fn mwu_exact() -> Outcome {
    // tie-free grid of pooled values
    let grid: Vec<f64> = (0..10).map(|i| 0.75 + 1.5 * i as f64).collect();
    let mut cases = 0;
    for m in 1..10 {
        for n in 1..=(10 - m) {
            let pooled = &grid[..m + n];
            for mask in 0u32..(1 << (m + n)) {
                if mask.count_ones() as usize != m {
                    continue;
                }
                let a: Vec<f64> = (0..m + n).filter(|i| mask & (1 << i) != 0).map(|i| pooled[i]).collect();
                let b: Vec<f64> = (0..m + n).filter(|i| mask & (1 << i) == 0).map(|i| pooled[i]).collect();
                let got = mann_whitney_u_with(&a, &b, MwuMethod::Exact).map_err(|e| e.to_string())?;
                let u = oracle_u(&a, &b);
                ensure(got.u == u, || format!("({m},{n}) U {} vs {u}", got.u))?;
                let p = enumerated_p(pooled, m, u);
                ensure((got.p_two_sided - p).abs() <= 1e-12, || {
                    format!("({m},{n}) a={a:?}: p {} vs {p}", got.p_two_sided)
                })?;
                cases += 1;
            }
        }
    }
    Ok(format!("{cases} splits over all size pairs with m+n <= 10"))
}

/// Tie-free samples of sizes `m` and `n` whose U equals `u`.
fn samples_with_u(m: usize, n: usize, u: usize) -> (Vec<f64>, Vec<f64>) {
    let b: Vec<f64> = (0..n).map(|j| 2.0 * j as f64).collect();
    let mut rest = u;
    let a = (0..m)
        .map(|i| {
            let c = rest.min(n);
            rest -= c;
            // above exactly the first c values of b
            2.0 * c as f64 - 1.0 + 0.01 * i as f64
        })
        .collect();
    (a, b)
}

fn mwu_normal_approximation() -> Outcome {
    let mut worst = Vec::new();
    let mut failing = Vec::new();
    for m in 8..=12 {
        for n in 8..=12 {
            let mut max_err: f64 = 0.0;
            for u in 0..=m * n {
                let (a, b) = samples_with_u(m, n, u);
                let exact = mann_whitney_u_with(&a, &b, MwuMethod::Exact).map_err(|e| e.to_string())?;
                ensure(exact.u == u as f64, || {
                    format!("construction gave U={} for {u}", exact.u)
                })?;
                let approx = mann_whitney_u_with(&a, &b, MwuMethod::Normal).map_err(|e| e.to_string())?;
                max_err = max_err.max((exact.p_two_sided - approx.p_two_sided).abs());
            }
            worst.push(((m, n), max_err));
            if max_err > 0.01 {
                failing.push(format!("({m},{n}) max |dp|={max_err:.4}"));
            }
        }
    }
    let overall = worst.iter().map(|(_, e)| *e).fold(0.0, f64::max);
    if failing.is_empty() {
        Ok(format!("25 size pairs, max |dp|={overall:.4}"))
    } else {
        Err(format!("tolerance 0.01 exceeded at {}", failing.join(", ")))
    }
}

/// H without tie correction; inputs here are tie-free.
fn oracle_h(groups: &[Vec<f64>]) -> f64 {
    let pooled: Vec<f64> = groups.iter().flatten().copied().collect();
    let n = pooled.len() as f64;
    let rank = |v: f64| 1.0 + pooled.iter().filter(|&&x| x < v).count() as f64;
    let sum: f64 = groups
        .iter()
        .map(|g| {
            let r: f64 = g.iter().map(|&v| rank(v)).sum();
            r * r / g.len() as f64
        })
        .sum();
    12.0 / (n * (n + 1.0)) * sum - 3.0 * (n + 1.0)
}

fn kw_permutation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    let mut failing = Vec::new();
    for dataset in 0..10 {
        let groups: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..5).map(|_| rng.random_range(0.0..100.0)).collect())
            .collect();
        let h_obs = oracle_h(&groups);
        let mut pooled: Vec<f64> = groups.iter().flatten().copied().collect();
        let mut extreme = 0;
        for _ in 0..10_000 {
            pooled.shuffle(&mut rng);
            let perm: Vec<Vec<f64>> = pooled.chunks(5).map(<[f64]>::to_vec).collect();
            if oracle_h(&perm) >= h_obs - 1e-9 {
                extreme += 1;
            }
        }
        let oracle_p = extreme as f64 / 10_000.0;
        let got = kruskal_wallis(&groups).map_err(|e| e.to_string())?;
        ensure((got.h - h_obs).abs() < 1e-9, || {
            format!("dataset {dataset}: H {} vs {h_obs}", got.h)
        })?;
        let err = (got.p - oracle_p).abs();
        worst = worst.max(err);
        if err > 0.02 {
            failing.push(format!(
                "dataset {dataset} (H={:.2}): chi-square p {:.4} vs permutation {oracle_p:.4}",
                got.h, got.p
            ));
        }
    }
    if failing.is_empty() {
        Ok(format!("10 datasets, max |dp|={worst:.4}"))
    } else {
        Err(format!(
            "tolerance 0.02 exceeded in {}/10: {}",
            failing.len(),
            failing.join("; ")
        ))
    }
}

fn check_square(rows: &[Vec<usize>], n: usize, per_cell: usize) -> Result<(), String> {
    let mut position = vec![vec![0usize; n]; n];
    let mut adjacency = vec![vec![0usize; n]; n];
    for row in rows {
        let mut seen = vec![false; n];
        for (pos, &item) in row.iter().enumerate() {
            ensure(!seen[item], || format!("n={n}: repeat in row {row:?}"))?;
            seen[item] = true;
            position[item][pos] += 1;
        }
        for pair in row.windows(2) {
            adjacency[pair[0]][pair[1]] += 1;
        }
    }
    ensure(position.iter().flatten().all(|&c| c == per_cell), || {
        format!("n={n}: positions {position:?}")
    })?;
    for (i, row) in adjacency.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            let want = if i == j { 0 } else { per_cell };
            ensure(c == want, || format!("n={n}: adjacency {i}->{j} occurs {c} times"))?;
        }
    }
    Ok(())
}

fn latin_square() -> Outcome {
    for seed in [None, Some(7), Some(99)] {
        for n in [2, 4, 6, 8] {
            let rows = balanced_latin_square(n, seed).map_err(|e| e.to_string())?;
            ensure(rows.len() == n, || format!("n={n}: {} rows", rows.len()))?;
            check_square(&rows, n, 1)?;
        }
        for n in [3, 5] {
            let rows = balanced_latin_square(n, seed).map_err(|e| e.to_string())?;
            ensure(rows.len() == 2 * n, || format!("n={n}: {} rows", rows.len()))?;
            check_square(&rows, n, 2)?;
        }
    }
    let referents: Vec<Referent> = (1..=8)
        .map(|i| Referent {
            id: format!("R{i}"),
            prompt: String::new(),
            kind: ReferentKind::Target,
        })
        .collect();
    let tutorials = vec![Referent {
        id: "T1".into(),
        prompt: String::new(),
        kind: ReferentKind::Tutorial,
    }];
    for first in [0, 5] {
        let mut matrix = vec![vec![0; 8]; 8];
        for index in first..first + 8 {
            let plan = create_session(&format!("P{index}"), index, &referents, &tutorials, Some(11))
                .map_err(|e| e.to_string())?;
            for (pos, id) in plan.ordered_referents[plan.tutorial_count..].iter().enumerate() {
                let r: usize = id[1..].parse().unwrap();
                matrix[r - 1][pos] += 1;
            }
        }
        ensure(matrix.iter().flatten().all(|&c| c == 1), || {
            format!("position matrix {matrix:?}")
        })?;
    }
    Ok("even and doubled odd squares balanced; 8-participant plans all-ones".into())
}

fn test_chain(joints: usize) -> KinematicChain {
    let mut chain = KinematicChain::default_six_dof();
    chain.joints.truncate(joints);
    chain.name = format!("test-{joints}");
    chain
}

fn random_keyframe(rng: &mut ChaCha8Rng, joints: usize) -> Keyframe {
    let speeds = [TransitSpeed::Slow, TransitSpeed::Normal, TransitSpeed::Fast];
    let mut kf = Keyframe::new(
        (0..joints)
            .map(|_| rng.random_range(-120.0..120.0))
            .collect::<Vec<f64>>(),
        rng.random_range(0..800),
        speeds[rng.random_range(0..3)],
    );
    if rng.random_bool(0.15) {
        kf.segment_time_override_ms = Some(rng.random_range(0..1500));
    }
    kf
}

fn random_clip(rng: &mut ChaCha8Rng, chain: &KinematicChain, len: usize) -> MotionClip {
    let joints = chain.joints.len();
    let header = ClipHeader {
        id: format!("c{}", rng.random::<u32>()),
        chain_name: chain.name.clone(),
        created_by: "acceptance".into(),
        provenance: "freeform".into(),
    };
    let mut clip = header.start(chain, random_keyframe(rng, joints)).unwrap();
    for _ in 1..len {
        clip = clip.append_keyframe(chain, random_keyframe(rng, joints)).unwrap();
    }
    clip
}

/// Piecewise-linear reference: travel into keyframe i, then hold it.
fn lerp_oracle(keyframes: &[Keyframe], speeds: &SpeedMap, t: f64) -> Vec<f64> {
    let rate = |s: TransitSpeed| match s {
        TransitSpeed::Slow => speeds.slow_deg_per_s,
        TransitSpeed::Normal => speeds.normal_deg_per_s,
        TransitSpeed::Fast => speeds.fast_deg_per_s,
    };
    let mut clock = 0.0;
    for i in 0..keyframes.len() {
        let target = keyframes[i].angles_deg.angles_deg();
        if i > 0 {
            let from = keyframes[i - 1].angles_deg.angles_deg();
            let travel = match keyframes[i].segment_time_override_ms {
                Some(ms) => ms as f64,
                None => {
                    let delta = from.iter().zip(target).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                    delta / rate(keyframes[i].transit_speed) * 1000.0
                }
            };
            if t < clock + travel {
                let s = (t - clock) / travel;
                return from.iter().zip(target).map(|(a, b)| a + (b - a) * s).collect();
            }
            clock += travel;
        }
        clock += keyframes[i].hold_ms as f64;
        if t < clock {
            return target.to_vec();
        }
    }
    keyframes.last().unwrap().angles_deg.angles_deg().to_vec()
}

fn motion_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let chain = test_chain(6);
    let speeds = SpeedMap::default();
    for _ in 0..20 {
        let clip = random_clip(&mut rng, &chain, 5);
        let first = clip.frame_stream(&speeds, 50.0).map_err(|e| e.to_string())?;
        let file = ClipsFile::from_clips(&chain.name, std::slice::from_ref(&clip));
        let reloaded: ClipsFile = serde_json::from_str(&serde_json::to_string(&file).unwrap()).unwrap();
        let replay = reloaded.into_clips().map_err(|e| e.to_string())?.remove(0);
        let second = replay.frame_stream(&speeds, 50.0).map_err(|e| e.to_string())?;
        let bits = |frames: &[expressforge_core::motion::Frame]| -> Vec<u64> {
            frames
                .iter()
                .flat_map(|f| std::iter::once(f.t_ms).chain(f.angles_deg.angles_deg().iter().copied()))
                .map(f64::to_bits)
                .collect()
        };
        ensure(bits(&first) == bits(&second), || {
            format!("{} replay differs", clip.id())
        })?;
        let duration = clip.duration_ms(&speeds);
        for _ in 0..1000 {
            let t = rng.random_range(0.0..duration * 1.1 + 1.0);
            let got = clip.sample(&speeds, t);
            let want = lerp_oracle(clip.keyframes(), &speeds, t);
            let err = got
                .angles_deg()
                .iter()
                .zip(&want)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            ensure(err <= 1e-9, || format!("{} at t={t}: error {err}", clip.id()))?;
        }
    }
    for i in 0..500 {
        let len = rng.random_range(1..=8);
        let clip = random_clip(&mut rng, &chain, len);
        let kf = random_keyframe(&mut rng, 6);
        let round = clip
            .append_keyframe(&chain, kf)
            .and_then(|c| c.undo_last_keyframe())
            .map_err(|e| e.to_string())?;
        ensure(round == clip, || format!("clip {i}: append then undo changed it"))?;
    }
    Ok("replay bit-stable; 20x1000 samples within 1e-9; 500 append/undo".into())
}

type M4 = [[f64; 4]; 4];

fn mul(a: &M4, b: &M4) -> M4 {
    let mut out = [[0.0; 4]; 4];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = (0..4).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

fn translation(v: [f64; 3]) -> M4 {
    [
        [1.0, 0.0, 0.0, v[0]],
        [0.0, 1.0, 0.0, v[1]],
        [0.0, 0.0, 1.0, v[2]],
        [0.0, 0.0, 0.0, 1.0],
    ]
}

/// Rodrigues rotation about a unit axis.
fn rotation(axis: [f64; 3], deg: f64) -> M4 {
    let norm = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
    let [x, y, z] = axis.map(|c| c / norm);
    let (s, c) = deg.to_radians().sin_cos();
    let t = 1.0 - c;
    [
        [t * x * x + c, t * x * y - s * z, t * x * z + s * y, 0.0],
        [t * x * y + s * z, t * y * y + c, t * y * z - s * x, 0.0],
        [t * x * z - s * y, t * y * z + s * x, t * z * z + c, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ]
}

fn fk_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let unit = |rng: &mut ChaCha8Rng| loop {
        let v: [f64; 3] = [0; 3].map(|_| rng.random_range(-1.0..1.0));
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 0.1 {
            break v.map(|c| c / n);
        }
    };
    for config in 0..1000 {
        let joints = rng.random_range(1..=3);
        let chain = KinematicChain {
            name: "oracle".into(),
            base_frame: BaseFrame {
                position_mm: [0; 3].map(|_| rng.random_range(-100.0..100.0)),
                rotation_rpy_deg: [0; 3].map(|_| rng.random_range(-180.0..180.0)),
            },
            joints: (0..joints)
                .map(|j| JointSpec {
                    name: format!("j{j}"),
                    link_offset_mm: [0; 3].map(|_| rng.random_range(-200.0..200.0)),
                    rotation_axis: unit(&mut rng),
                    min_deg: -180.0,
                    max_deg: 180.0,
                })
                .collect(),
        };
        let q: Vec<f64> = (0..joints).map(|_| rng.random_range(-180.0..180.0)).collect();
        let [r, p, y] = chain.base_frame.rotation_rpy_deg;
        let mut t = mul(
            &translation(chain.base_frame.position_mm),
            &mul(
                &rotation([0.0, 0.0, 1.0], y),
                &mul(&rotation([0.0, 1.0, 0.0], p), &rotation([1.0, 0.0, 0.0], r)),
            ),
        );
        for (joint, &angle) in chain.joints.iter().zip(&q) {
            t = mul(
                &t,
                &mul(
                    &translation(joint.link_offset_mm),
                    &rotation(joint.rotation_axis, angle),
                ),
            );
        }
        let pose = chain.forward_kinematics(&JointVector(q)).map_err(|e| e.to_string())?;
        for (i, row) in t.iter().take(3).enumerate() {
            ensure((pose.position_mm[i] - row[3]).abs() <= 1e-9, || {
                format!("config {config}: position[{i}] {} vs {}", pose.position_mm[i], row[3])
            })?;
            for (j, &expected) in row.iter().take(3).enumerate() {
                ensure((pose.orientation[(i, j)] - expected).abs() <= 1e-9, || {
                    format!("config {config}: R[{i}][{j}]")
                })?;
            }
        }
    }
    Ok("1000 configurations within 1e-9".into())
}

fn gating_and_quota() -> Outcome {
    let config = reference_study::build().study;
    ensure(
        config.quota_per_expression == 20 && config.expressions.len() == 13,
        || "unexpected config".into(),
    )?;
    let shared = SharedStudy::new(StudyState::new(config.clone()).map_err(|e| e.to_string())?);
    std::thread::scope(|s| {
        for i in 0..100 {
            let shared = &shared;
            s.spawn(move || shared.assign(&format!("C{i:03}"), 1_000 + i as u64).unwrap());
        }
    });
    let counts = shared.snapshot().counts().clone();
    let (min, max) = (counts.values().min().unwrap(), counts.values().max().unwrap());
    ensure(counts.values().sum::<u32>() == 100, || format!("{counts:?}"))?;
    ensure(max - min <= 1 && *max <= 20, || format!("unbalanced {counts:?}"))?;
    // drive past capacity: 300 more concurrent requests for 160 free slots
    let accepted: usize = std::thread::scope(|s| {
        let handles: Vec<_> = (0..300)
            .map(|i| {
                let shared = &shared;
                s.spawn(move || shared.assign(&format!("D{i:03}"), 5_000).is_ok())
            })
            .collect();
        handles.into_iter().map(|h| usize::from(h.join().unwrap())).sum()
    });
    let counts = shared.snapshot().counts().clone();
    ensure(accepted == 160, || format!("{accepted} accepted past quota"))?;
    ensure(counts.values().all(|&c| c == 20), || format!("{counts:?}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut attempts = 0;
    for ordering in 0..500 {
        let mut state = StudyState::new(config.clone()).map_err(|e| e.to_string())?;
        let mut sealed = false;
        let len = rng.random_range(3..=10);
        for step in 0..len {
            let pid = "A";
            let ms = step as u64;
            match rng.random_range(0..4) {
                0 => {
                    let _ = state.assign(pid, ms);
                }
                1 => {
                    let _ = state.record_video_completed(pid, ms);
                }
                2 => {
                    if state.submit_interpretation(pid, "it looks around", ms).is_ok() {
                        sealed = true;
                    }
                }
                _ => {
                    attempts += 1;
                    let vas = vec![50; config.battery.len()];
                    let accepted = state.submit_vas(pid, &vas, &[3], &[], ms).is_ok();
                    ensure(!accepted || sealed, || {
                        format!("ordering {ordering}: VAS accepted before interpretation")
                    })?;
                }
            }
        }
    }
    Ok(format!(
        "balance ok under 100 threads; 500 orderings, {attempts} VAS attempts gated"
    ))
}

fn bundle_round_trip() -> Outcome {
    let dir = fixture_dir();
    let first = StudyBundle::load(&dir).map_err(|e| e.to_string())?;
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    first.save(tmp.path()).map_err(|e| e.to_string())?;
    let second = StudyBundle::load(tmp.path()).map_err(|e| e.to_string())?;
    let out = tempfile::tempdir().map_err(|e| e.to_string())?;
    second.save(out.path()).map_err(|e| e.to_string())?;
    let mut files = 0;
    for entry in std::fs::read_dir(&dir).map_err(|e| e.to_string())? {
        let path = entry.map_err(|e| e.to_string())?.path();
        let name = path.file_name().unwrap();
        let original = std::fs::read(&path).map_err(|e| e.to_string())?;
        let exported = std::fs::read(out.path().join(name)).map_err(|e| format!("{name:?}: {e}"))?;
        ensure(original == exported, || format!("{name:?} differs"))?;
        files += 1;
    }
    ensure(std::fs::read_dir(out.path()).unwrap().count() == files, || {
        "file sets differ".into()
    })?;
    Ok(format!("{files} files byte-identical"))
}

fn main() {
    let stats_start = Instant::now();
    let mut results: Vec<(&str, Outcome)> = vec![
        ("os-table-reproduction", os_table_reproduction()),
        ("k16-representability-audit", k16_audit()),
        ("os-conservation", os_conservation()),
        ("qra-oracle", qra_oracle()),
        ("agreement-brute-force", agreement_brute_force()),
        ("diversity-penalty", diversity_penalty()),
    ];
    let stats = Instant::now();
    results.push(("mwu-exact-enumeration", mwu_exact()));
    results.push(("mwu-normal-approximation", mwu_normal_approximation()));
    results.push(("kruskal-wallis-permutation", kw_permutation()));
    let stats_elapsed = stats.elapsed();
    results.push((
        "statistics-runtime",
        if stats_elapsed < Duration::from_secs(60) {
            Ok(format!("{stats_elapsed:?}"))
        } else {
            Err(format!("{stats_elapsed:?} exceeds 60 s"))
        },
    ));
    results.push(("latin-square", latin_square()));
    results.push(("motion-determinism-and-oracles", motion_oracles()));
    results.push(("fk-oracle", fk_oracle()));
    results.push(("gating-and-quota-concurrency", gating_and_quota()));
    results.push(("bundle-round-trip", bundle_round_trip()));

    let mut unexpected = 0;
    for (name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) if KNOWN_FAILURES.contains(name) => println!("FAIL {name}: {detail} (known)"),
            Err(detail) => {
                unexpected += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    let passed = results.iter().filter(|(_, o)| o.is_ok()).count();
    println!(
        "acceptance: {passed}/{} passed in {:?}, {unexpected} unexpected failure(s)",
        results.len(),
        stats_start.elapsed()
    );
    if unexpected > 0 {
        std::process::exit(1);
    }
}

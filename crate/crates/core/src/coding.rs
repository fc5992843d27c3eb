//! Coding ledger for both study phases.
//!
//! Phase one maps recorded clips to distinct expressions and distinct
//! expressions to categories. Phase two maps free-text interpretations to
//! labels, labels to groups, and declares which groups count as a match for a
//! (category, referent) pair. The arithmetic over those tables lives here; the
//! coding decisions themselves are made by researchers.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::motion::MotionClip;
use crate::taxonomy::TaxonomyLabel;

pub const CODES_SCHEMA: &str = "codes/1";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodingError {
    #[error("clip `{0}` has no coded expression")]
    UnassignedClip(String),
    #[error("distinct expression `{0}` belongs to no category")]
    UncategorizedDistinct(String),
    #[error("label `{0}` belongs to no label group")]
    UnresolvedLabel(String),
    #[error("unknown category `{0}`")]
    UnknownCategory(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Theme {
    Exploratory,
    Negative,
    Positive,
    Interactive,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistinctExpression {
    pub id: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpressionCategory {
    pub id: String,
    pub description: String,
    pub member_distinct_ids: BTreeSet<String>,
    pub origin_referents: BTreeSet<String>,
    pub taxonomy: TaxonomyLabel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClipAssignment {
    pub clip_id: String,
    pub distinct_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelGroup {
    pub group_id: String,
    pub theme: Theme,
    pub member_labels: BTreeSet<String>,
}

/// Coded labels for one interpretation. Several labels are allowed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResponseLabeling {
    pub response_id: String,
    pub labels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatchEntry {
    pub category: String,
    pub referent: String,
    pub groups: BTreeSet<String>,
}

/// Label groups counted as matching, keyed by (category, referent).
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(from = "Vec<MatchEntry>", into = "Vec<MatchEntry>")]
pub struct MatchTable {
    entries: BTreeMap<(String, String), BTreeSet<String>>,
}

impl MatchTable {
    pub fn insert(&mut self, category: &str, referent: &str, groups: impl IntoIterator<Item = impl Into<String>>) {
        self.entries
            .entry((category.to_owned(), referent.to_owned()))
            .or_default()
            .extend(groups.into_iter().map(Into::into));
    }

    pub fn matching_groups(&self, category: &str, referent: &str) -> Option<&BTreeSet<String>> {
        self.entries.get(&(category.to_owned(), referent.to_owned()))
    }

    pub fn keys(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.keys().map(|(c, r)| (c.as_str(), r.as_str()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl From<Vec<MatchEntry>> for MatchTable {
    fn from(entries: Vec<MatchEntry>) -> Self {
        let mut table = MatchTable::default();
        for e in entries {
            table.insert(&e.category, &e.referent, e.groups);
        }
        table
    }
}

impl From<MatchTable> for Vec<MatchEntry> {
    fn from(table: MatchTable) -> Self {
        table
            .entries
            .into_iter()
            .map(|((category, referent), groups)| MatchEntry {
                category,
                referent,
                groups,
            })
            .collect()
    }
}

/// On-disk `codes.json` document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodeBook {
    pub schema: String,
    pub distinct_expressions: Vec<DistinctExpression>,
    pub categories: Vec<ExpressionCategory>,
    pub assignments: Vec<ClipAssignment>,
    pub label_groups: Vec<LabelGroup>,
    pub match_table: MatchTable,
}

/// referent → category → number of proposals.
pub type ProposalCounts = BTreeMap<String, BTreeMap<String, u64>>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CodeBookIssue {
    pub path: String,
    pub message: String,
}

impl CodeBook {
    pub fn empty() -> Self {
        Self {
            schema: CODES_SCHEMA.to_owned(),
            distinct_expressions: Vec::new(),
            categories: Vec::new(),
            assignments: Vec::new(),
            label_groups: Vec::new(),
            match_table: MatchTable::default(),
        }
    }

    pub fn category(&self, id: &str) -> Option<&ExpressionCategory> {
        self.categories.iter().find(|c| c.id == id)
    }

    /// distinct id → category id
    fn distinct_to_category(&self) -> HashMap<&str, &str> {
        self.categories
            .iter()
            .flat_map(|c| c.member_distinct_ids.iter().map(move |d| (d.as_str(), c.id.as_str())))
            .collect()
    }

    /// clip id → category id, for every assigned clip.
    pub fn clip_categories(&self) -> Result<HashMap<&str, &str>, CodingError> {
        let by_distinct = self.distinct_to_category();
        self.assignments
            .iter()
            .map(|a| {
                by_distinct
                    .get(a.distinct_id.as_str())
                    .map(|&c| (a.clip_id.as_str(), c))
                    .ok_or_else(|| CodingError::UncategorizedDistinct(a.distinct_id.clone()))
            })
            .collect()
    }

    /// label text → group id
    pub fn label_index(&self) -> HashMap<&str, &str> {
        self.label_groups
            .iter()
            .flat_map(|g| g.member_labels.iter().map(move |l| (l.as_str(), g.group_id.as_str())))
            .collect()
    }

    /// Structural checks that need nothing outside the codebook. `clip_ids`,
    /// when given, are the clips assignments may refer to.
    pub fn validate(&self, clip_ids: Option<&HashSet<&str>>) -> Vec<CodeBookIssue> {
        let mut issues = Vec::new();
        let mut push = |path: String, message: String| issues.push(CodeBookIssue { path, message });

        let mut distinct_ids = HashSet::new();
        for (i, d) in self.distinct_expressions.iter().enumerate() {
            if !distinct_ids.insert(d.id.as_str()) {
                push(
                    format!("distinct_expressions[{i}].id"),
                    format!("duplicate id `{}`", d.id),
                );
            }
        }

        let mut owner: HashMap<&str, &str> = HashMap::new();
        let mut category_ids = HashSet::new();
        for (i, c) in self.categories.iter().enumerate() {
            if !category_ids.insert(c.id.as_str()) {
                push(format!("categories[{i}].id"), format!("duplicate id `{}`", c.id));
            }
            if c.member_distinct_ids.is_empty() {
                push(format!("categories[{i}].member_distinct_ids"), "no members".into());
            }
            if c.origin_referents.is_empty() {
                push(
                    format!("categories[{i}].origin_referents"),
                    "no origin referents".into(),
                );
            }
            for d in &c.member_distinct_ids {
                if !distinct_ids.contains(d.as_str()) {
                    push(
                        format!("categories[{i}].member_distinct_ids"),
                        format!("unknown distinct expression `{d}`"),
                    );
                }
                if let Some(prev) = owner.insert(d.as_str(), c.id.as_str()) {
                    push(
                        format!("categories[{i}].member_distinct_ids"),
                        format!("`{d}` already belongs to `{prev}`"),
                    );
                }
            }
        }

        let mut assigned = HashSet::new();
        for (i, a) in self.assignments.iter().enumerate() {
            if !distinct_ids.contains(a.distinct_id.as_str()) {
                push(
                    format!("assignments[{i}].distinct_id"),
                    format!("unknown distinct expression `{}`", a.distinct_id),
                );
            } else if !owner.contains_key(a.distinct_id.as_str()) {
                push(
                    format!("assignments[{i}].distinct_id"),
                    format!("`{}` belongs to no category", a.distinct_id),
                );
            }
            if !assigned.insert(a.clip_id.as_str()) {
                push(
                    format!("assignments[{i}].clip_id"),
                    format!("clip `{}` assigned twice", a.clip_id),
                );
            }
            if let Some(clips) = clip_ids {
                if !clips.contains(a.clip_id.as_str()) {
                    push(
                        format!("assignments[{i}].clip_id"),
                        format!("unknown clip `{}`", a.clip_id),
                    );
                }
            }
        }

        let mut group_ids = HashSet::new();
        let mut label_owner: HashMap<&str, &str> = HashMap::new();
        for (i, g) in self.label_groups.iter().enumerate() {
            if !group_ids.insert(g.group_id.as_str()) {
                push(
                    format!("label_groups[{i}].group_id"),
                    format!("duplicate id `{}`", g.group_id),
                );
            }
            for l in &g.member_labels {
                if let Some(prev) = label_owner.insert(l.as_str(), g.group_id.as_str()) {
                    push(
                        format!("label_groups[{i}].member_labels"),
                        format!("label `{l}` already belongs to `{prev}`"),
                    );
                }
            }
        }

        for (i, (category, referent)) in self.match_table.keys().enumerate() {
            if !category_ids.contains(category) {
                push(
                    format!("match_table[{i}].category"),
                    format!("unknown category `{category}`"),
                );
            }
            for g in self
                .match_table
                .matching_groups(category, referent)
                .into_iter()
                .flatten()
            {
                if !group_ids.contains(g.as_str()) {
                    push(format!("match_table[{i}].groups"), format!("unknown label group `{g}`"));
                }
            }
        }
        issues
    }

    /// Returns a codebook where categories `a` and `b` are replaced by one
    /// category `merged_id` holding both member sets. Taxonomy is taken from `a`.
    pub fn merge_categories(&self, a: &str, b: &str, merged_id: &str) -> Result<CodeBook, CodingError> {
        let first = self.category(a).ok_or_else(|| CodingError::UnknownCategory(a.into()))?;
        let second = self.category(b).ok_or_else(|| CodingError::UnknownCategory(b.into()))?;
        let merged = ExpressionCategory {
            id: merged_id.to_owned(),
            description: format!("{} / {}", first.description, second.description),
            member_distinct_ids: first
                .member_distinct_ids
                .union(&second.member_distinct_ids)
                .cloned()
                .collect(),
            origin_referents: first
                .origin_referents
                .union(&second.origin_referents)
                .cloned()
                .collect(),
            taxonomy: first.taxonomy.clone(),
        };
        let mut next = self.clone();
        next.categories.retain(|c| c.id != a && c.id != b);
        next.categories.push(merged);
        next.match_table = MatchTable::default();
        for (category, referent) in self.match_table.keys() {
            let groups = self
                .match_table
                .matching_groups(category, referent)
                .cloned()
                .unwrap_or_default();
            let target = if category == a || category == b {
                merged_id
            } else {
                category
            };
            next.match_table.insert(target, referent, groups);
        }
        Ok(next)
    }
}

/// Counts proposals per referent and category. Freeform clips are skipped;
/// every other clip must be assigned.
pub fn proposal_counts(codebook: &CodeBook, clips: &[MotionClip]) -> Result<ProposalCounts, CodingError> {
    let by_clip = codebook.clip_categories()?;
    let mut counts = ProposalCounts::new();
    for clip in clips {
        let Some(referent) = clip.referent_id() else {
            continue;
        };
        let category = by_clip
            .get(clip.id())
            .ok_or_else(|| CodingError::UnassignedClip(clip.id().to_owned()))?;
        *counts
            .entry(referent.to_owned())
            .or_default()
            .entry((*category).to_owned())
            .or_default() += 1;
    }
    Ok(counts)
}

/// Sums the counts of categories `a` and `b` into `merged_id`, per referent.
pub fn merge_counts(counts: &ProposalCounts, a: &str, b: &str, merged_id: &str) -> ProposalCounts {
    counts
        .iter()
        .map(|(referent, per)| {
            let mut out = BTreeMap::new();
            for (category, &n) in per {
                let key = if category == a || category == b {
                    merged_id
                } else {
                    category.as_str()
                };
                *out.entry(key.to_owned()).or_default() += n;
            }
            (referent.clone(), out)
        })
        .collect()
}

/// Matching and non-matching label counts `(c_plus, c_minus)` over the given
/// labelings, all of which belong to `category`.
pub fn count_matches(
    category: &str,
    referent: &str,
    labelings: &[ResponseLabeling],
    groups: &[LabelGroup],
    match_table: &MatchTable,
) -> Result<(u64, u64), CodingError> {
    let index: HashMap<&str, &str> = groups
        .iter()
        .flat_map(|g| g.member_labels.iter().map(move |l| (l.as_str(), g.group_id.as_str())))
        .collect();
    let matching = match_table.matching_groups(category, referent);
    let (mut plus, mut minus) = (0, 0);
    for label in labelings.iter().flat_map(|l| &l.labels) {
        let group = index
            .get(label.as_str())
            .ok_or_else(|| CodingError::UnresolvedLabel(label.clone()))?;
        if matching.is_some_and(|m| m.contains(*group)) {
            plus += 1;
        } else {
            minus += 1;
        }
    }
    Ok((plus, minus))
}

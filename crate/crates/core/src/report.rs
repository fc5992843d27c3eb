//! Table emitters for study results.
//!
//! Score tables follow a grid layout: one column per expression category,
//! each cell listing `referent=percent` entries in referent order.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::coding::{count_matches, CodeBook, CodingError, ProposalCounts, ResponseLabeling};
use crate::metrics::{
    agreement_summary, kruskal_wallis, occurrence_ratios, qra_ratio, round_percent_ratio, AgreementSummary, GroupSizes,
    KruskalWallis, MetricsError,
};
use crate::motion::{MotionClip, MotionError};
use crate::taxonomy::{distribution, Dimension, TaxonomyError, TaxonomyLabel};
use crate::verification::{ResponsesFile, StudyConfig, VerificationResponse};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReportError {
    #[error(transparent)]
    Coding(#[from] CodingError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Taxonomy(#[from] TaxonomyError),
    #[error(transparent)]
    Motion(#[from] MotionError),
    #[error("unknown report format `{0}`")]
    UnknownFormat(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Markdown,
    Json,
}

impl Format {
    pub fn parse(s: &str) -> Result<Self, ReportError> {
        match s {
            "csv" => Ok(Self::Csv),
            "md" | "markdown" => Ok(Self::Markdown),
            "json" => Ok(Self::Json),
            other => Err(ReportError::UnknownFormat(other.to_owned())),
        }
    }

    pub fn content_type(self) -> &'static str {
        match self {
            Self::Csv => "text/csv",
            Self::Markdown => "text/markdown",
            Self::Json => "application/json",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cell {
    pub referent: String,
    pub percent: u64,
    pub value: f64,
}

impl Cell {
    pub fn label(&self) -> String {
        format!("{}={}", self.referent, self.percent)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridTable {
    pub metric: String,
    pub columns: Vec<String>,
    pub cells: BTreeMap<String, Vec<Cell>>,
}

impl GridTable {
    fn new(metric: &str, columns: Vec<String>) -> Self {
        let cells = columns.iter().map(|c| (c.clone(), Vec::new())).collect();
        Self {
            metric: metric.to_owned(),
            columns,
            cells,
        }
    }

    fn push(&mut self, column: &str, cell: Cell) {
        let entries = self.cells.entry(column.to_owned()).or_default();
        if !self.columns.iter().any(|c| c == column) {
            self.columns.push(column.to_owned());
        }
        entries.push(cell);
        entries.sort_by(|a, b| a.referent.cmp(&b.referent));
    }

    pub fn cell(&self, column: &str, referent: &str) -> Option<&Cell> {
        self.cells.get(column)?.iter().find(|c| c.referent == referent)
    }

    /// Populated cells in column order.
    pub fn entries(&self) -> impl Iterator<Item = (&str, &Cell)> {
        self.columns
            .iter()
            .flat_map(move |col| self.cells[col].iter().map(move |c| (col.as_str(), c)))
    }

    fn rows(&self) -> Vec<Vec<String>> {
        let depth = self.cells.values().map(Vec::len).max().unwrap_or(0).max(1);
        (0..depth)
            .map(|i| {
                let mut row = vec![if i == 0 { self.metric.clone() } else { String::new() }];
                row.extend(
                    self.columns
                        .iter()
                        .map(|col| self.cells[col].get(i).map(Cell::label).unwrap_or_default()),
                );
                row
            })
            .collect()
    }

    fn header(&self) -> Vec<String> {
        std::iter::once(String::new())
            .chain(self.columns.iter().cloned())
            .collect()
    }

    pub fn to_csv(&self) -> String {
        render_csv(&self.header(), &self.rows())
    }

    pub fn to_markdown(&self) -> String {
        render_markdown(&self.header(), &self.rows())
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Csv => self.to_csv(),
            Format::Markdown => self.to_markdown(),
            Format::Json => crate::bundle::canonical_json(self),
        }
    }
}

fn render_csv(header: &[String], rows: &[Vec<String>]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
}

fn render_markdown(header: &[String], rows: &[Vec<String>]) -> String {
    let mut out = String::new();
    let line = |cells: &[String]| format!("| {} |\n", cells.join(" | "));
    out.push_str(&line(header));
    out.push_str(&line(&vec!["---".to_owned(); header.len()]));
    for row in rows {
        out.push_str(&line(row));
    }
    out
}

/// Occurrence scores per referent, laid out by category. `categories` fixes
/// the column order; categories absent from it are appended.
pub fn os_table(counts: &ProposalCounts, categories: &[String]) -> Result<GridTable, ReportError> {
    let mut table = GridTable::new("OS", categories.to_vec());
    for (referent, per_category) in counts {
        for (category, ratio) in occurrence_ratios(per_category)? {
            table.push(
                &category,
                Cell {
                    referent: referent.clone(),
                    percent: round_percent_ratio(ratio),
                    value: *ratio.numer() as f64 / *ratio.denom() as f64,
                },
            );
        }
    }
    Ok(table)
}

/// Responses not named in the exclusion list, in file order.
pub fn kept_responses(file: &ResponsesFile) -> Vec<&VerificationResponse> {
    let excluded: HashSet<&str> = file.exclusions.iter().map(|e| e.participant_id.as_str()).collect();
    file.responses
        .iter()
        .filter(|r| !excluded.contains(r.participant_id.as_str()))
        .collect()
}

/// Labelings of kept responses, grouped by the category each participant saw.
pub fn labelings_by_category(file: &ResponsesFile) -> BTreeMap<String, Vec<ResponseLabeling>> {
    let category: HashMap<&str, &str> = kept_responses(file)
        .into_iter()
        .map(|r| (r.participant_id.as_str(), r.category_id.as_str()))
        .collect();
    let mut out: BTreeMap<String, Vec<ResponseLabeling>> = BTreeMap::new();
    for labeling in &file.labelings {
        if let Some(c) = category.get(labeling.response_id.as_str()) {
            out.entry((*c).to_owned()).or_default().push(labeling.clone());
        }
    }
    out
}

/// Response accuracy for every (category, referent) pair of the match table.
pub fn qra_table(codebook: &CodeBook, responses: &ResponsesFile) -> Result<GridTable, ReportError> {
    let columns: Vec<String> = codebook.categories.iter().map(|c| c.id.clone()).collect();
    let mut table = GridTable::new("QRA", columns);
    let by_category = labelings_by_category(responses);
    for (category, referent) in codebook.match_table.keys() {
        let labelings = by_category.get(category).map(Vec::as_slice).unwrap_or_default();
        let (plus, minus) = count_matches(
            category,
            referent,
            labelings,
            &codebook.label_groups,
            &codebook.match_table,
        )?;
        let ratio = qra_ratio(plus, minus)?;
        table.push(
            category,
            Cell {
                referent: referent.to_owned(),
                percent: round_percent_ratio(ratio),
                value: *ratio.numer() as f64 / *ratio.denom() as f64,
            },
        );
    }
    Ok(table)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaxonomyTable {
    pub categories: usize,
    pub shares: BTreeMap<Dimension, BTreeMap<&'static str, f64>>,
}

impl TaxonomyTable {
    fn rows(&self) -> Vec<Vec<String>> {
        self.shares
            .iter()
            .flat_map(|(dim, shares)| {
                dim.categories().iter().map(move |cat| {
                    let share = shares.get(cat).copied().unwrap_or(0.0);
                    vec![
                        dim.name().to_owned(),
                        (*cat).to_owned(),
                        format!("{:.0}", share * self.categories as f64),
                        format!("{:.1}", share * 100.0),
                    ]
                })
            })
            .collect()
    }

    fn header() -> Vec<String> {
        ["dimension", "category", "count", "percent"].map(String::from).to_vec()
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Csv => render_csv(&Self::header(), &self.rows()),
            Format::Markdown => render_markdown(&Self::header(), &self.rows()),
            Format::Json => crate::bundle::canonical_json(self),
        }
    }
}

/// Taxonomy distribution over the coded expression categories.
pub fn taxonomy_table(codebook: &CodeBook) -> Result<TaxonomyTable, ReportError> {
    let labels: Vec<TaxonomyLabel> = codebook.categories.iter().map(|c| c.taxonomy.clone()).collect();
    Ok(TaxonomyTable {
        categories: labels.len(),
        shares: distribution(&labels)?,
    })
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    Some(if values.len().is_multiple_of(2) {
        (values[mid - 1] + values[mid]) / 2.0
    } else {
        values[mid]
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatteryItemSummary {
    pub key: String,
    pub reverse_scored: bool,
    /// Median reported value per category.
    pub medians: BTreeMap<String, f64>,
    /// Omnibus test across categories; absent when fewer than two categories have data.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kruskal_wallis: Option<KruskalWallis>,
}

/// Per-item medians of reported (reverse-transformed) slider values, with a
/// Kruskal-Wallis test across categories.
pub fn battery_summary(
    config: &StudyConfig,
    kept: &[&VerificationResponse],
) -> Result<Vec<BatteryItemSummary>, ReportError> {
    let mut per_category: BTreeMap<&str, Vec<Vec<u8>>> = BTreeMap::new();
    for r in kept {
        per_category
            .entry(r.category_id.as_str())
            .or_default()
            .push(config.reported_vas(&r.vas));
    }
    config
        .battery
        .iter()
        .enumerate()
        .map(|(i, item)| {
            let groups: BTreeMap<&str, Vec<f64>> = per_category
                .iter()
                .map(|(c, rows)| {
                    (
                        *c,
                        rows.iter().filter_map(|v| v.get(i)).map(|&x| f64::from(x)).collect(),
                    )
                })
                .collect();
            let medians = groups
                .iter()
                .filter_map(|(c, values)| median(&mut values.clone()).map(|m| ((*c).to_owned(), m)))
                .collect();
            let samples: Vec<Vec<f64>> = groups.into_values().filter(|v| !v.is_empty()).collect();
            let kruskal_wallis = if samples.len() >= 2 {
                Some(kruskal_wallis(&samples)?)
            } else {
                None
            };
            Ok(BatteryItemSummary {
                key: item.key.clone(),
                reverse_scored: item.reverse_scored,
                medians,
                kruskal_wallis,
            })
        })
        .collect()
}

/// Agreement metrics per referent, grouping proposals by distinct expression.
pub fn agreement_by_referent(
    codebook: &CodeBook,
    clips: &[MotionClip],
) -> Result<BTreeMap<String, AgreementSummary>, ReportError> {
    let distinct: HashMap<&str, &str> = codebook
        .assignments
        .iter()
        .map(|a| (a.clip_id.as_str(), a.distinct_id.as_str()))
        .collect();
    let mut groups: BTreeMap<&str, BTreeMap<&str, u64>> = BTreeMap::new();
    for clip in clips {
        let Some(referent) = clip.referent_id() else {
            continue;
        };
        let d = distinct
            .get(clip.id())
            .ok_or_else(|| CodingError::UnassignedClip(clip.id().to_owned()))?;
        *groups.entry(referent).or_default().entry(d).or_default() += 1;
    }
    groups
        .into_iter()
        .map(|(referent, sizes)| {
            let g = GroupSizes::new(sizes.into_values().collect())?;
            Ok((referent.to_owned(), agreement_summary(&g)))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyReport {
    pub os: GridTable,
    pub qra: GridTable,
    pub taxonomy: TaxonomyTable,
    pub battery: Vec<BatteryItemSummary>,
    pub agreement: BTreeMap<String, AgreementSummary>,
    pub responses_kept: usize,
    pub responses_excluded: usize,
    pub labels_total: usize,
}

impl StudyReport {
    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        out.push_str("# Study report\n\n## Occurrence scores (%)\n\n");
        out.push_str(&self.os.to_markdown());
        out.push_str("\n## Response accuracy (%)\n\n");
        out.push_str(&self.qra.to_markdown());
        let _ = writeln!(
            out,
            "\n{} responses kept, {} excluded, {} labels.",
            self.responses_kept, self.responses_excluded, self.labels_total
        );
        out.push_str("\n## Taxonomy distribution\n\n");
        out.push_str(&self.taxonomy.render(Format::Markdown));
        out.push_str("\n## Battery medians (reverse-scored items transformed)\n\n");
        let categories: BTreeSet<&String> = self.battery.iter().flat_map(|b| b.medians.keys()).collect();
        let mut header = vec!["item".to_owned()];
        header.extend(categories.iter().map(|c| (*c).clone()));
        header.extend(["H".to_owned(), "p".to_owned()]);
        let rows: Vec<Vec<String>> = self
            .battery
            .iter()
            .map(|b| {
                let mut row = vec![if b.reverse_scored {
                    format!("{} (reversed)", b.key)
                } else {
                    b.key.clone()
                }];
                row.extend(
                    categories
                        .iter()
                        .map(|c| b.medians.get(*c).map(|m| format!("{m:.1}")).unwrap_or_default()),
                );
                match &b.kruskal_wallis {
                    Some(kw) => row.extend([format!("{:.2}", kw.h), format!("{:.4}", kw.p)]),
                    None => row.extend([String::new(), String::new()]),
                }
                row
            })
            .collect();
        out.push_str(&render_markdown(&header, &rows));
        out.push_str("\n## Agreement by referent\n\n");
        let header = [
            "referent",
            "proposals",
            "A",
            "AR",
            "max consensus",
            "consensus-distinct",
        ]
        .map(String::from)
        .to_vec();
        let rows: Vec<Vec<String>> = self
            .agreement
            .iter()
            .map(|(r, s)| {
                vec![
                    r.clone(),
                    s.proposals.to_string(),
                    format!("{:.3}", s.agreement_score),
                    s.agreement_rate.map(|v| format!("{v:.3}")).unwrap_or_default(),
                    format!("{:.3}", s.max_consensus),
                    format!("{:.3}", s.consensus_distinct_ratio),
                ]
            })
            .collect();
        out.push_str(&render_markdown(&header, &rows));
        out
    }
}

/// Full report; a pure function of the bundle.
pub fn study_report(bundle: &crate::bundle::StudyBundle) -> Result<StudyReport, ReportError> {
    let clips = bundle.motion_clips()?;
    let codes = &bundle.codes;
    let counts = crate::coding::proposal_counts(codes, &clips)?;
    let columns: Vec<String> = codes.categories.iter().map(|c| c.id.clone()).collect();
    let kept = kept_responses(&bundle.responses);
    let by_category = labelings_by_category(&bundle.responses);
    Ok(StudyReport {
        os: os_table(&counts, &columns)?,
        qra: qra_table(codes, &bundle.responses)?,
        taxonomy: taxonomy_table(codes)?,
        battery: battery_summary(&bundle.study, &kept)?,
        agreement: agreement_by_referent(codes, &clips)?,
        responses_kept: kept.len(),
        responses_excluded: bundle.responses.responses.len() - kept.len(),
        labels_total: by_category.values().flatten().map(|l| l.labels.len()).sum(),
    })
}

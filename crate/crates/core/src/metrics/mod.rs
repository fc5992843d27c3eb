//! Understandability and agreement metrics.
//!
//! * occurrence score: share of a referent's proposals that fall into one
//!   expression category, `|E_j| / |R_i|` with `|R_i|` the referent's total
//!   proposals;
//! * qualitative response accuracy: matching labels over all labels,
//!   `C+ / (C+ + C-)`;
//! * agreement score `A = Σ (|P_i| / |P|)²` (Wobbrock et al., 2009) and agreement
//!   rate `AR = Σ C(|P_i|, 2) / C(|P|, 2)` (Vatavu & Wobbrock, 2015), kept for
//!   comparison with the elicitation literature;
//! * max-consensus and consensus-distinct ratio (Morris, 2012);
//! * Cronbach's alpha for item batteries.
//!
//! The nonparametric tests live in [`stats`].

pub mod stats;

use std::collections::BTreeMap;

use num_rational::Ratio;
use serde::Serialize;
use thiserror::Error;

pub use stats::{kruskal_wallis, mann_whitney_u, mann_whitney_u_with, KruskalWallis, MannWhitney, MwuMethod};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("no proposals to score")]
    EmptyCounts,
    #[error("category `{0}` has a zero count")]
    ZeroCount(String),
    #[error("no labels: c_plus + c_minus must be at least 1")]
    NoLabels,
    #[error("group sizes must be non-empty and every size at least 1")]
    InvalidGroupSizes,
    #[error("agreement rate needs at least 2 proposals, got {0}")]
    TooFewProposals(u64),
    #[error("cronbach's alpha needs at least 2 items and 2 participants")]
    TooFewObservations,
    #[error("row {0} has a different number of items")]
    RaggedRows(usize),
    #[error("variance of row totals is zero")]
    DegenerateVariance,
    #[error("sample {0} is empty")]
    EmptySample(usize),
    #[error("at least 2 groups are required, got {0}")]
    TooFewGroups(usize),
    #[error("at least 3 observations are required, got {0}")]
    TooFewTotal(usize),
    #[error("exact test requires tie-free samples")]
    ExactWithTies,
    #[error("sample contains a non-finite value")]
    NonFinite,
}

/// Exact occurrence score per category.
pub fn occurrence_ratios(counts: &BTreeMap<String, u64>) -> Result<BTreeMap<String, Ratio<u64>>, MetricsError> {
    if counts.is_empty() {
        return Err(MetricsError::EmptyCounts);
    }
    if let Some((category, _)) = counts.iter().find(|(_, &n)| n == 0) {
        return Err(MetricsError::ZeroCount(category.clone()));
    }
    let total: u64 = counts.values().sum();
    Ok(counts.iter().map(|(c, &n)| (c.clone(), Ratio::new(n, total))).collect())
}

/// Occurrence score per category: `count / total`.
pub fn occurrence_score(counts: &BTreeMap<String, u64>) -> Result<BTreeMap<String, f64>, MetricsError> {
    let total: u64 = counts.values().sum();
    occurrence_ratios(counts)?;
    Ok(counts
        .iter()
        .map(|(c, &n)| (c.clone(), n as f64 / total as f64))
        .collect())
}

pub fn qra_ratio(c_plus: u64, c_minus: u64) -> Result<Ratio<u64>, MetricsError> {
    let total = c_plus + c_minus;
    if total == 0 {
        return Err(MetricsError::NoLabels);
    }
    Ok(Ratio::new(c_plus, total))
}

/// Qualitative response accuracy: `c_plus / (c_plus + c_minus)`.
pub fn qra(c_plus: u64, c_minus: u64) -> Result<f64, MetricsError> {
    qra_ratio(c_plus, c_minus)?;
    Ok(c_plus as f64 / (c_plus + c_minus) as f64)
}

/// Sizes of the identical-proposal groups for one referent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GroupSizes {
    sizes: Vec<u64>,
}

impl GroupSizes {
    pub fn new(sizes: Vec<u64>) -> Result<Self, MetricsError> {
        if sizes.is_empty() || sizes.contains(&0) {
            return Err(MetricsError::InvalidGroupSizes);
        }
        Ok(Self { sizes })
    }

    pub fn sizes(&self) -> &[u64] {
        &self.sizes
    }

    pub fn total(&self) -> u64 {
        self.sizes.iter().sum()
    }
}

impl TryFrom<&BTreeMap<String, u64>> for GroupSizes {
    type Error = MetricsError;

    fn try_from(counts: &BTreeMap<String, u64>) -> Result<Self, Self::Error> {
        Self::new(counts.values().copied().collect())
    }
}

pub fn agreement_score(g: &GroupSizes) -> f64 {
    let total = g.total() as f64;
    g.sizes.iter().map(|&s| (s as f64 / total).powi(2)).sum()
}

pub fn agreement_rate(g: &GroupSizes) -> Result<f64, MetricsError> {
    let total = g.total();
    if total < 2 {
        return Err(MetricsError::TooFewProposals(total));
    }
    let pairs: u64 = g.sizes.iter().map(|&s| s * (s - 1)).sum();
    Ok(pairs as f64 / (total * (total - 1)) as f64)
}

pub fn max_consensus(g: &GroupSizes) -> f64 {
    let max = g.sizes.iter().copied().max().unwrap_or(0);
    max as f64 / g.total() as f64
}

pub const DEFAULT_CONSENSUS_THRESHOLD: u64 = 2;

/// Share of groups whose size reaches `threshold`.
pub fn consensus_distinct_ratio(g: &GroupSizes, threshold: u64) -> f64 {
    let reaching = g.sizes.iter().filter(|&&s| s >= threshold).count();
    reaching as f64 / g.sizes.len() as f64
}

/// Referent-level agreement summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgreementSummary {
    pub proposals: u64,
    pub agreement_score: f64,
    /// Absent when fewer than two proposals exist.
    pub agreement_rate: Option<f64>,
    pub max_consensus: f64,
    pub consensus_distinct_ratio: f64,
}

pub fn agreement_summary(g: &GroupSizes) -> AgreementSummary {
    AgreementSummary {
        proposals: g.total(),
        agreement_score: agreement_score(g),
        agreement_rate: agreement_rate(g).ok(),
        max_consensus: max_consensus(g),
        consensus_distinct_ratio: consensus_distinct_ratio(g, DEFAULT_CONSENSUS_THRESHOLD),
    }
}

fn sample_variance(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    values.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

/// Cronbach's alpha over a participants × items matrix.
pub fn cronbach_alpha(rows: &[Vec<f64>]) -> Result<f64, MetricsError> {
    let k = rows.first().map_or(0, Vec::len);
    if rows.len() < 2 || k < 2 {
        return Err(MetricsError::TooFewObservations);
    }
    if let Some(i) = rows.iter().position(|r| r.len() != k) {
        return Err(MetricsError::RaggedRows(i));
    }
    let item_variances: f64 = (0..k).map(|j| sample_variance(rows.iter().map(move |r| r[j]))).sum();
    let total_variance = sample_variance(rows.iter().map(|r| r.iter().sum::<f64>()));
    if total_variance == 0.0 || !total_variance.is_finite() {
        return Err(MetricsError::DegenerateVariance);
    }
    let k = k as f64;
    Ok(k / (k - 1.0) * (1.0 - item_variances / total_variance))
}

/// Integer percent of `num / den`, rounding ties to even.
pub fn round_percent(num: u64, den: u64) -> u64 {
    assert!(den > 0, "percent of an empty denominator");
    let scaled = 100 * num;
    let (q, r) = (scaled / den, scaled % den);
    match (2 * r).cmp(&den) {
        std::cmp::Ordering::Less => q,
        std::cmp::Ordering::Greater => q + 1,
        std::cmp::Ordering::Equal => q + (q % 2),
    }
}

pub fn round_percent_ratio(r: Ratio<u64>) -> u64 {
    round_percent(*r.numer(), *r.denom())
}
